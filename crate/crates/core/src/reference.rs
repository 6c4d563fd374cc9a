//! Strang split-step Fourier solution of `iε ∂ₜψ = (p̂²/2 + V)ψ` on a periodic grid.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, DEFAULT_POINT_BUDGET};
use crate::par;
use crate::potentials::PotentialModel;
use crate::spectral::Spectral;
use crate::wave::{self, Observable, WaveFunction};

/// Norm drift that aborts a propagation.
pub const NORM_DRIFT_LIMIT: f64 = 1e-9;
/// Magic bytes of the binary snapshot format.
pub const SNAPSHOT_MAGIC: &[u8; 8] = b"GWPSNAP1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: Grid,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub refine: bool,
    /// Absolute tolerance on tracked expectation values between refinements.
    pub observable_tol: f64,
    pub max_refinements: usize,
    pub point_budget: usize,
}

impl SolverConfig {
    pub fn new(grid: Grid, dt: f64, t_end: f64, snapshot_times: Vec<f64>) -> Self {
        Self {
            grid,
            dt,
            t_end,
            snapshot_times,
            refine: true,
            observable_tol: 1e-8,
            max_refinements: 4,
            point_budget: DEFAULT_POINT_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_end >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "solver needs dt > 0 and t_end >= 0 (dt = {}, t_end = {})",
                self.dt, self.t_end
            )));
        }
        let t = &self.snapshot_times;
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("snapshot times must increase".into()));
        }
        if t.iter().any(|&s| s < 0.0 || s > self.t_end * (1.0 + 1e-12)) {
            return Err(Error::InvalidConfig(format!(
                "snapshot times must lie in [0, {}]",
                self.t_end
            )));
        }
        let min_gap = t
            .windows(2)
            .map(|w| w[1] - w[0])
            .chain(t.first().copied().filter(|&s| s > 0.0))
            .fold(f64::INFINITY, f64::min);
        if self.dt > min_gap * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "dt = {} exceeds the snapshot spacing {min_gap}",
                self.dt
            )));
        }
        if !(self.observable_tol > 0.0) {
            return Err(Error::InvalidConfig("observable_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Precomputed phase factors for one step size.
pub struct Propagator {
    spectral: Spectral,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    dt: f64,
}

impl Propagator {
    pub fn new(grid: &Grid, pot: &dyn PotentialModel, dt: f64, eps: f64) -> Self {
        let spectral = Spectral::new(grid);
        let d = grid.dim();
        let half_potential = par::collect(grid.len(), |i| {
            let mut x = [0.0; 3];
            grid.node(i, &mut x[..d]);
            Complex64::from_polar(1.0, -pot.value(&x[..d]) * dt / (2.0 * eps))
        });
        let kinetic = par::collect(grid.len(), |i| {
            Complex64::from_polar(1.0, -eps * spectral.k_squared(i) * dt / 2.0)
        });
        Self {
            spectral,
            half_potential,
            kinetic,
            dt,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// One Strang step in place.
    pub fn step(&self, values: &mut [Complex64]) {
        let hp = &self.half_potential;
        par::update(values, |i, v| *v *= hp[i]);
        self.spectral.forward(values);
        let k = &self.kinetic;
        par::update(values, |i, v| *v *= k[i]);
        self.spectral.inverse(values);
        par::update(values, |i, v| *v *= hp[i]);
    }

    /// `n` steps with the inner potential half-steps merged.
    pub fn steps(&self, values: &mut [Complex64], n: usize) {
        if n == 0 {
            return;
        }
        let hp = &self.half_potential;
        let k = &self.kinetic;
        par::update(values, |i, v| *v *= hp[i]);
        for s in 0..n {
            self.spectral.forward(values);
            par::update(values, |i, v| *v *= k[i]);
            self.spectral.inverse(values);
            if s + 1 < n {
                par::update(values, |i, v| *v *= hp[i] * hp[i]);
            }
        }
        par::update(values, |i, v| *v *= hp[i]);
    }
}

/// A single Strang step: potential half-phase, kinetic phase, potential half-phase.
pub fn strang_step(psi: &WaveFunction, pot: &dyn PotentialModel, dt: f64) -> WaveFunction {
    let prop = Propagator::new(psi.grid(), pot, dt, psi.eps());
    let mut values = psi.values().to_vec();
    prop.step(&mut values);
    psi.with_values(values)
}

/// States of the reference solution at the requested times.
#[derive(Debug, Clone)]
pub struct Snapshots {
    pub times: Vec<f64>,
    pub states: Vec<WaveFunction>,
    /// Largest step actually taken.
    pub dt: f64,
}

impl Snapshots {
    pub fn grid(&self) -> Option<&Grid> {
        self.states.first().map(|s| s.grid())
    }

    /// Position, momentum and energy expectations per snapshot.
    pub fn observables(&self, pot: &dyn PotentialModel) -> Result<Vec<Vec<f64>>> {
        let Some(grid) = self.grid() else {
            return Ok(Vec::new());
        };
        let spectral = Spectral::new(grid);
        let d = grid.dim();
        self.states
            .iter()
            .map(|psi| {
                let mut row = Vec::with_capacity(2 * d + 1);
                for i in 0..d {
                    row.push(wave::expectation_with(&spectral, Observable::Position(i), psi, pot)?);
                }
                for i in 0..d {
                    row.push(wave::expectation_with(&spectral, Observable::Momentum(i), psi, pot)?);
                }
                row.push(wave::expectation_with(&spectral, Observable::Energy, psi, pot)?);
                Ok(row)
            })
            .collect()
    }

    /// Long-format CSV: `t,x_0..x_{d-1},re,im`, one row per snapshot and node.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let d = self.grid().map(|g| g.dim()).unwrap_or(0);
        let mut header: Vec<String> = vec!["t".into()];
        header.extend((0..d).map(|a| format!("x_{a}")));
        header.extend(["re".into(), "im".into()]);
        writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
        let mut x = vec![0.0; d];
        for (t, psi) in self.times.iter().zip(&self.states) {
            for (i, v) in psi.values().iter().enumerate() {
                psi.grid().node(i, &mut x);
                let coords: Vec<String> = x.iter().map(|c| format!("{c:.17e}")).collect();
                writeln!(w, "{t:.17e},{},{:.17e},{:.17e}", coords.join(","), v.re, v.im)
                    .map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Binary dump, all numbers little-endian:
    ///
    /// ```text
    /// magic      8 bytes  "GWPSNAP1"
    /// dim        u32
    /// per axis   f64 center, f64 half_width, u64 points
    /// eps        f64
    /// count      u64
    /// per snapshot: f64 t, then grid.len() pairs (f64 re, f64 im) in row-major order
    /// ```
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(SNAPSHOT_MAGIC).map_err(io)?;
        let Some(grid) = self.grid() else {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "no snapshots to write".into(),
            });
        };
        w.write_all(&(grid.dim() as u32).to_le_bytes()).map_err(io)?;
        for a in 0..grid.dim() {
            w.write_all(&grid.center()[a].to_le_bytes()).map_err(io)?;
            w.write_all(&grid.half_width()[a].to_le_bytes()).map_err(io)?;
            w.write_all(&(grid.points()[a] as u64).to_le_bytes()).map_err(io)?;
        }
        w.write_all(&self.states[0].eps().to_le_bytes()).map_err(io)?;
        w.write_all(&(self.times.len() as u64).to_le_bytes()).map_err(io)?;
        for (t, psi) in self.times.iter().zip(&self.states) {
            w.write_all(&t.to_le_bytes()).map_err(io)?;
            for v in psi.values() {
                w.write_all(&v.re.to_le_bytes()).map_err(io)?;
                w.write_all(&v.im.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Reads the format written by [`Snapshots::write_binary`].
    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Format {
            path: path.to_path_buf(),
            message: m.to_string(),
        };
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated file"))?;
            pos += n;
            Ok(s)
        };
        if take(8)? != SNAPSHOT_MAGIC {
            return Err(bad("bad magic"));
        }
        let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().expect("8 bytes"));
        let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().expect("8 bytes"));
        let dim = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let (mut center, mut half, mut points) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..dim {
            center.push(f64_at(take(8)?));
            half.push(f64_at(take(8)?));
            points.push(u64_at(take(8)?) as usize);
        }
        let grid = Grid::new(center, half, points)?;
        let eps = f64_at(take(8)?);
        let count = u64_at(take(8)?) as usize;
        let mut times = Vec::with_capacity(count);
        let mut states = Vec::with_capacity(count);
        for _ in 0..count {
            times.push(f64_at(take(8)?));
            let mut values = Vec::with_capacity(grid.len());
            for _ in 0..grid.len() {
                let re = f64_at(take(8)?);
                let im = f64_at(take(8)?);
                values.push(Complex64::new(re, im));
            }
            states.push(WaveFunction::new(grid.clone(), values, eps)?);
        }
        Ok(Self {
            times,
            states,
            dt: f64::NAN,
        })
    }
}

/// Propagates `psi0` through the snapshot times of `cfg` (on `psi0`'s grid).
/// Each interval between snapshots is split into equal steps no longer than `cfg.dt`.
pub fn propagate(
    psi0: &WaveFunction,
    pot: &dyn PotentialModel,
    cfg: &SolverConfig,
) -> Result<Snapshots> {
    cfg.validate()?;
    let grid = psi0.grid();
    let norm0 = wave::l2_norm(psi0);
    let mut values = psi0.values().to_vec();
    let mut cache: Option<Propagator> = None;
    let mut t = 0.0;
    let mut times = Vec::with_capacity(cfg.snapshot_times.len());
    let mut states = Vec::with_capacity(cfg.snapshot_times.len());
    let mut dt_used: f64 = 0.0;
    for &target in &cfg.snapshot_times {
        let span = target - t;
        if span > 0.0 {
            let n = (span / cfg.dt - 1e-9).ceil().max(1.0) as usize;
            let h = span / n as f64;
            dt_used = dt_used.max(h);
            let reuse = cache.as_ref().is_some_and(|p| p.dt() == h);
            if !reuse {
                cache = Some(Propagator::new(grid, pot, h, psi0.eps()));
            }
            cache.as_ref().expect("propagator built").steps(&mut values, n);
            t = target;
        }
        let psi = psi0.with_values(values.clone());
        let drift = (wave::l2_norm(&psi) - norm0).abs();
        if drift > NORM_DRIFT_LIMIT || !drift.is_finite() {
            return Err(Error::NormDrift { drift, t: target });
        }
        times.push(target);
        states.push(psi);
    }
    Ok(Snapshots {
        times,
        states,
        dt: dt_used,
    })
}

/// Outcome of [`self_refine`].
#[derive(Debug, Clone)]
pub struct Refined {
    pub snapshots: Snapshots,
    /// Largest change of a tracked expectation in the last refinement.
    pub achieved_tol: f64,
    pub grid: Grid,
    pub dt: f64,
    pub refinements: usize,
}

/// Repeatedly halves `dt` and doubles the points per axis until all position,
/// momentum and energy expectations at all snapshots change by less than
/// `cfg.observable_tol`. `initial` samples the initial state on a given grid.
pub fn self_refine<F>(initial: F, pot: &dyn PotentialModel, cfg: &SolverConfig) -> Result<Refined>
where
    F: Fn(&Grid) -> Result<WaveFunction>,
{
    cfg.validate()?;
    let mut grid = cfg.grid.clone();
    let mut run_cfg = cfg.clone();
    let mut coarse = propagate(&initial(&grid)?, pot, &run_cfg)?;
    let mut coarse_obs = coarse.observables(pot)?;
    if !cfg.refine {
        return Ok(Refined {
            snapshots: coarse,
            achieved_tol: f64::NAN,
            grid,
            dt: cfg.dt,
            refinements: 0,
        });
    }
    let mut change = f64::INFINITY;
    for level in 1..=cfg.max_refinements {
        grid = grid.refined(2)?;
        if grid.len() > cfg.point_budget {
            break;
        }
        run_cfg.dt *= 0.5;
        run_cfg.grid = grid.clone();
        let fine = propagate(&initial(&grid)?, pot, &run_cfg)?;
        let fine_obs = fine.observables(pot)?;
        change = coarse_obs
            .iter()
            .flatten()
            .zip(fine_obs.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        log::debug!("refinement {level}: {grid}, dt = {:e}, change = {change:e}", run_cfg.dt);
        coarse = fine;
        coarse_obs = fine_obs;
        if change < cfg.observable_tol {
            return Ok(Refined {
                snapshots: coarse,
                achieved_tol: change,
                grid,
                dt: run_cfg.dt,
                refinements: level,
            });
        }
    }
    Err(Error::RefinementBudget {
        iterations: cfg.max_refinements,
        achieved: change,
    })
}
