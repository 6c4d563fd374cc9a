//! Experiment orchestration: both parameter flows against the reference solver,
//! ε-sweeps, slope fits and report files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis;
use crate::dynamics::{self, Flow, IntegratorConfig, PacketParams, Scheme, Trajectory};
use crate::error::{Error, Result, ResultExt};
use crate::grid::{Grid, PacketExtent, DEFAULT_POINT_BUDGET};
use crate::matrix::{self, c, CMatrix};
use crate::par;
use crate::potentials::{Potential, PotentialModel};
use crate::reference::{self, Refined, SolverConfig};
use crate::spectral::Spectral;
use crate::wave::{self, WaveFunction};

pub mod checks;
pub mod svg;

/// Errors at or below this value are excluded from slope fits.
pub const FIT_FLOOR: f64 = 1e-13;
/// Fits with a lower coefficient of determination are flagged unreliable.
pub const MIN_R_SQUARED: f64 = 0.98;
/// Accuracy targets derived from measured errors are never set below this.
pub const NOISE_FLOOR: f64 = 1e-12;
/// Largest number of step halvings for the parameter ODEs.
pub const MAX_ODE_HALVINGS: usize = 14;

/// Initial Gaussian; `Q`, `P` are row-major lists of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialPacket {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q_mat: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p_mat: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(rename = "S", default)]
    pub s: f64,
}

fn parse_matrix(rows: &[Vec<[f64; 2]>], d: usize, name: &str) -> Result<CMatrix> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidConfig(format!("{name} must be {d}x{d}")));
    }
    Ok(CMatrix::from_fn(d, d, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

impl InitialPacket {
    /// Parameters at `eps`; `Q` defaults to `I` and `P` to `iI`.
    pub fn to_params(&self, eps: f64) -> Result<PacketParams> {
        let d = self.q.len();
        let q_mat = match &self.q_mat {
            Some(m) => parse_matrix(m, d, "Q")?,
            None => matrix::identity(d),
        };
        let p_mat = match &self.p_mat {
            Some(m) => parse_matrix(m, d, "P")?,
            None => matrix::scaled_identity(d, c(0.0, 1.0)),
        };
        PacketParams::new(self.q.clone(), self.p.clone(), q_mat, p_mat, self.s, eps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub scheme: Scheme,
    /// Initial step; halved until the self-check passes.
    pub dt: f64,
    /// Allowed ODE error as a fraction of the smallest expectation error.
    pub refine_until: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            scheme: Scheme::StormerVerlet,
            dt: 1e-3,
            refine_until: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub dt: f64,
    pub refine: bool,
    pub observable_tol: f64,
    pub max_refinements: usize,
    pub point_budget: usize,
    /// Lower bound on points per axis for the initial grid.
    #[serde(default)]
    pub min_points: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            refine: true,
            observable_tol: 1e-8,
            max_refinements: 4,
            point_budget: DEFAULT_POINT_BUDGET,
            min_points: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub potential: Potential,
    pub initial: InitialPacket,
    pub eps_list: Vec<f64>,
    pub t_end: f64,
    /// Number of snapshot intervals; samples are taken at `k·t_end/snapshots`.
    pub snapshots: usize,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub seed_label: String,
}

fn default_output_dir() -> String {
    "out".to_string()
}

impl Default for ExperimentConfig {
    /// Torsional potential in one dimension, `q₀ = 1`, `p₀ = 0`, `Q₀ = 1`, `P₀ = i`,
    /// `ε = 2⁻⁴ … 2⁻⁹`, `t_end = 1`.
    fn default() -> Self {
        Self {
            dim: 1,
            potential: Potential::Torsional { dim: 1 },
            initial: InitialPacket {
                q: vec![1.0],
                p: vec![0.0],
                q_mat: None,
                p_mat: None,
                s: 0.0,
            },
            eps_list: (4..=9).map(|k| 0.5f64.powi(k)).collect(),
            t_end: 1.0,
            snapshots: 20,
            integrator: IntegratorSettings::default(),
            solver: SolverSettings::default(),
            output_dir: default_output_dir(),
            seed_label: "default".to_string(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate()?;
        if self.potential.dim() != self.dim || self.initial.q.len() != self.dim {
            return Err(Error::InvalidConfig(format!(
                "dimension {} disagrees with the potential ({}) or q ({})",
                self.dim,
                self.potential.dim(),
                self.initial.q.len()
            )));
        }
        if self.eps_list.is_empty() || self.eps_list.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::InvalidConfig("eps_list must hold positive values".into()));
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidConfig("eps_list must be strictly decreasing".into()));
        }
        if !(self.t_end > 0.0) || self.snapshots == 0 {
            return Err(Error::InvalidConfig("need t_end > 0 and snapshots >= 1".into()));
        }
        let i = &self.integrator;
        if !(i.dt > 0.0 && i.dt <= self.t_end && i.refine_until > 0.0 && i.refine_until < 1.0) {
            return Err(Error::InvalidConfig(
                "integrator needs 0 < dt <= t_end and refine_until in (0, 1)".into(),
            ));
        }
        if !(self.solver.dt > 0.0 && self.solver.observable_tol > 0.0) {
            return Err(Error::InvalidConfig("solver needs dt > 0 and observable_tol > 0".into()));
        }
        self.initial.to_params(self.eps_list[0]).map(|_| ())
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        (0..=self.snapshots)
            .map(|k| self.t_end * k as f64 / self.snapshots as f64)
            .collect()
    }

    /// Canonical JSON: object keys sorted, no insignificant whitespace.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        canonical(&value)
    }

    /// SHA-256 of [`ExperimentConfig::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn canonical(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let sorted: BTreeMap<&String, &Value> = map.iter().collect();
            let parts: Vec<String> = sorted
                .into_iter()
                .map(|(k, v)| format!("{}:{}", Value::String(k.clone()), canonical(v)))
                .collect();
            format!("{{{}}}", parts.join(","))
        }
        Value::Array(items) => {
            format!("[{}]", items.iter().map(canonical).collect::<Vec<_>>().join(","))
        }
        other => other.to_string(),
    }
}

/// Errors of one flow at one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowErrors {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    /// Signed `⟨Ĥ⟩ − Hᵉ` (corrected) or `⟨Ĥ⟩ − H⁰` (classical).
    pub energy_gap: f64,
    /// `‖ψ − φ₀‖`.
    pub wave: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub t: f64,
    pub expect_x: Vec<f64>,
    pub expect_p: Vec<f64>,
    pub energy: f64,
    pub classical: FlowErrors,
    pub corrected: FlowErrors,
}

/// Per-time comparison at one ε.
#[derive(Debug, Clone)]
pub struct CompareTable {
    pub eps: f64,
    pub rows: Vec<CompareRow>,
    pub achieved_tol: f64,
    /// Last step-halving difference of the parameter ODEs.
    pub ode_tol: f64,
    pub ode_dt: f64,
    pub solver_dt: f64,
    pub grid: Grid,
}

/// Trajectories and reference solution for one ε.
pub struct Prepared {
    pub eps: f64,
    pub times: Vec<f64>,
    pub classical: Trajectory,
    pub corrected: Trajectory,
    pub reference: Refined,
    pub ode_dt: f64,
    pub ode_tol: f64,
}

fn trajectories(
    cfg: &ExperimentConfig,
    params: &PacketParams,
    times: &[f64],
    abs_tol: f64,
    start_dt: f64,
) -> Result<(Trajectory, Trajectory, f64, f64)> {
    let icfg = IntegratorConfig {
        scheme: cfg.integrator.scheme,
        dt: start_dt,
        t_end: cfg.t_end,
        refine_until: cfg.integrator.refine_until,
    };
    let pot = &cfg.potential;
    let (cl, dt_a, diff_a) =
        dynamics::integrate_refined(params, Flow::Classical, pot, &icfg, times, abs_tol, MAX_ODE_HALVINGS)
            .context(|| "classical flow".to_string())?;
    let (co, dt_b, diff_b) =
        dynamics::integrate_refined(params, Flow::Corrected, pot, &icfg, times, abs_tol, MAX_ODE_HALVINGS)
            .context(|| "corrected flow".to_string())?;
    Ok((cl, co, dt_a.min(dt_b), diff_a.max(diff_b)))
}

/// Grid sized for both trajectories by the packet heuristic.
pub fn grid_for_trajectories(
    eps: f64,
    trajs: &[&Trajectory],
    budget: usize,
    min_points: usize,
) -> Result<Grid> {
    let d = trajs[0].states[0].dim();
    let mut extent = PacketExtent::empty(d);
    for tr in trajs {
        for s in &tr.states {
            extent.include(
                &s.q,
                &s.p,
                matrix::spectral_norm(&s.q_mat),
                matrix::spectral_norm(&s.p_mat),
            );
        }
    }
    let g = Grid::sized_for(&extent, eps, budget)?;
    if g.points().iter().all(|&n| n >= min_points) {
        return Ok(g);
    }
    let points = g
        .points()
        .iter()
        .map(|&n| n.max(min_points.next_power_of_two()))
        .collect();
    Grid::with_budget(g.center().to_vec(), g.half_width().to_vec(), points, budget)
}

/// Evolves both flows and the reference solution from the same Gaussian.
pub fn prepare(cfg: &ExperimentConfig, eps: f64) -> Result<Prepared> {
    cfg.validate()?;
    let params = cfg.initial.to_params(eps)?;
    let times = cfg.snapshot_times();
    let (classical, corrected, ode_dt, ode_tol) =
        trajectories(cfg, &params, &times, 1e-10, cfg.integrator.dt)?;
    let grid = grid_for_trajectories(
        eps,
        &[&classical, &corrected],
        cfg.solver.point_budget,
        cfg.solver.min_points,
    )?;
    let mut scfg = SolverConfig::new(grid, cfg.solver.dt, cfg.t_end, times.clone());
    scfg.refine = cfg.solver.refine;
    scfg.observable_tol = cfg.solver.observable_tol;
    scfg.max_refinements = cfg.solver.max_refinements;
    scfg.point_budget = cfg.solver.point_budget;
    let reference = reference::self_refine(|g| basis::eval_phi0(&params, g), &cfg.potential, &scfg)
        .context(|| format!("reference solution at eps = {eps:e}"))?;
    Ok(Prepared {
        eps,
        times,
        classical,
        corrected,
        reference,
        ode_dt,
        ode_tol,
    })
}

fn flow_errors(
    state: &PacketParams,
    flow: Flow,
    obs: &[f64],
    psi: &WaveFunction,
    pot: &Potential,
) -> Result<FlowErrors> {
    let d = state.dim();
    let phi = basis::eval_phi0(state, psi.grid())?;
    let h = match flow {
        Flow::Classical => dynamics::hamiltonian_classical(state, pot),
        Flow::Corrected => dynamics::hamiltonian_eps(state, pot),
    };
    Ok(FlowErrors {
        position: (0..d).map(|i| (state.q[i] - obs[i]).abs()).collect(),
        momentum: (0..d).map(|i| (state.p[i] - obs[d + i]).abs()).collect(),
        energy_gap: obs[2 * d] - h,
        wave: wave::distance(psi, &phi)?,
    })
}

fn table_from(cfg: &ExperimentConfig, prep: &Prepared) -> Result<CompareTable> {
    let pot = &cfg.potential;
    let snaps = &prep.reference.snapshots;
    let obs = snaps.observables(pot)?;
    let d = cfg.dim;
    let mut rows = Vec::with_capacity(prep.times.len());
    for (k, &t) in prep.times.iter().enumerate() {
        let psi = &snaps.states[k];
        rows.push(CompareRow {
            t,
            expect_x: obs[k][..d].to_vec(),
            expect_p: obs[k][d..2 * d].to_vec(),
            energy: obs[k][2 * d],
            classical: flow_errors(&prep.classical.states[k], Flow::Classical, &obs[k], psi, pot)?,
            corrected: flow_errors(&prep.corrected.states[k], Flow::Corrected, &obs[k], psi, pot)?,
        });
    }
    Ok(CompareTable {
        eps: prep.eps,
        rows,
        achieved_tol: prep.reference.achieved_tol,
        ode_tol: prep.ode_tol,
        ode_dt: prep.ode_dt,
        solver_dt: prep.reference.dt,
        grid: prep.reference.grid.clone(),
    })
}

/// Runs both flows and the reference at one ε and tabulates errors per snapshot.
///
/// After a first pass at the configured tolerances, the reference solution is
/// refined further until its achieved tolerance is below 1% of the smallest
/// expectation error, and the parameter ODEs until their step-halving
/// difference is below `integrator.refine_until` times that error. Neither
/// target is pushed below [`NOISE_FLOOR`].
pub fn run_compare(cfg: &ExperimentConfig, eps: f64) -> Result<CompareTable> {
    let mut prep = prepare(cfg, eps)?;
    let mut table = table_from(cfg, &prep)?;

    let target = (0.01 * SweepRow::from_table(&table).smallest_expectation_error()).max(NOISE_FLOOR);
    if cfg.solver.refine && prep.reference.achieved_tol > target {
        let mut scfg = SolverConfig::new(
            prep.reference.grid.clone(),
            prep.reference.dt,
            cfg.t_end,
            prep.times.clone(),
        );
        scfg.observable_tol = target;
        scfg.max_refinements = cfg.solver.max_refinements;
        scfg.point_budget = cfg.solver.point_budget;
        let params = cfg.initial.to_params(eps)?;
        match reference::self_refine(|g| basis::eval_phi0(&params, g), &cfg.potential, &scfg) {
            Ok(mut finer) => {
                finer.refinements += prep.reference.refinements;
                prep.reference = finer;
                table = table_from(cfg, &prep)?;
            }
            Err(Error::RefinementBudget { achieved, .. }) => log::warn!(
                "eps = {eps:e}: reference stays at tolerance {:e} (target {target:e}, last change {achieved:e})",
                prep.reference.achieved_tol
            ),
            Err(e) => return Err(e),
        }
    }

    let target = (cfg.integrator.refine_until * SweepRow::from_table(&table).smallest_expectation_error())
        .max(NOISE_FLOOR);
    if prep.ode_tol > target {
        let params = cfg.initial.to_params(eps)?;
        let (cl, co, dt, diff) = trajectories(cfg, &params, &prep.times, target, prep.ode_dt)?;
        prep.classical = cl;
        prep.corrected = co;
        prep.ode_dt = dt;
        prep.ode_tol = diff;
        table = table_from(cfg, &prep)?;
    }
    Ok(table)
}

/// Maxima over the snapshot times at one ε.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub classical_position: Vec<f64>,
    pub classical_momentum: Vec<f64>,
    pub corrected_position: Vec<f64>,
    pub corrected_momentum: Vec<f64>,
    /// `max_t |⟨Ĥ⟩ − Hᵉ|`.
    pub gap_corrected: f64,
    /// `max_t |⟨Ĥ⟩ − H⁰|`.
    pub gap_classical: f64,
    /// `max_t |gap(t) − gap(0)|` for the corrected flow.
    pub gap_corrected_variation: f64,
    pub wave_classical: f64,
    pub wave_corrected: f64,
    pub achieved_tol: f64,
    pub ode_tol: f64,
    pub grid_points: usize,
    pub solver_dt: f64,
    pub ode_dt: f64,
}

impl SweepRow {
    pub fn from_table(t: &CompareTable) -> Self {
        let d = t.rows.first().map(|r| r.expect_x.len()).unwrap_or(0);
        let max_of = |f: &dyn Fn(&CompareRow) -> f64| t.rows.iter().map(f).fold(0.0, f64::max);
        let per_axis = |f: &dyn Fn(&CompareRow, usize) -> f64| -> Vec<f64> {
            (0..d).map(|i| max_of(&|r| f(r, i))).collect()
        };
        let gap0 = t.rows.first().map(|r| r.corrected.energy_gap).unwrap_or(0.0);
        Self {
            eps: t.eps,
            classical_position: per_axis(&|r, i| r.classical.position[i]),
            classical_momentum: per_axis(&|r, i| r.classical.momentum[i]),
            corrected_position: per_axis(&|r, i| r.corrected.position[i]),
            corrected_momentum: per_axis(&|r, i| r.corrected.momentum[i]),
            gap_corrected: max_of(&|r| r.corrected.energy_gap.abs()),
            gap_classical: max_of(&|r| r.classical.energy_gap.abs()),
            gap_corrected_variation: max_of(&|r| (r.corrected.energy_gap - gap0).abs()),
            wave_classical: max_of(&|r| r.classical.wave),
            wave_corrected: max_of(&|r| r.corrected.wave),
            achieved_tol: t.achieved_tol,
            ode_tol: t.ode_tol,
            grid_points: t.grid.len(),
            solver_dt: t.solver_dt,
            ode_dt: t.ode_dt,
        }
    }

    /// Smallest position, momentum or energy error of either flow.
    pub fn smallest_expectation_error(&self) -> f64 {
        self.classical_position
            .iter()
            .chain(&self.classical_momentum)
            .chain(&self.corrected_position)
            .chain(&self.corrected_momentum)
            .chain([&self.gap_corrected, &self.gap_classical])
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Named error quantities in CSV column order.
    pub fn quantities(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (name, v) in [
            ("classical_position", &self.classical_position),
            ("classical_momentum", &self.classical_momentum),
            ("corrected_position", &self.corrected_position),
            ("corrected_momentum", &self.corrected_momentum),
        ] {
            for (i, e) in v.iter().enumerate() {
                out.push((format!("{name}_{i}"), *e));
            }
        }
        out.push(("gap_corrected".into(), self.gap_corrected));
        out.push(("gap_classical".into(), self.gap_classical));
        out.push(("wave_classical".into(), self.wave_classical));
        out.push(("wave_corrected".into(), self.wave_corrected));
        out
    }
}

/// Least-squares line through `(ln ε, ln err)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares on log-log pairs, skipping errors at or below [`FIT_FLOOR`].
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(e, v)| *e > 0.0 && *v > FIT_FLOOR && v.is_finite())
        .map(|(e, v)| (e.ln(), v.ln()))
        .collect();
    let n = usable.len();
    if n < 3 {
        return Err(Error::InsufficientData { usable: n });
    }
    let nf = n as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = usable.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData { usable: 1 });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
        points: n,
    })
}

/// A fitted slope for one named quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeRecord {
    pub quantity: String,
    pub fit: Option<SlopeFit>,
}

impl SlopeRecord {
    pub fn reliable(&self) -> bool {
        self.fit.is_some_and(|f| f.r_squared >= MIN_R_SQUARED)
    }

    pub fn slope(&self) -> f64 {
        self.fit.map(|f| f.slope).unwrap_or(f64::NAN)
    }
}

/// Per-ε maxima, fitted slopes and provenance of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub config: Option<ExperimentConfig>,
    pub config_hash: String,
    pub dim: usize,
    pub rows: Vec<SweepRow>,
    pub slopes: Vec<SlopeRecord>,
    /// At some ε the reference tolerance exceeds 1% of the smallest expectation
    /// error at that ε, or is unknown because refinement was off.
    pub contamination: bool,
    pub max_achieved_tol: f64,
}

impl ConvergenceReport {
    pub fn empty(dim: usize) -> Self {
        Self {
            config: None,
            config_hash: String::new(),
            dim,
            rows: Vec::new(),
            slopes: Vec::new(),
            contamination: false,
            max_achieved_tol: 0.0,
        }
    }

    pub fn from_rows(cfg: &ExperimentConfig, rows: Vec<SweepRow>) -> Self {
        let names: Vec<String> = rows
            .first()
            .map(|r| r.quantities().into_iter().map(|(n, _)| n).collect())
            .unwrap_or_default();
        let slopes = names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let pts: Vec<(f64, f64)> =
                    rows.iter().map(|r| (r.eps, r.quantities()[k].1)).collect();
                SlopeRecord {
                    quantity: name.clone(),
                    fit: fit_slope(&pts).ok(),
                }
            })
            .collect();
        let max_achieved_tol = rows
            .iter()
            .map(|r| r.achieved_tol)
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        let contaminated = rows
            .iter()
            .any(|r| !(r.achieved_tol <= 0.01 * r.smallest_expectation_error()));
        Self {
            config: Some(cfg.clone()),
            config_hash: cfg.hash(),
            dim: cfg.dim,
            rows,
            slopes,
            contamination: contaminated,
            max_achieved_tol,
        }
    }

    pub fn slope(&self, quantity: &str) -> Option<&SlopeRecord> {
        self.slopes.iter().find(|s| s.quantity == quantity)
    }

    /// Values of `quantity` per ε.
    pub fn series(&self, quantity: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| {
                r.quantities()
                    .into_iter()
                    .find(|(n, _)| n == quantity)
                    .map(|(_, v)| (r.eps, v))
            })
            .collect()
    }

    pub fn errors_csv(&self) -> String {
        let d = self.dim;
        let mut cols = vec!["eps".to_string()];
        for name in [
            "classical_position",
            "classical_momentum",
            "corrected_position",
            "corrected_momentum",
        ] {
            cols.extend((0..d).map(|i| format!("{name}_{i}")));
        }
        cols.extend(
            [
                "gap_corrected",
                "gap_classical",
                "gap_corrected_variation",
                "wave_classical",
                "wave_corrected",
                "achieved_tol",
                "ode_tol",
                "grid_points",
                "solver_dt",
                "ode_dt",
            ]
            .map(String::from),
        );
        let mut out = cols.join(",");
        out.push('\n');
        for r in &self.rows {
            let mut row = vec![fmt(r.eps)];
            for v in [
                &r.classical_position,
                &r.classical_momentum,
                &r.corrected_position,
                &r.corrected_momentum,
            ] {
                row.extend(v.iter().map(|x| fmt(*x)));
            }
            row.extend(
                [
                    r.gap_corrected,
                    r.gap_classical,
                    r.gap_corrected_variation,
                    r.wave_classical,
                    r.wave_corrected,
                    r.achieved_tol,
                    r.ode_tol,
                ]
                .map(fmt),
            );
            row.push(r.grid_points.to_string());
            row.push(fmt(r.solver_dt));
            row.push(fmt(r.ode_dt));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn slopes_csv(&self) -> String {
        let mut out = String::from("quantity,slope,intercept,r_squared,points,reliable\n");
        for s in &self.slopes {
            match s.fit {
                Some(f) => out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    s.quantity,
                    fmt(f.slope),
                    fmt(f.intercept),
                    fmt(f.r_squared),
                    f.points,
                    s.reliable()
                )),
                None => out.push_str(&format!("{},NaN,NaN,NaN,0,false\n", s.quantity)),
            }
        }
        out
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

/// Runs [`run_compare`] for every ε (in parallel) and fits slopes.
pub fn epsilon_sweep(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let tables = par::map_jobs(&cfg.eps_list, |&eps| run_compare(cfg, eps));
    let rows = tables
        .into_iter()
        .map(|t| t.map(|t| SweepRow::from_table(&t)))
        .collect::<Result<Vec<_>>>()?;
    let report = ConvergenceReport::from_rows(cfg, rows);
    for s in &report.slopes {
        if !s.reliable() {
            log::warn!("slope for {} is unreliable: {:?}", s.quantity, s.fit);
        }
    }
    if report.contamination {
        log::warn!(
            "reference tolerance exceeds 1% of the smallest expectation error (largest tolerance {:e})",
            report.max_achieved_tol
        );
    }
    Ok(report)
}

/// Signed terms of `⟨ψ, (x̂ − q)ψ⟩ = 2Re⟨𝒵, (x̂ − q)φ₀⟩ + ⟨𝒵, (x̂ − q)𝒵⟩`
/// with `𝒵 = ψ − φ₀`, and the momentum analogue.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub t: f64,
    pub term1_x: Vec<f64>,
    pub term2_x: Vec<f64>,
    /// `⟨x̂⟩ − q`.
    pub total_x: Vec<f64>,
    pub term1_p: Vec<f64>,
    pub term2_p: Vec<f64>,
    /// `⟨p̂⟩ − p`.
    pub total_p: Vec<f64>,
}

pub fn first_error_term_diagnostic(
    cfg: &ExperimentConfig,
    eps: f64,
    flow: Flow,
) -> Result<Vec<DiagnosticRow>> {
    let prep = prepare(cfg, eps)?;
    diagnostic_from(cfg, &prep, flow)
}

/// [`first_error_term_diagnostic`] on already prepared runs.
pub fn diagnostic_from(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    flow: Flow,
) -> Result<Vec<DiagnosticRow>> {
    let traj = match flow {
        Flow::Classical => &prep.classical,
        Flow::Corrected => &prep.corrected,
    };
    let snaps = &prep.reference.snapshots;
    let grid = &prep.reference.grid;
    let spectral = Spectral::new(grid);
    let d = cfg.dim;
    let mut out = Vec::with_capacity(prep.times.len());
    for (k, &t) in prep.times.iter().enumerate() {
        let state = &traj.states[k];
        let psi = &snaps.states[k];
        let phi = basis::eval_phi0(state, grid)?;
        let z = psi.sub(&phi)?;
        let mut row = DiagnosticRow {
            t,
            term1_x: Vec::with_capacity(d),
            term2_x: Vec::with_capacity(d),
            total_x: Vec::with_capacity(d),
            term1_p: Vec::with_capacity(d),
            term2_p: Vec::with_capacity(d),
            total_p: Vec::with_capacity(d),
        };
        let origin = vec![0.0; d];
        for i in 0..d {
            let xphi = wave::apply_position(&phi, i, &state.q)?;
            let xz = wave::apply_position(&z, i, &state.q)?;
            let xpsi = wave::apply_position(psi, i, &origin)?;
            row.term1_x.push(2.0 * wave::inner_product(&z, &xphi)?.re);
            row.term2_x.push(wave::inner_product(&z, &xz)?.re);
            row.total_x.push(wave::inner_product(psi, &xpsi)?.re - state.q[i]);

            let shift = c(-state.p[i], 0.0);
            let pphi = wave::apply_momentum_with(&spectral, &phi, i)?.axpy(shift, &phi)?;
            let pz = wave::apply_momentum_with(&spectral, &z, i)?.axpy(shift, &z)?;
            let ppsi = wave::apply_momentum_with(&spectral, psi, i)?;
            row.term1_p.push(2.0 * wave::inner_product(&z, &pphi)?.re);
            row.term2_p.push(wave::inner_product(&z, &pz)?.re);
            row.total_p.push(wave::inner_product(psi, &ppsi)?.re - state.p[i]);
        }
        out.push(row);
    }
    Ok(out)
}

/// Per-time table of one comparison, for `evolve`.
pub fn compare_csv(table: &CompareTable) -> String {
    let d = table.rows.first().map(|r| r.expect_x.len()).unwrap_or(0);
    let mut cols = vec!["t".to_string()];
    cols.extend((0..d).map(|i| format!("expect_x_{i}")));
    cols.extend((0..d).map(|i| format!("expect_p_{i}")));
    cols.push("energy".into());
    for flow in ["classical", "corrected"] {
        cols.extend((0..d).map(|i| format!("{flow}_position_{i}")));
        cols.extend((0..d).map(|i| format!("{flow}_momentum_{i}")));
        cols.push(format!("{flow}_energy_gap"));
        cols.push(format!("{flow}_wave"));
    }
    let mut out = cols.join(",");
    out.push('\n');
    for r in &table.rows {
        let mut row = vec![fmt(r.t)];
        row.extend(r.expect_x.iter().chain(&r.expect_p).map(|v| fmt(*v)));
        row.push(fmt(r.energy));
        for f in [&r.classical, &r.corrected] {
            row.extend(f.position.iter().chain(&f.momentum).map(|v| fmt(*v)));
            row.push(fmt(f.energy_gap));
            row.push(fmt(f.wave));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `config.json`, `config.sha256`, `errors.csv`, `slopes.csv` and, when
/// the report has rows, log-log SVG plots. Returns the written paths.
pub fn emit_report(report: &ConvergenceReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if let Some(cfg) = &report.config {
        let p = dir.join("config.json");
        write(&p, &format!("{}\n", cfg.canonical_json()))?;
        written.push(p);
        let p = dir.join("config.sha256");
        write(&p, &format!("{}\n", report.config_hash))?;
        written.push(p);
    }
    let p = dir.join("errors.csv");
    write(&p, &report.errors_csv())?;
    written.push(p);
    let p = dir.join("slopes.csv");
    write(&p, &report.slopes_csv())?;
    written.push(p);
    if report.rows.is_empty() {
        return Ok(written);
    }
    let d = report.dim;
    let axis_series = |prefix: &str| -> Vec<(String, Vec<(f64, f64)>)> {
        ["classical", "corrected"]
            .iter()
            .flat_map(|flow| {
                (0..d).map(move |i| format!("{flow}_{prefix}_{i}"))
            })
            .map(|name| {
                let s = report.series(&name);
                (name, s)
            })
            .collect()
    };
    let plots = [
        ("position.svg", "position expectation error", axis_series("position")),
        ("momentum.svg", "momentum expectation error", axis_series("momentum")),
        (
            "hamiltonian.svg",
            "Hamiltonian gap",
            ["gap_classical", "gap_corrected"]
                .iter()
                .map(|n| (n.to_string(), report.series(n)))
                .collect(),
        ),
        (
            "wavefunction.svg",
            "wave function error",
            ["wave_classical", "wave_corrected"]
                .iter()
                .map(|n| (n.to_string(), report.series(n)))
                .collect(),
        ),
    ];
    for (file, title, series) in plots {
        let p = dir.join(file);
        write(&p, &svg::loglog(title, &series, &[1.0, 1.5]))?;
        written.push(p);
    }
    Ok(written)
}
