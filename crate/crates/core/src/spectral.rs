//! Multidimensional FFTs on a [`Grid`] and Fourier multipliers.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;
use crate::par;

/// Fraction of the Nyquist wavenumber above which spectral content counts as tail.
pub const TAIL_FRACTION: f64 = 0.75;

/// FFT plans and wavenumber tables for one grid.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    k: Vec<Vec<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let d = grid.dim();
        let forward = (0..d)
            .map(|a| planner.plan_fft_forward(grid.points()[a]))
            .collect();
        let inverse = (0..d)
            .map(|a| planner.plan_fft_inverse(grid.points()[a]))
            .collect();
        let k = (0..d).map(|a| grid.wavenumbers(a)).collect();
        Self {
            grid: grid.clone(),
            forward,
            inverse,
            k,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.k[axis]
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        for a in 0..self.grid.dim() {
            self.transform_axis(data, a, &self.forward[a]);
        }
    }

    /// Inverse transform in place, including the `1/N` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for a in 0..self.grid.dim() {
            self.transform_axis(data, a, &self.inverse[a]);
        }
        let scale = 1.0 / data.len() as f64;
        par::update(data, |_, v| *v *= scale);
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, fft: &Arc<dyn Fft<f64>>) {
        let n = self.grid.points()[axis];
        let inner = self.grid.stride(axis);
        if inner == 1 {
            let lines_per_task = (par::CHUNK / n).max(1);
            par::for_each_chunk(data, n * lines_per_task, |chunk| {
                let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
                fft.process_with_scratch(chunk, &mut scratch);
            });
            return;
        }
        par::for_each_chunk(data, n * inner, |block| {
            let mut t = vec![Complex64::default(); n * inner];
            for j in 0..n {
                for m in 0..inner {
                    t[m * n + j] = block[j * inner + m];
                }
            }
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(&mut t, &mut scratch);
            for j in 0..n {
                for m in 0..inner {
                    block[j * inner + m] = t[m * n + j];
                }
            }
        });
    }

    /// Wavenumber vector component `axis` of the flat spectral index `idx`.
    pub fn k_at(&self, idx: usize, axis: usize) -> f64 {
        let n = self.grid.points()[axis];
        let j = (idx / self.grid.stride(axis)) % n;
        self.k[axis][j]
    }

    /// `true` when `idx` sits on the Nyquist plane of `axis`.
    pub fn is_nyquist(&self, idx: usize, axis: usize) -> bool {
        let n = self.grid.points()[axis];
        (idx / self.grid.stride(axis)) % n == n / 2
    }

    /// `|k|²` at the flat spectral index.
    pub fn k_squared(&self, idx: usize) -> f64 {
        (0..self.grid.dim())
            .map(|a| {
                let k = self.k_at(idx, a);
                k * k
            })
            .sum()
    }

    /// Applies a Fourier multiplier `m(idx)` to `values` (physical space in and out).
    pub fn apply_multiplier<F>(&self, values: &[Complex64], m: F) -> Vec<Complex64>
    where
        F: Fn(usize) -> Complex64 + Sync + Send,
    {
        let mut buf = values.to_vec();
        self.forward(&mut buf);
        par::update(&mut buf, |i, v| *v *= m(i));
        self.inverse(&mut buf);
        buf
    }

    /// `−iε ∂/∂x_axis` applied spectrally; the Nyquist mode is dropped.
    pub fn momentum(&self, values: &[Complex64], axis: usize, eps: f64) -> Vec<Complex64> {
        self.apply_multiplier(values, |i| {
            if self.is_nyquist(i, axis) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(eps * self.k_at(i, axis), 0.0)
            }
        })
    }

    /// `p̂²/2 = −ε²Δ/2` applied spectrally.
    pub fn kinetic(&self, values: &[Complex64], eps: f64) -> Vec<Complex64> {
        self.apply_multiplier(values, |i| Complex64::new(0.5 * eps * eps * self.k_squared(i), 0.0))
    }

    /// Fraction of spectral energy with some `|kᵢ|` above [`TAIL_FRACTION`] of Nyquist.
    pub fn tail_mass(&self, values: &[Complex64]) -> f64 {
        let mut buf = values.to_vec();
        self.forward(&mut buf);
        let d = self.grid.dim();
        let limits: Vec<f64> = (0..d)
            .map(|a| TAIL_FRACTION * std::f64::consts::PI / self.grid.spacing(a))
            .collect();
        let total = par::sum_f64(buf.len(), |i| buf[i].norm_sqr());
        if total == 0.0 {
            return 0.0;
        }
        let tail = par::sum_f64(buf.len(), |i| {
            if (0..d).any(|a| self.k_at(i, a).abs() > limits[a]) {
                buf[i].norm_sqr()
            } else {
                0.0
            }
        });
        tail / total
    }

    /// Fraction of `|f|²` on nodes within `layer` nodes of the box boundary.
    pub fn boundary_mass(&self, values: &[Complex64], layer: usize) -> f64 {
        let g = &self.grid;
        let d = g.dim();
        let total = par::sum_f64(values.len(), |i| values[i].norm_sqr());
        if total == 0.0 {
            return 0.0;
        }
        let edge = par::sum_f64(values.len(), |i| {
            let near = (0..d).any(|a| {
                let n = g.points()[a];
                let j = (i / g.stride(a)) % n;
                j < layer || j + layer >= n
            });
            if near {
                values[i].norm_sqr()
            } else {
                0.0
            }
        });
        edge / total
    }
}
