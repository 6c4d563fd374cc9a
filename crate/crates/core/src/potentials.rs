//! Analytic potentials with exact derivatives through fourth order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest derivative order available from every potential.
pub const MAX_ORDER: usize = 4;

/// Fully symmetric derivative tensor `DᵏV(x)` stored densely (`d^k` entries).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dim: usize,
    order: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dim: usize, order: usize) -> Self {
        Self {
            dim,
            order,
            data: vec![0.0; dim.pow(order as u32)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn flat(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat(idx)]
    }

    fn set(&mut self, idx: &[usize], v: f64) {
        let f = self.flat(idx);
        self.data[f] = v;
    }

    /// Scalar value of an order-0 tensor.
    pub fn scalar(&self) -> f64 {
        self.data[0]
    }

    /// Full contraction `T · vᵏ`.
    pub fn contract(&self, v: &[f64]) -> f64 {
        let mut idx = vec![0usize; self.order];
        let mut acc = 0.0;
        for (flat, &t) in self.data.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            unflatten(flat, self.dim, &mut idx);
            acc += t * idx.iter().map(|&i| v[i]).product::<f64>();
        }
        acc
    }

    /// Contraction over all but the first index: `Σ T_{i j…} v_j…`.
    pub fn contract_tail(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        if self.order == 0 {
            return out;
        }
        let mut idx = vec![0usize; self.order];
        for (flat, &t) in self.data.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            unflatten(flat, self.dim, &mut idx);
            out[idx[0]] += t * idx[1..].iter().map(|&i| v[i]).product::<f64>();
        }
        out
    }

    /// Largest deviation between entries related by an index permutation.
    pub fn symmetry_defect(&self) -> f64 {
        let mut idx = vec![0usize; self.order];
        let mut worst: f64 = 0.0;
        for flat in 0..self.data.len() {
            unflatten(flat, self.dim, &mut idx);
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            worst = worst.max((self.data[flat] - self.get(&sorted)).abs());
        }
        worst
    }
}

fn unflatten(mut flat: usize, dim: usize, idx: &mut [usize]) {
    for slot in idx.iter_mut().rev() {
        *slot = flat % dim;
        flat /= dim;
    }
}

/// Hypothesis metadata: `V ≥ lower_bound`, `|D²ᵢⱼV| ≤ hessian_bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialMetadata {
    pub lower_bound: f64,
    pub hessian_bound: f64,
    pub satisfies_hypotheses: bool,
}

/// A potential `V: ℝᵈ → ℝ` with analytic derivatives.
pub trait PotentialModel: Send + Sync {
    fn dim(&self) -> usize;

    /// `DᵏV(x)` for `k ≤ 4`.
    fn derivative(&self, x: &[f64], order: usize) -> Result<Tensor>;

    fn metadata(&self) -> PotentialMetadata;

    fn value(&self, x: &[f64]) -> f64 {
        self.derivative(x, 0).map(|t| t.scalar()).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.derivative(x, 1)
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|_| vec![f64::NAN; self.dim()])
    }

    /// `true` when the third and higher derivatives vanish identically.
    fn is_quadratic(&self) -> bool {
        false
    }
}

/// The built-in potential families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    /// `V = 0`.
    Free { dim: usize },
    /// `V = c`.
    Constant { dim: usize, value: f64 },
    /// `V = Σ ωᵢ² xᵢ² / 2`.
    Harmonic { omega: Vec<f64> },
    /// `V = Σ (1 − cos xᵢ)`.
    Torsional { dim: usize },
    /// `V = a (1 − exp(−|x|²/(2w²)))`.
    GaussianWell { dim: usize, depth: f64, width: f64 },
    /// `V = Σ (ωᵢ² xᵢ²/2 + λ xᵢ⁴/4)`; unbounded Hessian, exploration only.
    Anharmonic { omega: Vec<f64>, quartic: f64 },
}

impl Potential {
    pub fn validate(&self) -> Result<()> {
        let d = PotentialModel::dim(self);
        if d == 0 || d > 3 {
            return Err(Error::InvalidConfig(format!("potential dimension {d} outside 1..=3")));
        }
        match self {
            Potential::GaussianWell { depth, width, .. } if !(*depth > 0.0 && *width > 0.0) => {
                Err(Error::InvalidConfig(
                    "gaussian_well needs depth > 0 and width > 0".into(),
                ))
            }
            Potential::Harmonic { omega } | Potential::Anharmonic { omega, .. }
                if omega.iter().any(|w| !w.is_finite()) =>
            {
                Err(Error::InvalidConfig("non-finite frequency".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Potential::Free { .. } => "free",
            Potential::Constant { .. } => "constant",
            Potential::Harmonic { .. } => "harmonic",
            Potential::Torsional { .. } => "torsional",
            Potential::GaussianWell { .. } => "gaussian_well",
            Potential::Anharmonic { .. } => "anharmonic",
        }
    }

    /// Per-axis derivatives of a separable potential `Σ f(xᵢ)`.
    fn separable(&self, axis: usize, x: f64, order: usize) -> f64 {
        match self {
            Potential::Free { .. } => 0.0,
            Potential::Constant { value, .. } => {
                if order == 0 && axis == 0 {
                    *value
                } else {
                    0.0
                }
            }
            Potential::Harmonic { omega } => {
                let w2 = omega[axis] * omega[axis];
                match order {
                    0 => 0.5 * w2 * x * x,
                    1 => w2 * x,
                    2 => w2,
                    _ => 0.0,
                }
            }
            Potential::Torsional { .. } => match order {
                0 => 1.0 - x.cos(),
                1 => x.sin(),
                2 => x.cos(),
                3 => -x.sin(),
                _ => -x.cos(),
            },
            Potential::Anharmonic { omega, quartic } => {
                let w2 = omega[axis] * omega[axis];
                match order {
                    0 => 0.5 * w2 * x * x + 0.25 * quartic * x.powi(4),
                    1 => w2 * x + quartic * x.powi(3),
                    2 => w2 + 3.0 * quartic * x * x,
                    3 => 6.0 * quartic * x,
                    _ => 6.0 * quartic,
                }
            }
            Potential::GaussianWell { .. } => unreachable!("not separable"),
        }
    }

    fn gaussian_well(dim: usize, depth: f64, width: f64, x: &[f64], order: usize) -> Tensor {
        let w2 = width * width;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let g = (-0.5 * r2 / w2).exp();
        let mut t = Tensor::zeros(dim, order);
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut sorted = vec![0usize; order];
        for flat in 0..t.data.len() {
            unflatten(flat, dim, &mut sorted);
            // sorted so permuted entries are bit-identical
            sorted.sort_unstable();
            let idx = &sorted;
            // derivatives of g = exp(-r²/2w²); V = a(1 - g)
            let dg = match order {
                0 => g,
                1 => -x[idx[0]] / w2 * g,
                2 => {
                    let (i, j) = (idx[0], idx[1]);
                    (x[i] * x[j] / (w2 * w2) - delta(i, j) / w2) * g
                }
                3 => {
                    let (i, j, k) = (idx[0], idx[1], idx[2]);
                    (-x[i] * x[j] * x[k] / (w2 * w2 * w2)
                        + (delta(i, j) * x[k] + delta(i, k) * x[j] + delta(j, k) * x[i])
                            / (w2 * w2))
                        * g
                }
                _ => {
                    let (i, j, k, l) = (idx[0], idx[1], idx[2], idx[3]);
                    let quad = x[i] * x[j] * x[k] * x[l] / (w2 * w2 * w2 * w2);
                    let mixed = delta(i, j) * x[k] * x[l]
                        + delta(i, k) * x[j] * x[l]
                        + delta(i, l) * x[j] * x[k]
                        + delta(j, k) * x[i] * x[l]
                        + delta(j, l) * x[i] * x[k]
                        + delta(k, l) * x[i] * x[j];
                    let pairs = delta(i, j) * delta(k, l)
                        + delta(i, k) * delta(j, l)
                        + delta(i, l) * delta(j, k);
                    (quad - mixed / (w2 * w2 * w2) + pairs / (w2 * w2)) * g
                }
            };
            let v = if order == 0 { depth * (1.0 - dg) } else { -depth * dg };
            t.data[flat] = v;
        }
        t
    }
}

impl PotentialModel for Potential {
    fn dim(&self) -> usize {
        match self {
            Potential::Free { dim }
            | Potential::Constant { dim, .. }
            | Potential::Torsional { dim }
            | Potential::GaussianWell { dim, .. } => *dim,
            Potential::Harmonic { omega } | Potential::Anharmonic { omega, .. } => omega.len(),
        }
    }

    fn derivative(&self, x: &[f64], order: usize) -> Result<Tensor> {
        if order > MAX_ORDER {
            return Err(Error::UnsupportedOrder(order));
        }
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        if let Potential::GaussianWell { depth, width, .. } = self {
            return Ok(Self::gaussian_well(d, *depth, *width, x, order));
        }
        let mut t = Tensor::zeros(d, order);
        if order == 0 {
            t.data[0] = (0..d).map(|a| self.separable(a, x[a], 0)).sum();
        } else {
            for a in 0..d {
                let idx = vec![a; order];
                t.set(&idx, self.separable(a, x[a], order));
            }
        }
        Ok(t)
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Potential::GaussianWell { depth, width, .. } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                depth * (1.0 - (-0.5 * r2 / (width * width)).exp())
            }
            _ => (0..x.len()).map(|a| self.separable(a, x[a], 0)).sum(),
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Potential::GaussianWell { depth, width, .. } => {
                let w2 = width * width;
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let g = (-0.5 * r2 / w2).exp();
                x.iter().map(|xi| depth * xi / w2 * g).collect()
            }
            _ => (0..x.len()).map(|a| self.separable(a, x[a], 1)).collect(),
        }
    }

    fn metadata(&self) -> PotentialMetadata {
        let (hessian_bound, satisfies) = match self {
            Potential::Free { .. } | Potential::Constant { .. } => (0.0, true),
            Potential::Harmonic { omega } => {
                (omega.iter().map(|w| w * w).fold(0.0, f64::max), true)
            }
            Potential::Torsional { .. } => (1.0, true),
            Potential::GaussianWell { depth, width, .. } => (depth / (width * width), true),
            Potential::Anharmonic { quartic, .. } => {
                if *quartic == 0.0 {
                    (0.0, true)
                } else {
                    (f64::INFINITY, false)
                }
            }
        };
        let lower_bound = match self {
            Potential::Constant { value, .. } => *value,
            Potential::Anharmonic { quartic, omega } if *quartic < 0.0 => {
                let _ = omega;
                f64::NEG_INFINITY
            }
            _ => 0.0,
        };
        PotentialMetadata {
            lower_bound,
            hessian_bound,
            satisfies_hypotheses: satisfies && lower_bound.is_finite(),
        }
    }

    fn is_quadratic(&self) -> bool {
        match self {
            Potential::Free { .. } | Potential::Constant { .. } | Potential::Harmonic { .. } => {
                true
            }
            Potential::Anharmonic { quartic, .. } => *quartic == 0.0,
            _ => false,
        }
    }
}

/// Largest discrepancy between analytic derivatives of order `k` and central
/// differences of order `k − 1`, over `k = 1..=4` and all sample points.
///
/// Each discrepancy is scaled by `max(1, max |DᵏV|)` at that point.
pub fn check_derivatives(
    pot: &dyn PotentialModel,
    points: &[Vec<f64>],
    h: f64,
) -> Result<f64> {
    if !(1e-6..=1e-2).contains(&h) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step {h} outside [1e-6, 1e-2]"
        )));
    }
    let d = pot.dim();
    let mut worst: f64 = 0.0;
    let mut idx = Vec::new();
    for x in points {
        for k in 1..=MAX_ORDER {
            let exact = pot.derivative(x, k)?;
            let scale = exact.data().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            for m in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[m] += h;
                xm[m] -= h;
                let up = pot.derivative(&xp, k - 1)?;
                let dn = pot.derivative(&xm, k - 1)?;
                for flat in 0..up.data().len() {
                    idx.resize(k, 0);
                    unflatten(flat, d, &mut idx[..k - 1]);
                    idx[k - 1] = m;
                    let fd = (up.data()[flat] - dn.data()[flat]) / (2.0 * h);
                    worst = worst.max((fd - exact.get(&idx)).abs() / scale);
                }
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_points(d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect()
    }

    #[test]
    fn torsional_at_origin() {
        let v = Potential::Torsional { dim: 1 };
        let vals: Vec<f64> = (0..=4)
            .map(|k| v.derivative(&[0.0], k).unwrap().data()[0])
            .collect();
        assert_eq!(vals, vec![0.0, 0.0, 1.0, -0.0, -1.0]);
    }

    #[test]
    fn harmonic_higher_derivatives_vanish() {
        let v = Potential::Harmonic { omega: vec![1.0, 2.0] };
        for x in random_points(2, 10, 1) {
            assert!(v.derivative(&x, 3).unwrap().data().iter().all(|&t| t == 0.0));
            assert!(v.derivative(&x, 4).unwrap().data().iter().all(|&t| t == 0.0));
        }
    }

    #[test]
    fn gaussian_well_at_origin() {
        let v = Potential::GaussianWell { dim: 2, depth: 1.0, width: 1.0 };
        assert_eq!(v.derivative(&[0.0, 0.0], 0).unwrap().scalar(), 0.0);
        assert!(v.derivative(&[0.0, 0.0], 1).unwrap().data().iter().all(|&t| t == 0.0));
        assert_eq!(v.derivative(&[0.0, 0.0], 2).unwrap().data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn order_five_is_rejected() {
        let v = Potential::Free { dim: 1 };
        assert!(matches!(v.derivative(&[0.0], 5), Err(Error::UnsupportedOrder(5))));
    }

    #[test]
    fn finite_differences_agree() {
        let h = 1e-4;
        let harmonic = Potential::Harmonic { omega: vec![1.0, 0.7] };
        assert!(check_derivatives(&harmonic, &random_points(2, 100, 2), h).unwrap() < 1e-8);
        let free = Potential::Free { dim: 2 };
        assert_eq!(check_derivatives(&free, &random_points(2, 10, 3), h).unwrap(), 0.0);
        let tors = Potential::Torsional { dim: 2 };
        assert!(check_derivatives(&tors, &random_points(2, 100, 4), h).unwrap() < 1e-6);
        let well = Potential::GaussianWell { dim: 3, depth: 1.3, width: 0.8 };
        assert!(check_derivatives(&well, &random_points(3, 50, 5), h).unwrap() < 1e-6);
        let quart = Potential::Anharmonic { omega: vec![1.0], quartic: 0.5 };
        assert!(check_derivatives(&quart, &random_points(1, 50, 6), h).unwrap() < 1e-6);
        assert!(check_derivatives(&quart, &random_points(1, 1, 6), 1e-1).is_err());
    }

    #[test]
    fn tensors_are_symmetric() {
        let well = Potential::GaussianWell { dim: 3, depth: 1.0, width: 1.2 };
        for x in random_points(3, 20, 7) {
            for k in 2..=4 {
                assert_eq!(well.derivative(&x, k).unwrap().symmetry_defect(), 0.0);
            }
        }
    }

    #[test]
    fn metadata_flags() {
        assert_eq!(Potential::Torsional { dim: 1 }.metadata().hessian_bound, 1.0);
        assert!(Potential::Harmonic { omega: vec![2.0] }.metadata().satisfies_hypotheses);
        assert!(!Potential::Anharmonic { omega: vec![1.0], quartic: 1.0 }
            .metadata()
            .satisfies_hypotheses);
        let well = Potential::GaussianWell { dim: 2, depth: 2.0, width: 0.5 };
        let meta = well.metadata();
        for x in random_points(2, 500, 8) {
            let h = well.derivative(&x, 2).unwrap();
            assert!(h.data().iter().all(|v| v.abs() <= meta.hessian_bound + 1e-12));
            assert!(well.value(&x) >= meta.lower_bound);
        }
    }

    #[test]
    fn fast_paths_match_tensors() {
        let well = Potential::GaussianWell { dim: 2, depth: 2.0, width: 0.5 };
        let x = [0.3, -0.2];
        assert_eq!(well.value(&x), well.derivative(&x, 0).unwrap().scalar());
        assert_eq!(well.gradient(&x), well.derivative(&x, 1).unwrap().data());
    }
}
