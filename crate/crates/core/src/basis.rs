//! Gaussian `φ₀` and the Hagedorn wave packets `φₙ` generated from it.
//!
//! With `y = x − q` the ladder operators are
//! `𝒜 = −(i/√(2ε))(Pᵀy − Qᵀ(p̂ − p))` and `𝒜* = (i/√(2ε))(P*y − Q*(p̂ − p))`,
//! and `φ_{n+eⱼ} = 𝒜*ⱼφₙ / √(nⱼ + 1)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::dynamics::PacketParams;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::matrix::{self, c, CMatrix};
use crate::multi_index::MultiIndex;
use crate::par;
use crate::spectral::Spectral;
use crate::wave::{self, WaveFunction};

/// Spectral tail or boundary mass above which `φ₀` counts as unresolved.
pub const RESOLUTION_TOLERANCE: f64 = 1e-10;
/// Default highest excitation order.
pub const DEFAULT_MAX_ORDER: usize = 4;

/// Pointwise `φ₀(x)` for fixed packet parameters.
#[derive(Debug, Clone)]
pub struct Phi0Evaluator {
    q: Vec<f64>,
    p: Vec<f64>,
    b: CMatrix,
    prefactor: Complex64,
    s: f64,
    eps: f64,
}

impl Phi0Evaluator {
    pub fn new(params: &PacketParams) -> Result<Self> {
        let d = params.dim();
        let b = params.pq_inv()?;
        let prefactor = params.det_factor() * (PI * params.eps).powf(-0.25 * d as f64);
        Ok(Self {
            q: params.q.clone(),
            p: params.p.clone(),
            b,
            prefactor,
            s: params.s,
            eps: params.eps,
        })
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let d = self.q.len();
        let mut y = [0.0; 3];
        for i in 0..d {
            y[i] = x[i] - self.q[i];
        }
        let mut quad = c(0.0, 0.0);
        let mut lin = 0.0;
        for i in 0..d {
            lin += self.p[i] * y[i];
            for j in 0..d {
                quad += self.b[(i, j)] * (y[i] * y[j]);
            }
        }
        let phase = (quad * 0.5 + lin + self.s) * c(0.0, 1.0 / self.eps);
        self.prefactor * phase.exp()
    }
}

/// Samples `φ₀` and verifies that the grid resolves it.
pub fn eval_phi0(params: &PacketParams, grid: &Grid) -> Result<WaveFunction> {
    let spectral = Spectral::new(grid);
    eval_phi0_with(params, &spectral)
}

/// [`eval_phi0`] with precomputed FFT plans.
pub fn eval_phi0_with(params: &PacketParams, spectral: &Spectral) -> Result<WaveFunction> {
    let grid = spectral.grid();
    if grid.dim() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            got: grid.dim(),
        });
    }
    let ev = Phi0Evaluator::new(params)?;
    let phi = WaveFunction::from_fn(grid, params.eps, |x| ev.eval(x));
    let tail = spectral.tail_mass(phi.values());
    let edge = spectral.boundary_mass(phi.values(), 1);
    if tail > RESOLUTION_TOLERANCE || edge > RESOLUTION_TOLERANCE || !tail.is_finite() {
        return Err(Error::Unresolved(format!(
            "phi_0 on {grid}: spectral tail {tail:e}, boundary mass {edge:e}"
        )));
    }
    Ok(phi)
}

/// `(x − q)ᵢ f` for every axis.
fn positions(params: &PacketParams, f: &WaveFunction) -> Result<Vec<WaveFunction>> {
    (0..params.dim())
        .map(|k| wave::apply_position(f, k, &params.q))
        .collect()
}

/// `(p̂ − p)ᵢ f` for every axis.
fn momenta(params: &PacketParams, spectral: &Spectral, f: &WaveFunction) -> Result<Vec<WaveFunction>> {
    (0..params.dim())
        .map(|k| {
            let pf = wave::apply_momentum_with(spectral, f, k)?;
            pf.axpy(c(-params.p[k], 0.0), f)
        })
        .collect()
}

fn combine(
    f: &WaveFunction,
    terms: &[(Complex64, &WaveFunction)],
) -> WaveFunction {
    let n = f.values().len();
    let values = par::collect(n, |i| {
        terms
            .iter()
            .fold(c(0.0, 0.0), |acc, (w, g)| acc + *w * g.values()[i])
    });
    f.with_values(values)
}

/// Components `𝒜ⱼ f`, `j = 0..d`.
pub fn apply_lowering(
    params: &PacketParams,
    spectral: &Spectral,
    f: &WaveFunction,
) -> Result<Vec<WaveFunction>> {
    let y = positions(params, f)?;
    let m = momenta(params, spectral, f)?;
    let pre = c(0.0, -1.0 / (2.0 * params.eps).sqrt());
    Ok((0..params.dim())
        .map(|j| {
            let mut terms = Vec::with_capacity(2 * params.dim());
            for k in 0..params.dim() {
                terms.push((pre * params.p_mat[(k, j)], &y[k]));
                terms.push((-pre * params.q_mat[(k, j)], &m[k]));
            }
            combine(f, &terms)
        })
        .collect())
}

/// Components `𝒜*ⱼ f`, `j = 0..d`.
pub fn apply_raising(
    params: &PacketParams,
    spectral: &Spectral,
    f: &WaveFunction,
) -> Result<Vec<WaveFunction>> {
    let y = positions(params, f)?;
    let m = momenta(params, spectral, f)?;
    Ok(raising_from_parts(params, f, &y, &m))
}

fn raising_from_parts(
    params: &PacketParams,
    f: &WaveFunction,
    y: &[WaveFunction],
    m: &[WaveFunction],
) -> Vec<WaveFunction> {
    let pre = c(0.0, 1.0 / (2.0 * params.eps).sqrt());
    (0..params.dim())
        .map(|j| {
            let mut terms = Vec::with_capacity(2 * params.dim());
            for k in 0..params.dim() {
                terms.push((pre * params.p_mat[(k, j)].conj(), &y[k]));
                terms.push((-pre * params.q_mat[(k, j)].conj(), &m[k]));
            }
            combine(f, &terms)
        })
        .collect()
}

/// Hagedorn wave packets `φₙ`, `|n| ≤ max_order`, sampled on one grid.
#[derive(Debug, Clone)]
pub struct BasisSet {
    pub params: PacketParams,
    pub max_order: usize,
    pub functions: BTreeMap<MultiIndex, WaveFunction>,
    pub grid: Grid,
}

impl BasisSet {
    /// A set holding only `φ₀`.
    pub fn ground(params: &PacketParams, grid: &Grid) -> Result<Self> {
        let phi0 = eval_phi0(params, grid)?;
        let mut functions = BTreeMap::new();
        functions.insert(MultiIndex::zero(params.dim()), phi0);
        Ok(Self {
            params: params.clone(),
            max_order: 0,
            functions,
            grid: grid.clone(),
        })
    }

    pub fn get(&self, n: &MultiIndex) -> Result<&WaveFunction> {
        self.functions
            .get(n)
            .ok_or_else(|| Error::MissingIndex(n.to_string()))
    }

    pub fn phi0(&self) -> &WaveFunction {
        &self.functions[&MultiIndex::zero(self.params.dim())]
    }

    /// Indices in breadth-first order.
    pub fn indices(&self) -> Vec<MultiIndex> {
        MultiIndex::up_to(self.params.dim(), self.max_order)
            .into_iter()
            .filter(|n| self.functions.contains_key(n))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// `𝒜*ⱼφₙ / √(nⱼ + 1)` without storing it.
    pub fn raised(&self, spectral: &Spectral, n: &MultiIndex, j: usize) -> Result<WaveFunction> {
        let parent = self.get(n)?;
        let up = apply_raising(&self.params, spectral, parent)?;
        let norm = ((n.get(j) + 1) as f64).sqrt();
        Ok(up[j].scale(c(1.0 / norm, 0.0)))
    }

    /// Builds and stores `φ_{n+eⱼ}` from `φₙ`.
    pub fn raise_index(
        &mut self,
        spectral: &Spectral,
        n: &MultiIndex,
        j: usize,
    ) -> Result<&WaveFunction> {
        let f = self.raised(spectral, n, j)?;
        let m = n.raised(j);
        self.max_order = self.max_order.max(m.order());
        self.functions.insert(m.clone(), f);
        Ok(&self.functions[&m])
    }

    /// `max |⟨φₘ, φₙ⟩ − δₘₙ|` over the stored functions.
    pub fn gram_deviation(&self) -> Result<f64> {
        let fs: Vec<&WaveFunction> = self.functions.values().collect();
        let mut worst: f64 = 0.0;
        for a in 0..fs.len() {
            for b in a..fs.len() {
                let g = wave::inner_product(fs[a], fs[b])?;
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).norm());
            }
        }
        Ok(worst)
    }

    /// Largest pointwise difference to another set over common indices.
    pub fn max_difference(&self, other: &BasisSet) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (n, f) in &self.functions {
            let g = other.get(n)?;
            f.check_compatible(g)?;
            let diff = f
                .values()
                .iter()
                .zip(g.values())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            worst = worst.max(diff);
        }
        Ok(worst)
    }

    /// Writes `x_0..x_{d-1}` followed by `re_<n>`, `im_<n>` per stored index
    /// (index entries joined by `_`).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let d = self.grid.dim();
        let idx = self.indices();
        let mut out = String::new();
        let mut cols: Vec<String> = (0..d).map(|a| format!("x_{a}")).collect();
        for n in &idx {
            let tag = n
                .entries()
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("_");
            cols.push(format!("re_{tag}"));
            cols.push(format!("im_{tag}"));
        }
        out.push_str(&cols.join(","));
        out.push('\n');
        let mut x = vec![0.0; d];
        for i in 0..self.grid.len() {
            self.grid.node(i, &mut x);
            let mut row: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
            for n in &idx {
                let v = self.functions[n].values()[i];
                row.push(format!("{:.17e}", v.re));
                row.push(format!("{:.17e}", v.im));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Axis used to reach `m` from its parent: the first nonzero entry.
fn parent_axis(m: &MultiIndex) -> usize {
    m.entries()
        .iter()
        .position(|&v| v > 0)
        .expect("the zero index has no parent")
}

/// Hagedorn packets through spectral application of the raising operator.
pub fn build_basis(params: &PacketParams, max_order: usize, grid: &Grid) -> Result<BasisSet> {
    let spectral = Spectral::new(grid);
    let mut set = BasisSet::ground(params, grid)?;
    for m in MultiIndex::up_to(params.dim(), max_order).into_iter().skip(1) {
        let j = parent_axis(&m);
        let n = m.lowered(j).expect("nonzero entry");
        set.raise_index(&spectral, &n, j)?;
    }
    set.max_order = max_order;
    Ok(set)
}

/// Hagedorn packets through the three-term recurrence
/// `Q (√(nⱼ+1) φ_{n+eⱼ})ⱼ = √(2/ε) (x − q) φₙ − Q̄ (√nⱼ φ_{n−eⱼ})ⱼ`.
pub fn ladder_recurrence_eval(
    params: &PacketParams,
    max_order: usize,
    grid: &Grid,
) -> Result<BasisSet> {
    let mut set = BasisSet::ground(params, grid)?;
    let d = params.dim();
    let q_inv = params.q_inv()?;
    let q_bar = params.q_mat.map(|z| z.conj());
    let scale = (2.0 / params.eps).sqrt();
    for m in MultiIndex::up_to(d, max_order).into_iter().skip(1) {
        let j = parent_axis(&m);
        let n = m.lowered(j).expect("nonzero entry");
        let phi_n = set.functions[&n].values();
        let lower: Vec<Option<(f64, &[Complex64])>> = (0..d)
            .map(|k| {
                n.lowered(k)
                    .map(|nk| ((n.get(k) as f64).sqrt(), set.functions[&nk].values()))
            })
            .collect();
        // row j of Q⁻¹ applied to the right-hand side
        let row: Vec<Complex64> = (0..d).map(|l| q_inv[(j, l)]).collect();
        let coupling: Vec<Complex64> = (0..d)
            .map(|k| (0..d).map(|l| row[l] * q_bar[(l, k)]).sum())
            .collect();
        let norm = 1.0 / ((n.get(j) + 1) as f64).sqrt();
        let values = par::collect(grid.len(), |i| {
            let mut x = [0.0; 3];
            grid.node(i, &mut x[..d]);
            let mut acc = c(0.0, 0.0);
            for l in 0..d {
                acc += row[l] * (scale * (x[l] - params.q[l]));
            }
            acc *= phi_n[i];
            for k in 0..d {
                if let Some((w, f)) = lower[k] {
                    acc -= coupling[k] * (w * f[i]);
                }
            }
            acc * norm
        });
        let f = WaveFunction::new(grid.clone(), values, params.eps)?;
        set.functions.insert(m, f);
    }
    set.max_order = max_order;
    Ok(set)
}

/// `(x − q)ₖ φₙ` rebuilt as `√(ε/2) Σⱼ (Qₖⱼ√(nⱼ+1) φ_{n+eⱼ} + Q̄ₖⱼ√nⱼ φ_{n−eⱼ})`.
pub fn position_via_ladder(basis: &BasisSet, n: &MultiIndex) -> Result<Vec<WaveFunction>> {
    ladder_expansion(basis, n, &basis.params.q_mat)
}

/// `(p̂ − p)ₖ φₙ` rebuilt as `√(ε/2) Σⱼ (Pₖⱼ√(nⱼ+1) φ_{n+eⱼ} + P̄ₖⱼ√nⱼ φ_{n−eⱼ})`.
pub fn momentum_via_ladder(basis: &BasisSet, n: &MultiIndex) -> Result<Vec<WaveFunction>> {
    ladder_expansion(basis, n, &basis.params.p_mat)
}

fn ladder_expansion(basis: &BasisSet, n: &MultiIndex, m: &CMatrix) -> Result<Vec<WaveFunction>> {
    let d = basis.params.dim();
    let base = basis.get(n)?;
    let s = (0.5 * basis.params.eps).sqrt();
    let mut ups = Vec::with_capacity(d);
    let mut downs = Vec::with_capacity(d);
    for j in 0..d {
        ups.push(basis.get(&n.raised(j))?);
        downs.push(n.lowered(j).map(|nj| basis.get(&nj)).transpose()?);
    }
    Ok((0..d)
        .map(|k| {
            let mut terms = Vec::new();
            for j in 0..d {
                let up = ((n.get(j) + 1) as f64).sqrt();
                terms.push((m[(k, j)] * (s * up), ups[j]));
                if let Some(f) = downs[j] {
                    let dn = (n.get(j) as f64).sqrt();
                    terms.push((m[(k, j)].conj() * (s * dn), f));
                }
            }
            combine(base, &terms)
        })
        .collect())
}

/// `max_{j,k} ‖(𝒜ⱼ𝒜*ₖ − 𝒜*ₖ𝒜ⱼ) f − δⱼₖ f‖`.
pub fn commutator_defect(
    params: &PacketParams,
    spectral: &Spectral,
    f: &WaveFunction,
) -> Result<f64> {
    let d = params.dim();
    let raised = apply_raising(params, spectral, f)?;
    let lowered = apply_lowering(params, spectral, f)?;
    let mut worst: f64 = 0.0;
    for k in 0..d {
        let a_of_raised = apply_lowering(params, spectral, &raised[k])?;
        for j in 0..d {
            let raised_of_a = apply_raising(params, spectral, &lowered[j])?;
            let mut diff = a_of_raised[j].sub(&raised_of_a[k])?;
            if j == k {
                diff = diff.sub(f)?;
            }
            worst = worst.max(wave::l2_norm(&diff));
        }
    }
    Ok(worst)
}

/// `max_j ‖𝒜ⱼφ₀‖`.
pub fn lowering_of_ground(params: &PacketParams, spectral: &Spectral) -> Result<f64> {
    let phi0 = eval_phi0_with(params, spectral)?;
    Ok(apply_lowering(params, spectral, &phi0)?
        .iter()
        .map(wave::l2_norm)
        .fold(0.0, f64::max))
}

/// Smallest grid that resolves the basis functions up to `max_order`
/// around a fixed packet: eight standard deviations plus `√(2K+1)` widths.
pub fn grid_for_packet(params: &PacketParams, max_order: usize) -> Result<Grid> {
    let d = params.dim();
    let mut extent = crate::grid::PacketExtent::empty(d);
    let widen = ((2 * max_order + 1) as f64).sqrt();
    extent.include(
        &params.q,
        &params.p,
        matrix::spectral_norm(&params.q_mat) * (1.0 + widen / 8.0),
        matrix::spectral_norm(&params.p_mat) * (1.0 + widen / 10.0),
    );
    Grid::sized_for(&extent, params.eps, crate::grid::DEFAULT_POINT_BUDGET)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PacketParams;

    fn standard_1d(eps: f64) -> PacketParams {
        PacketParams::standard(vec![0.0], vec![0.0], eps).unwrap()
    }

    /// A valid 2-d packet with a non-diagonal, complex `Q`.
    /// `(I, iI)` pushed through real shears, a scaling and a unitary rotation.
    fn skewed_2d(eps: f64) -> PacketParams {
        let shear = CMatrix::from_row_slice(2, 2, &[c(0.3, 0.0), c(0.1, 0.0), c(0.1, 0.0), c(-0.2, 0.0)]);
        let a = CMatrix::from_row_slice(2, 2, &[c(1.1, 0.0), c(0.2, 0.0), c(-0.1, 0.0), c(0.9, 0.0)]);
        let t = CMatrix::from_row_slice(2, 2, &[c(0.2, 0.0), c(-0.3, 0.0), c(-0.3, 0.0), c(0.4, 0.0)]);
        let u = CMatrix::from_row_slice(2, 2, &[c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.8), c(0.6, 0.0)]);
        let i = c(0.0, 1.0);
        let q0 = &a * (matrix::identity(2) + &shear * i);
        let p0 = matrix::inverse(&a).unwrap().transpose() * i + &t * &q0;
        PacketParams::new(vec![0.2, -0.1], vec![0.4, 0.3], q0 * &u, p0 * &u, 0.3, eps).unwrap()
    }

    fn hermite_functions(x: f64, eps: f64, n_max: usize) -> Vec<f64> {
        // orthonormal Hermite functions of width √ε by the standard recurrence
        let xi = x / eps.sqrt();
        let mut h = vec![0.0; n_max + 1];
        h[0] = (PI * eps).powf(-0.25) * (-0.5 * xi * xi).exp();
        if n_max >= 1 {
            h[1] = 2f64.sqrt() * xi * h[0];
        }
        for n in 1..n_max {
            h[n + 1] = ((2.0 / (n + 1) as f64).sqrt() * xi * h[n])
                - ((n as f64 / (n + 1) as f64).sqrt() * h[n - 1]);
        }
        h
    }

    #[test]
    fn phi0_standard_closed_form() {
        let eps = 0.05;
        let p = standard_1d(eps);
        let g = grid_for_packet(&p, 0).unwrap();
        let phi = eval_phi0(&p, &g).unwrap();
        let mut x = [0.0];
        for i in 0..g.len() {
            g.node(i, &mut x);
            let exact = (PI * eps).powf(-0.25) * (-x[0] * x[0] / (2.0 * eps)).exp();
            assert!((phi.values()[i] - exact).norm() < 1e-13);
        }
        assert!((wave::l2_norm(&phi) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn phi0_moments() {
        let p = skewed_2d(0.05);
        let g = grid_for_packet(&p, 0).unwrap();
        let phi = eval_phi0(&p, &g).unwrap();
        let pot = crate::potentials::Potential::Free { dim: 2 };
        assert!((wave::l2_norm(&phi) - 1.0).abs() < 1e-8);
        for i in 0..2 {
            let xq = wave::expectation(wave::Observable::Position(i), &phi, &pot).unwrap();
            let xp = wave::expectation(wave::Observable::Momentum(i), &phi, &pot).unwrap();
            assert!((xq - p.q[i]).abs() < 1e-8);
            assert!((xp - p.p[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn phi0_unresolved_grid_is_rejected() {
        let p = standard_1d(0.01);
        let g = Grid::cube(1, 0.0, 0.2, 64).unwrap();
        assert!(matches!(eval_phi0(&p, &g), Err(Error::Unresolved(_))));
    }

    #[test]
    fn lowering_annihilates_ground_state() {
        for p in [standard_1d(0.02), skewed_2d(0.05)] {
            let g = grid_for_packet(&p, 2).unwrap();
            let s = Spectral::new(&g);
            assert!(lowering_of_ground(&p, &s).unwrap() < 1e-8);
        }
    }

    #[test]
    fn commutator_on_excited_states() {
        let p = skewed_2d(0.05);
        let g = grid_for_packet(&p, 4).unwrap();
        let s = Spectral::new(&g);
        let b = ladder_recurrence_eval(&p, 2, &g).unwrap();
        let f = b.get(&MultiIndex::new(vec![1, 1])).unwrap().add(b.phi0()).unwrap();
        assert!(commutator_defect(&p, &s, &f).unwrap() < 1e-7);
    }

    #[test]
    fn hermite_oracle() {
        let eps = 0.03;
        let p = standard_1d(eps);
        let g = grid_for_packet(&p, 5).unwrap();
        let b = ladder_recurrence_eval(&p, 5, &g).unwrap();
        let sb = build_basis(&p, 5, &g).unwrap();
        let mut x = [0.0];
        for i in 0..g.len() {
            g.node(i, &mut x);
            let h = hermite_functions(x[0], eps, 5);
            for (n, hn) in h.iter().enumerate() {
                let m = MultiIndex::new(vec![n]);
                assert!((b.get(&m).unwrap().values()[i] - hn).norm() < 1e-7);
                assert!((sb.get(&m).unwrap().values()[i] - hn).norm() < 1e-7);
            }
        }
        // lowering the first excited state returns the ground state
        let s = Spectral::new(&g);
        let down = apply_lowering(&p, &s, b.get(&MultiIndex::new(vec![1])).unwrap()).unwrap();
        assert!(wave::distance(&down[0], b.phi0()).unwrap() < 1e-7);
    }

    #[test]
    fn counting_and_gram() {
        let p = skewed_2d(0.05);
        let g = grid_for_packet(&p, 4).unwrap();
        let b = ladder_recurrence_eval(&p, 2, &g).unwrap();
        let names: Vec<String> = b.indices().iter().map(|n| n.to_string()).collect();
        assert_eq!(names, ["(0,0)", "(1,0)", "(0,1)", "(2,0)", "(1,1)", "(0,2)"]);
        let b4 = ladder_recurrence_eval(&p, 4, &g).unwrap();
        assert_eq!(b4.len(), 15);
        assert!(b4.gram_deviation().unwrap() < 1e-7);
        let one = standard_1d(0.05);
        let g1 = grid_for_packet(&one, 3).unwrap();
        let b1 = build_basis(&one, 3, &g1).unwrap();
        assert_eq!(b1.len(), 4);
        assert!(b1.gram_deviation().unwrap() < 1e-7);
        assert_eq!(build_basis(&one, 0, &g1).unwrap().len(), 1);
    }

    #[test]
    fn construction_paths_agree() {
        let p = skewed_2d(0.05);
        let g = grid_for_packet(&p, 4).unwrap();
        let a = ladder_recurrence_eval(&p, 4, &g).unwrap();
        let b = build_basis(&p, 4, &g).unwrap();
        assert!(a.max_difference(&b).unwrap() < 1e-7);
    }

    #[test]
    fn raising_order_commutes() {
        let p = skewed_2d(0.05);
        let g = grid_for_packet(&p, 3).unwrap();
        let s = Spectral::new(&g);
        let mut a = BasisSet::ground(&p, &g).unwrap();
        let mut b = a.clone();
        let z = MultiIndex::zero(2);
        a.raise_index(&s, &z, 0).unwrap();
        let via_a = a.raised(&s, &MultiIndex::unit(2, 0), 1).unwrap();
        b.raise_index(&s, &z, 1).unwrap();
        let via_b = b.raised(&s, &MultiIndex::unit(2, 1), 0).unwrap();
        assert!(wave::distance(&via_a, &via_b).unwrap() < 1e-8);
        let norm = wave::l2_norm(a.get(&MultiIndex::unit(2, 0)).unwrap());
        assert!((norm - 1.0).abs() < 1e-7);
        assert!(matches!(
            a.raised(&s, &MultiIndex::new(vec![3, 0]), 0),
            Err(Error::MissingIndex(_))
        ));
    }

    #[test]
    fn lowering_inverts_raising() {
        let p = skewed_2d(0.05);
        let g = grid_for_packet(&p, 4).unwrap();
        let s = Spectral::new(&g);
        let b = ladder_recurrence_eval(&p, 3, &g).unwrap();
        for n in MultiIndex::up_to(2, 2) {
            for j in 0..2 {
                let up = b.get(&n.raised(j)).unwrap();
                let down = apply_lowering(&p, &s, up).unwrap();
                let expect = b.get(&n).unwrap().scale(c(((n.get(j) + 1) as f64).sqrt(), 0.0));
                assert!(wave::distance(&down[j], &expect).unwrap() < 1e-7);
            }
        }
    }

    #[test]
    fn ladder_expansions_match_direct_application() {
        let p = skewed_2d(0.05);
        let g = grid_for_packet(&p, 4).unwrap();
        let s = Spectral::new(&g);
        let b = ladder_recurrence_eval(&p, 3, &g).unwrap();
        for n in MultiIndex::up_to(2, 2) {
            let f = b.get(&n).unwrap();
            let xs = position_via_ladder(&b, &n).unwrap();
            let ps = momentum_via_ladder(&b, &n).unwrap();
            for k in 0..2 {
                let direct_x = wave::apply_position(f, k, &p.q).unwrap();
                assert!(wave::distance(&xs[k], &direct_x).unwrap() < 1e-7);
                let direct_p = wave::apply_momentum_with(&s, f, k)
                    .unwrap()
                    .axpy(c(-p.p[k], 0.0), f)
                    .unwrap();
                assert!(wave::distance(&ps[k], &direct_p).unwrap() < 1e-7);
            }
        }
    }

    #[test]
    fn csv_dump_layout() {
        let p = standard_1d(0.1);
        let g = grid_for_packet(&p, 1).unwrap();
        let b = ladder_recurrence_eval(&p, 1, &g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.csv");
        b.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x_0,re_0,im_0,re_1,im_1");
        assert_eq!(text.lines().count(), g.len() + 1);
    }
}
