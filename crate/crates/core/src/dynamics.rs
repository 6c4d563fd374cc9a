//! Gaussian packet parameters and their two evolution laws.
//!
//! Both flows share `q̇ = p`, `Q̇ = P`, `Ṗ = −D²V(q) Q` and `Ṡ = p²/2 − V(q)`.
//! The classical flow uses `ṗ = −DV(q)`; the corrected flow adds the force
//! `−ε ∂_q V⁽¹⁾(q, Q)` with `V⁽¹⁾ = ¼ tr(QQ* D²V(q))`, which makes the
//! `(q, p, Q, P)` system Hamiltonian with energy [`hamiltonian_eps`].

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, c, CMatrix, RMatrix};
use crate::potentials::PotentialModel;

/// Tolerance for the symplectic relations on construction.
pub const INVARIANT_TOLERANCE: f64 = 1e-10;
/// Residual above which an integration step is rejected.
pub const DRIFT_TOLERANCE: f64 = 1e-8;
/// Largest accepted change of `arg det Q` in one step.
pub const MAX_BRANCH_STEP: f64 = PI / 2.0;

/// Continuous argument of `det Q`, selecting the branch of `(det Q)^{-1/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetBranch {
    pub arg: f64,
}

impl DetBranch {
    pub fn principal(det: Complex64) -> Self {
        Self { arg: det.arg() }
    }

    /// Follows `det` continuously from the current branch; returns the jump.
    pub fn advance(&mut self, det: Complex64) -> f64 {
        let mut delta = det.arg() - self.arg;
        delta -= 2.0 * PI * (delta / (2.0 * PI)).round();
        self.arg += delta;
        delta
    }
}

/// Parameters `(q, p, Q, P, S)` of a Gaussian packet at semiclassical parameter ε.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketParams {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub q_mat: CMatrix,
    pub p_mat: CMatrix,
    pub s: f64,
    pub eps: f64,
    pub branch: DetBranch,
}

impl PacketParams {
    /// Validated constructor; the determinant branch starts at the principal value.
    pub fn new(
        q: Vec<f64>,
        p: Vec<f64>,
        q_mat: CMatrix,
        p_mat: CMatrix,
        s: f64,
        eps: f64,
    ) -> Result<Self> {
        let d = q.len();
        if d == 0 || d > 3 {
            return Err(Error::UnsupportedDimension(d));
        }
        for (name, got) in [
            ("p", p.len()),
            ("Q rows", q_mat.nrows()),
            ("Q cols", q_mat.ncols()),
            ("P rows", p_mat.nrows()),
            ("P cols", p_mat.ncols()),
        ] {
            if got != d {
                return Err(Error::InvalidConfig(format!("{name}: expected {d}, got {got}")));
            }
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("eps = {eps} must be positive")));
        }
        if q.iter().chain(&p).any(|v| !v.is_finite())
            || !matrix::all_finite(&q_mat)
            || !matrix::all_finite(&p_mat)
            || !s.is_finite()
        {
            return Err(Error::InvalidConfig("non-finite packet parameters".into()));
        }
        matrix::inverse(&q_mat)?;
        let (r1, r2) = symplectic_residuals(&q_mat, &p_mat);
        if r1 > INVARIANT_TOLERANCE || r2 > INVARIANT_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "(Q, P) violate the symplectic relations: r1 = {r1:e}, r2 = {r2:e}"
            )));
        }
        let branch = DetBranch::principal(q_mat.determinant());
        Ok(Self {
            q,
            p,
            q_mat,
            p_mat,
            s,
            eps,
            branch,
        })
    }

    /// `Q = I`, `P = iI`, `S = 0`.
    pub fn standard(q: Vec<f64>, p: Vec<f64>, eps: f64) -> Result<Self> {
        let d = q.len();
        Self::new(
            q,
            p,
            matrix::identity(d),
            matrix::scaled_identity(d, c(0.0, 1.0)),
            0.0,
            eps,
        )
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// `(det Q)^{-1/2}` on the tracked branch.
    pub fn det_factor(&self) -> Complex64 {
        let det = self.q_mat.determinant();
        Complex64::from_polar(det.norm().powf(-0.5), -0.5 * self.branch.arg)
    }

    pub fn q_inv(&self) -> Result<CMatrix> {
        matrix::inverse(&self.q_mat)
    }

    /// `P Q⁻¹` (complex symmetric with positive definite imaginary part).
    pub fn pq_inv(&self) -> Result<CMatrix> {
        Ok(&self.p_mat * self.q_inv()?)
    }

    /// `‖Im(PQ⁻¹) − (QQ*)⁻¹‖_F`.
    pub fn imaginary_part_defect(&self) -> Result<f64> {
        let pq = self.pq_inv()?;
        let im = pq.map(|z| c(z.im, 0.0));
        let qq = &self.q_mat * self.q_mat.adjoint();
        Ok(matrix::frobenius(&(im - matrix::inverse(&qq)?)))
    }

    /// Same packet at a different ε (branch preserved).
    pub fn with_eps(&self, eps: f64) -> Self {
        Self {
            eps,
            ..self.clone()
        }
    }
}

/// Time derivative of the packet parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub dq: Vec<f64>,
    pub dp: Vec<f64>,
    pub dq_mat: CMatrix,
    pub dp_mat: CMatrix,
    pub ds: f64,
}

/// Which parameter ODE to follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    Classical,
    Corrected,
}

impl Flow {
    pub fn name(self) -> &'static str {
        match self {
            Flow::Classical => "classical",
            Flow::Corrected => "corrected",
        }
    }
}

fn hessian(pot: &dyn PotentialModel, q: &[f64]) -> RMatrix {
    let d = q.len();
    let t = pot
        .derivative(q, 2)
        .expect("second derivatives are always available");
    RMatrix::from_row_slice(d, d, t.data())
}

/// `V⁽¹⁾(q, Q) = ¼ tr(QQ* D²V(q))`.
pub fn v1_correction(q: &[f64], q_mat: &CMatrix, pot: &dyn PotentialModel) -> f64 {
    let qq = q_mat * q_mat.adjoint();
    let h = matrix::from_real(&hessian(pot, q));
    let tr = (qq * h).trace();
    debug_assert!(tr.im.abs() <= 1e-12 * tr.re.abs().max(1.0));
    0.25 * tr.re
}

/// `∂_q V⁽¹⁾ = ¼ (QQ*)ⱼₖ D³ᵢⱼₖV(q)`.
pub fn grad_v1(q: &[f64], q_mat: &CMatrix, pot: &dyn PotentialModel) -> Vec<f64> {
    let d = q.len();
    let t3 = pot
        .derivative(q, 3)
        .expect("third derivatives are always available");
    let qq = q_mat * q_mat.adjoint();
    (0..d)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..d {
                for k in 0..d {
                    acc += qq[(j, k)].re * t3.get(&[i, j, k]);
                }
            }
            0.25 * acc
        })
        .collect()
}

/// Forces `(ṗ, Ṗ)` of the chosen flow at `(q, Q)`.
fn forces(
    flow: Flow,
    q: &[f64],
    q_mat: &CMatrix,
    eps: f64,
    pot: &dyn PotentialModel,
) -> (Vec<f64>, CMatrix) {
    let mut fp: Vec<f64> = pot.gradient(q).into_iter().map(|g| -g).collect();
    if flow == Flow::Corrected {
        for (f, g) in fp.iter_mut().zip(grad_v1(q, q_mat, pot)) {
            *f -= eps * g;
        }
    }
    let h = matrix::from_real(&hessian(pot, q));
    let fpm = -(h * q_mat);
    (fp, fpm)
}

/// Right-hand side of either flow.
pub fn rhs(flow: Flow, state: &PacketParams, pot: &dyn PotentialModel) -> Tangent {
    let (dp, dp_mat) = forces(flow, &state.q, &state.q_mat, state.eps, pot);
    let p2: f64 = state.p.iter().map(|v| v * v).sum();
    Tangent {
        dq: state.p.clone(),
        dp,
        dq_mat: state.p_mat.clone(),
        dp_mat,
        ds: 0.5 * p2 - pot.value(&state.q),
    }
}

pub fn rhs_classical(state: &PacketParams, pot: &dyn PotentialModel) -> Tangent {
    rhs(Flow::Classical, state, pot)
}

pub fn rhs_corrected(state: &PacketParams, pot: &dyn PotentialModel) -> Tangent {
    rhs(Flow::Corrected, state, pot)
}

/// `Hᵉ = p²/2 + V(q) + (ε/4)(tr(P*P) + tr(QQ* D²V(q)))`.
pub fn hamiltonian_eps(state: &PacketParams, pot: &dyn PotentialModel) -> f64 {
    let pp = (state.p_mat.adjoint() * &state.p_mat).trace().re;
    hamiltonian_classical(state, pot)
        + 0.25 * state.eps * pp
        + state.eps * v1_correction(&state.q, &state.q_mat, pot)
}

/// `H⁰ = p²/2 + V(q)`.
pub fn hamiltonian_classical(state: &PacketParams, pot: &dyn PotentialModel) -> f64 {
    0.5 * state.p.iter().map(|v| v * v).sum::<f64>() + pot.value(&state.q)
}

/// `Jᵉ = q⋄p + (ε/2) Re(PQ* − QP*)` with `(q⋄p)ᵢⱼ = qⱼpᵢ − qᵢpⱼ`.
pub fn semiclassical_angular_momentum(state: &PacketParams) -> Result<RMatrix> {
    let d = state.dim();
    if d < 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    let corr = &state.p_mat * state.q_mat.adjoint() - &state.q_mat * state.p_mat.adjoint();
    Ok(RMatrix::from_fn(d, d, |i, j| {
        state.q[j] * state.p[i] - state.q[i] * state.p[j] + 0.5 * state.eps * corr[(i, j)].re
    }))
}

fn symplectic_residuals(q_mat: &CMatrix, p_mat: &CMatrix) -> (f64, f64) {
    let d = q_mat.nrows();
    let r1 = q_mat.transpose() * p_mat - p_mat.transpose() * q_mat;
    let r2 = q_mat.adjoint() * p_mat
        - p_mat.adjoint() * q_mat
        - matrix::scaled_identity(d, c(0.0, 2.0));
    (matrix::frobenius(&r1), matrix::frobenius(&r2))
}

/// `(‖QᵀP − PᵀQ‖_F, ‖Q*P − P*Q − 2iI‖_F)`.
pub fn check_symplectic_invariants(state: &PacketParams) -> (f64, f64) {
    symplectic_residuals(&state.q_mat, &state.p_mat)
}

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    StormerVerlet,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    /// Relative tolerance for the step-halving self-check.
    pub refine_until: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::StormerVerlet,
            dt: 1e-3,
            t_end: 1.0,
            refine_until: 0.01,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_end > 0.0 && self.dt <= self.t_end) {
            return Err(Error::InvalidConfig(format!(
                "integrator needs 0 < dt <= t_end (dt = {}, t_end = {})",
                self.dt, self.t_end
            )));
        }
        if !(self.refine_until > 0.0 && self.refine_until < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "refine_until = {} outside (0, 1)",
                self.refine_until
            )));
        }
        Ok(())
    }
}

fn verlet(flow: Flow, s: &PacketParams, pot: &dyn PotentialModel, h: f64) -> PacketParams {
    let mut n = s.clone();
    let half = 0.5 * h;
    let (fp, fpm) = forces(flow, &n.q, &n.q_mat, n.eps, pot);
    for (p, f) in n.p.iter_mut().zip(&fp) {
        *p += half * f;
    }
    n.p_mat += fpm * c(half, 0.0);
    n.s -= half * pot.value(&n.q);

    for (q, p) in n.q.iter_mut().zip(&n.p) {
        *q += h * p;
    }
    n.q_mat += &n.p_mat * c(h, 0.0);
    n.s += h * 0.5 * n.p.iter().map(|v| v * v).sum::<f64>();

    let (fp, fpm) = forces(flow, &n.q, &n.q_mat, n.eps, pot);
    for (p, f) in n.p.iter_mut().zip(&fp) {
        *p += half * f;
    }
    n.p_mat += fpm * c(half, 0.0);
    n.s -= half * pot.value(&n.q);
    n
}

fn shifted(s: &PacketParams, k: &Tangent, h: f64) -> PacketParams {
    let mut n = s.clone();
    for (a, b) in n.q.iter_mut().zip(&k.dq) {
        *a += h * b;
    }
    for (a, b) in n.p.iter_mut().zip(&k.dp) {
        *a += h * b;
    }
    n.q_mat += &k.dq_mat * c(h, 0.0);
    n.p_mat += &k.dp_mat * c(h, 0.0);
    n.s += h * k.ds;
    n
}

fn rk4(flow: Flow, s: &PacketParams, pot: &dyn PotentialModel, h: f64) -> PacketParams {
    let k1 = rhs(flow, s, pot);
    let k2 = rhs(flow, &shifted(s, &k1, 0.5 * h), pot);
    let k3 = rhs(flow, &shifted(s, &k2, 0.5 * h), pot);
    let k4 = rhs(flow, &shifted(s, &k3, h), pot);
    let mut n = s.clone();
    let w = h / 6.0;
    for i in 0..s.dim() {
        n.q[i] += w * (k1.dq[i] + 2.0 * k2.dq[i] + 2.0 * k3.dq[i] + k4.dq[i]);
        n.p[i] += w * (k1.dp[i] + 2.0 * k2.dp[i] + 2.0 * k3.dp[i] + k4.dp[i]);
    }
    let cw = c(w, 0.0);
    let two = c(2.0, 0.0);
    n.q_mat += (&k1.dq_mat + &k2.dq_mat * two + &k3.dq_mat * two + &k4.dq_mat) * cw;
    n.p_mat += (&k1.dp_mat + &k2.dp_mat * two + &k3.dp_mat * two + &k4.dp_mat) * cw;
    n.s += w * (k1.ds + 2.0 * k2.ds + 2.0 * k3.ds + k4.ds);
    n
}

/// One step of size `h` starting at time `t`; tracks the determinant branch
/// and rejects branch jumps or symplectic drift.
pub fn step(
    state: &PacketParams,
    flow: Flow,
    pot: &dyn PotentialModel,
    scheme: Scheme,
    h: f64,
    t: f64,
) -> Result<PacketParams> {
    let mut next = match scheme {
        Scheme::StormerVerlet => verlet(flow, state, pot, h),
        Scheme::Rk4 => rk4(flow, state, pot, h),
    };
    let jump = next.branch.advance(next.q_mat.determinant());
    if jump.abs() >= MAX_BRANCH_STEP {
        return Err(Error::BranchJump { jump, t: t + h });
    }
    let (r1, r2) = check_symplectic_invariants(&next);
    let drift = r1.max(r2);
    if drift > DRIFT_TOLERANCE {
        return Err(Error::InvariantDrift { drift, t: t + h });
    }
    Ok(next)
}

/// Sampled solution of a parameter ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub flow: Flow,
    pub times: Vec<f64>,
    pub states: Vec<PacketParams>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &PacketParams {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// State stored at time `t` (within `1e-9` relative).
    pub fn at(&self, t: f64) -> Option<&PacketParams> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|i| &self.states[i])
    }

    /// Writes `t, q_i, p_i, Q_ij_re, Q_ij_im, P_ij_re, P_ij_im, S, H_eps, H_0, r1, r2`.
    pub fn write_csv(&self, path: &Path, pot: &dyn PotentialModel) -> Result<()> {
        let mut out = String::new();
        let d = self.states.first().map(|s| s.dim()).unwrap_or(0);
        out.push_str(&trajectory_header(d));
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![format!("{t:.17e}")];
            row.extend(s.q.iter().map(|v| format!("{v:.17e}")));
            row.extend(s.p.iter().map(|v| format!("{v:.17e}")));
            for m in [&s.q_mat, &s.p_mat] {
                for i in 0..d {
                    for j in 0..d {
                        row.push(format!("{:.17e}", m[(i, j)].re));
                        row.push(format!("{:.17e}", m[(i, j)].im));
                    }
                }
            }
            let (r1, r2) = check_symplectic_invariants(s);
            row.push(format!("{:.17e}", s.s));
            row.push(format!("{:.17e}", hamiltonian_eps(s, pot)));
            row.push(format!("{:.17e}", hamiltonian_classical(s, pot)));
            row.push(format!("{r1:.17e}"));
            row.push(format!("{r2:.17e}"));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Column names of the trajectory CSV for dimension `d`.
pub fn trajectory_header(d: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..d).map(|i| format!("q_{i}")));
    cols.extend((0..d).map(|i| format!("p_{i}")));
    for name in ["Q", "P"] {
        for i in 0..d {
            for j in 0..d {
                cols.push(format!("{name}_{i}{j}_re"));
                cols.push(format!("{name}_{i}{j}_im"));
            }
        }
    }
    cols.extend(["S", "H_eps", "H_0", "r1", "r2"].map(String::from));
    cols.join(",")
}

/// Integrates to `cfg.t_end`, recording every step; the step is shrunk so
/// that an integer number of steps ends exactly at `t_end`.
pub fn integrate(
    state: &PacketParams,
    flow: Flow,
    pot: &dyn PotentialModel,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = (cfg.t_end / cfg.dt - 1e-9).ceil().max(1.0) as usize;
    let h = cfg.t_end / n as f64;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    times.push(0.0);
    states.push(state.clone());
    let mut cur = state.clone();
    for k in 0..n {
        let t = k as f64 * h;
        cur = step(&cur, flow, pot, cfg.scheme, h, t)?;
        times.push((k + 1) as f64 * h);
        states.push(cur.clone());
    }
    Ok(Trajectory {
        flow,
        times,
        states,
    })
}

/// Integrates through the sorted `times` (starting at 0), recording only
/// those instants. Each interval is split into equal steps no longer than `cfg.dt`.
pub fn integrate_to(
    state: &PacketParams,
    flow: Flow,
    pot: &dyn PotentialModel,
    cfg: &IntegratorConfig,
    times: &[f64],
) -> Result<Trajectory> {
    cfg.validate()?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::TimeMismatch("sample times must be sorted and >= 0".into()));
    }
    let mut out_t = Vec::with_capacity(times.len());
    let mut out_s = Vec::with_capacity(times.len());
    let mut cur = state.clone();
    let mut t = 0.0;
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let n = (span / cfg.dt - 1e-9).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for k in 0..n {
                cur = step(&cur, flow, pot, cfg.scheme, h, t + k as f64 * h)?;
            }
            t = target;
        }
        out_t.push(target);
        out_s.push(cur.clone());
    }
    Ok(Trajectory {
        flow,
        times: out_t,
        states: out_s,
    })
}

/// Largest difference in `(q, p)` between two trajectories sampled at the same times.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .flat_map(|(x, y)| {
            x.q.iter()
                .zip(&y.q)
                .chain(x.p.iter().zip(&y.p))
                .map(|(u, v)| (u - v).abs())
        })
        .fold(0.0, f64::max)
}

/// Integrates with successive step halving until two consecutive solutions
/// differ in `(q, p)` by less than `abs_tol`. Returns the finer trajectory,
/// the accepted step and the last observed difference.
pub fn integrate_refined(
    state: &PacketParams,
    flow: Flow,
    pot: &dyn PotentialModel,
    cfg: &IntegratorConfig,
    times: &[f64],
    abs_tol: f64,
    max_halvings: usize,
) -> Result<(Trajectory, f64, f64)> {
    let mut cfg = *cfg;
    let mut coarse = integrate_to(state, flow, pot, &cfg, times)?;
    let mut diff = f64::INFINITY;
    for _ in 0..max_halvings {
        cfg.dt *= 0.5;
        let fine = integrate_to(state, flow, pot, &cfg, times)?;
        diff = trajectory_distance(&coarse, &fine);
        coarse = fine;
        if diff < abs_tol {
            return Ok((coarse, cfg.dt, diff));
        }
    }
    Err(Error::RefinementBudget {
        iterations: max_halvings,
        achieved: diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::Potential;

    fn tors1() -> Potential {
        Potential::Torsional { dim: 1 }
    }

    fn scalar_state(q: f64, p: f64, qm: Complex64, pm: Complex64, eps: f64) -> PacketParams {
        PacketParams::new(
            vec![q],
            vec![p],
            CMatrix::from_element(1, 1, qm),
            CMatrix::from_element(1, 1, pm),
            0.0,
            eps,
        )
        .unwrap()
    }

    #[test]
    fn v1_examples() {
        let h = Potential::Harmonic { omega: vec![1.0] };
        assert!((v1_correction(&[0.3], &matrix::identity(1), &h) - 0.25).abs() < 1e-15);
        assert_eq!(v1_correction(&[0.3], &matrix::identity(1), &Potential::Free { dim: 1 }), 0.0);
        let q2 = matrix::scaled_identity(1, c(2.0, 0.0));
        assert!((v1_correction(&[0.0], &q2, &tors1()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grad_v1_examples() {
        let h = Potential::Harmonic { omega: vec![1.0, 2.0] };
        assert_eq!(grad_v1(&[0.1, 0.2], &matrix::identity(2), &h), vec![0.0, 0.0]);
        let g = grad_v1(&[std::f64::consts::FRAC_PI_2], &matrix::identity(1), &tors1());
        assert!((g[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn rhs_examples() {
        let s = scalar_state(std::f64::consts::FRAC_PI_2, 0.0, c(1.0, 0.0), c(0.0, 1.0), 0.1);
        let cl = rhs_classical(&s, &tors1());
        assert!((cl.dp[0] + 1.0).abs() < 1e-15);
        let co = rhs_corrected(&s, &tors1());
        assert!((co.dp[0] + 0.975).abs() < 1e-15);

        let h = Potential::Harmonic { omega: vec![1.0] };
        let s = scalar_state(0.4, 0.2, c(1.0, 0.0), c(0.0, 1.0), 0.1);
        let a = rhs_classical(&s, &h);
        assert_eq!(a, rhs_corrected(&s, &h));
        assert!((a.dp[0] + 0.4).abs() < 1e-15);
        assert!((a.dp_mat[(0, 0)] + 1.0).norm() < 1e-15);
        let f = rhs_classical(&s, &Potential::Free { dim: 1 });
        assert_eq!(f.dp[0], 0.0);
        assert_eq!(f.dp_mat[(0, 0)], c(0.0, 0.0));
    }

    #[test]
    fn hamiltonian_examples() {
        let h = Potential::Harmonic { omega: vec![1.0] };
        let s = scalar_state(0.0, 0.0, c(1.0, 0.0), c(0.0, 1.0), 0.1);
        assert!((hamiltonian_eps(&s, &h) - 0.05).abs() < 1e-15);
        let free = Potential::Free { dim: 1 };
        let s = scalar_state(0.0, 2.0, c(1.0, 0.0), c(0.0, 1.0), 0.3);
        assert!((hamiltonian_eps(&s, &free) - (2.0 + 0.075)).abs() < 1e-14);
        assert_eq!(hamiltonian_classical(&s, &free), 2.0);
        let s = scalar_state(1.0, 0.0, c(1.0, 0.0), c(0.0, 1.0), 0.3);
        assert_eq!(hamiltonian_classical(&s, &h), 0.5);
    }

    #[test]
    fn angular_momentum_examples() {
        let s = PacketParams::standard(vec![1.0, 0.0], vec![0.0, 1.0], 0.1).unwrap();
        let j = semiclassical_angular_momentum(&s).unwrap();
        assert!((j[(0, 1)] + 1.0).abs() < 1e-15);
        assert!((j[(1, 0)] - 1.0).abs() < 1e-15);
        let one = PacketParams::standard(vec![1.0], vec![0.0], 0.1).unwrap();
        assert!(matches!(
            semiclassical_angular_momentum(&one),
            Err(Error::UnsupportedDimension(1))
        ));
    }

    #[test]
    fn symplectic_residual_examples() {
        let s = PacketParams::standard(vec![0.0, 0.0], vec![0.0, 0.0], 0.1).unwrap();
        assert_eq!(check_symplectic_invariants(&s), (0.0, 0.0));
        let s2 = scalar_state(0.0, 0.0, c(2.0, 0.0), c(0.0, 0.5), 0.1);
        assert_eq!(check_symplectic_invariants(&s2), (0.0, 0.0));
        let (r1, r2) = symplectic_residuals(&matrix::identity(3), &matrix::identity(3));
        assert_eq!(r1, 0.0);
        assert!((r2 - 2.0 * 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constructor_rejects_violations() {
        let r = PacketParams::new(
            vec![0.0],
            vec![0.0],
            matrix::identity(1),
            matrix::identity(1),
            0.0,
            0.1,
        );
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
        let r = PacketParams::new(
            vec![0.0],
            vec![0.0],
            CMatrix::zeros(1, 1),
            matrix::identity(1),
            0.0,
            0.1,
        );
        assert!(matches!(r, Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn branch_follows_winding() {
        let mut b = DetBranch::principal(c(1.0, 0.0));
        for k in 1..=40 {
            let theta = k as f64 * 0.3;
            b.advance(Complex64::from_polar(1.0, theta));
        }
        assert!((b.arg - 12.0).abs() < 1e-12);
    }

    #[test]
    fn free_flow_is_exact() {
        let free = Potential::Free { dim: 1 };
        let s = scalar_state(0.2, 0.7, c(1.0, 0.0), c(0.0, 1.0), 0.1);
        let cfg = IntegratorConfig { dt: 0.01, t_end: 2.0, ..Default::default() };
        let tr = integrate(&s, Flow::Corrected, &free, &cfg).unwrap();
        let e = tr.last();
        assert!((e.q[0] - (0.2 + 0.7 * 2.0)).abs() < 1e-13);
        assert!((e.q_mat[(0, 0)] - c(1.0, 2.0)).norm() < 1e-13);
        assert!((e.s - 0.5 * 0.49 * 2.0).abs() < 1e-13);
    }

    #[test]
    fn harmonic_half_period() {
        let h = Potential::Harmonic { omega: vec![1.0] };
        let s = scalar_state(1.0, 0.0, c(1.0, 0.0), c(0.0, 1.0), 0.1);
        for (dt, tol) in [(1e-2, 1e-4), (1e-3, 1e-6)] {
            let cfg = IntegratorConfig { dt, t_end: std::f64::consts::PI, ..Default::default() };
            let tr = integrate(&s, Flow::Classical, &h, &cfg).unwrap();
            assert!((tr.last().q[0] + 1.0).abs() < tol);
        }
    }

    #[test]
    fn quadratic_flows_coincide() {
        let h = Potential::Harmonic { omega: vec![0.8, 1.3] };
        let s = PacketParams::standard(vec![0.5, -0.2], vec![0.1, 0.3], 0.05).unwrap();
        let cfg = IntegratorConfig { dt: 1e-2, t_end: 2.0, ..Default::default() };
        let a = integrate(&s, Flow::Classical, &h, &cfg).unwrap();
        let b = integrate(&s, Flow::Corrected, &h, &cfg).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn integrate_to_hits_requested_times() {
        let s = scalar_state(1.0, 0.0, c(1.0, 0.0), c(0.0, 1.0), 0.1);
        let cfg = IntegratorConfig { dt: 0.03, t_end: 1.0, ..Default::default() };
        let times = [0.0, 0.1, 0.25, 1.0];
        let tr = integrate_to(&s, Flow::Corrected, &tors1(), &cfg, &times).unwrap();
        assert_eq!(tr.times, times);
        assert_eq!(tr.states[0], s);
        assert!(tr.at(0.25).is_some());
        assert!(tr.at(0.3).is_none());
    }

    #[test]
    fn refinement_converges() {
        let s = scalar_state(1.0, 0.0, c(1.0, 0.0), c(0.0, 1.0), 0.1);
        let cfg = IntegratorConfig { dt: 0.1, t_end: 1.0, ..Default::default() };
        let (_, dt, diff) =
            integrate_refined(&s, Flow::Corrected, &tors1(), &cfg, &[0.5, 1.0], 1e-8, 20).unwrap();
        assert!(diff < 1e-8);
        assert!(dt < 0.1);
    }

    #[test]
    fn branch_jump_is_rejected() {
        // Q(t) ≈ cos 4t + (i/4) sin 4t turns by more than π/2 within h = 0.5
        let h = Potential::Harmonic { omega: vec![4.0] };
        let s = scalar_state(0.0, 0.0, c(1.0, 0.0), c(0.0, 1.0), 0.1);
        let r = step(&s, Flow::Classical, &h, Scheme::StormerVerlet, 0.5, 0.0);
        assert!(matches!(r, Err(Error::BranchJump { .. })));
    }

    #[test]
    fn trajectory_header_layout() {
        assert_eq!(
            trajectory_header(1),
            "t,q_0,p_0,Q_00_re,Q_00_im,P_00_re,P_00_im,S,H_eps,H_0,r1,r2"
        );
    }
}
