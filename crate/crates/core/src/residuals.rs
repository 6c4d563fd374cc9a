//! Residual fields of the Gaussian ansatz.
//!
//! Along the corrected flow the packets satisfy
//! `iε ∂ₜφₙ = Ĥφₙ + ε^{3/2} α φₙ` with
//! `α = ε^{-1/2} ∂_qV⁽¹⁾·(x − q) + ε^{-3/2}(Σ_{k≤2} DᵏV(q)(x − q)ᵏ/k! − V(x))`,
//! split as `α = α⁽⁰⁾ + ε^{1/2} α⁽¹⁾` where, with `ξ = ε^{-1/2}(x − q)`,
//! `α⁽⁰⁾ = ∂_qV⁽¹⁾·ξ − D³V(q)ξ³/6` and
//! `α⁽¹⁾ = ε^{-2}(Σ_{k≤3} DᵏV(q)(x − q)ᵏ/k! − V(x))`.
//! Along the classical flow the residual is `α_Hag = ε^{-3/2}(Σ_{k≤2} … − V(x))`.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::basis::{self, BasisSet};
use crate::dynamics::{self, Flow, PacketParams, Tangent};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::matrix::{c, CMatrix};
use crate::multi_index::MultiIndex;
use crate::potentials::{PotentialModel, Tensor};
use crate::spectral::Spectral;
use crate::wave::{self, WaveFunction};

/// Which part of `α` a field carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlphaPart {
    Full,
    Alpha0,
    Alpha1,
    /// `α_Hag`, the classical-flow residual.
    Hagedorn,
}

/// Derivatives of `V` at the packet centre, shared by all pointwise formulas.
#[derive(Debug, Clone)]
pub struct Taylor {
    q: Vec<f64>,
    eps: f64,
    v: f64,
    grad: Vec<f64>,
    hess: Tensor,
    third: Tensor,
    grad_v1: Vec<f64>,
}

/// Pointwise values of `α` and its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaValues {
    pub full: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub hagedorn: f64,
}

impl AlphaValues {
    pub fn part(&self, part: AlphaPart) -> f64 {
        match part {
            AlphaPart::Full => self.full,
            AlphaPart::Alpha0 => self.alpha0,
            AlphaPart::Alpha1 => self.alpha1,
            AlphaPart::Hagedorn => self.hagedorn,
        }
    }
}

impl Taylor {
    pub fn new(q: &[f64], q_mat: &CMatrix, pot: &dyn PotentialModel, eps: f64) -> Result<Self> {
        if q.len() != pot.dim() {
            return Err(Error::DimensionMismatch {
                expected: pot.dim(),
                got: q.len(),
            });
        }
        Ok(Self {
            q: q.to_vec(),
            eps,
            v: pot.value(q),
            grad: pot.gradient(q),
            hess: pot.derivative(q, 2)?,
            third: pot.derivative(q, 3)?,
            grad_v1: dynamics::grad_v1(q, q_mat, pot),
        })
    }

    pub fn from_params(params: &PacketParams, pot: &dyn PotentialModel) -> Result<Self> {
        Self::new(&params.q, &params.q_mat, pot, params.eps)
    }

    /// `D³V(q)`.
    pub fn third(&self) -> &Tensor {
        &self.third
    }

    /// `∂_qV⁽¹⁾(q, Q)`.
    pub fn grad_v1(&self) -> &[f64] {
        &self.grad_v1
    }

    fn offset(&self, x: &[f64]) -> [f64; 3] {
        let mut y = [0.0; 3];
        for i in 0..self.q.len() {
            y[i] = x[i] - self.q[i];
        }
        y
    }

    /// `α`, `α⁽⁰⁾`, `α⁽¹⁾` and `α_Hag` at `x`.
    pub fn alpha(&self, x: &[f64], vx: f64) -> AlphaValues {
        let d = self.q.len();
        let y = self.offset(x);
        let y = &y[..d];
        let t1: f64 = self.grad.iter().zip(y).map(|(g, v)| g * v).sum();
        let t2 = 0.5 * self.hess.contract(y);
        let t3 = self.third.contract(y) / 6.0;
        let g1: f64 = self.grad_v1.iter().zip(y).map(|(g, v)| g * v).sum();
        let eps = self.eps;
        let se = eps.sqrt();
        let rem2 = self.v + t1 + t2 - vx;
        let rem3 = rem2 + t3;
        let hagedorn = rem2 / (eps * se);
        AlphaValues {
            full: g1 / se + hagedorn,
            alpha0: g1 / se - t3 / (eps * se),
            alpha1: rem3 / (eps * eps),
            hagedorn,
        }
    }

    /// `β = β⁽⁰⁾ + ε^{1/2}β⁽¹⁾` at `x`, returned as `(β, β⁽⁰⁾, β⁽¹⁾)`.
    ///
    /// `β⁽⁰⁾ᵢ = −i(∂ᵢV⁽¹⁾ − ½D³ᵢⱼₖV(q)ξⱼξₖ)` and
    /// `β⁽¹⁾ᵢ = −iε^{-3/2}(DᵢV(q) + D²ᵢⱼV(q)yⱼ + ½D³ᵢⱼₖV(q)yⱼyₖ − DᵢV(x))`.
    pub fn beta(
        &self,
        x: &[f64],
        grad_x: &[f64],
    ) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
        let d = self.q.len();
        let y = self.offset(x);
        let y = &y[..d];
        let eps = self.eps;
        let se = eps.sqrt();
        let hy = self.hess.contract_tail(y);
        let tyy = self.third.contract_tail(y);
        let mut full = Vec::with_capacity(d);
        let mut b0 = Vec::with_capacity(d);
        let mut b1 = Vec::with_capacity(d);
        for i in 0..d {
            let zero = self.grad_v1[i] - 0.5 * tyy[i] / eps;
            let one = (self.grad[i] + hy[i] + 0.5 * tyy[i] - grad_x[i]) / (eps * se);
            b0.push(c(0.0, -zero));
            b1.push(c(0.0, -one));
            full.push(c(0.0, -(zero + se * one)));
        }
        (full, b0, b1)
    }
}

/// `α` (or one of its parts) at one point, for the given packet centre.
pub fn alpha(
    q: &[f64],
    q_mat: &CMatrix,
    pot: &dyn PotentialModel,
    x: &[f64],
    eps: f64,
) -> Result<AlphaValues> {
    Ok(Taylor::new(q, q_mat, pot, eps)?.alpha(x, pot.value(x)))
}

/// `α_Hag(x) = ε^{-3/2}(Σ_{k≤2} DᵏV(q)(x − q)ᵏ/k! − V(x))`.
pub fn alpha_hagedorn(q: &[f64], pot: &dyn PotentialModel, x: &[f64], eps: f64) -> Result<f64> {
    let d = q.len();
    Ok(Taylor::new(q, &CMatrix::zeros(d, d), pot, eps)?
        .alpha(x, pot.value(x))
        .hagedorn)
}

/// `α` part sampled on a grid.
pub fn alpha_field(taylor: &Taylor, pot: &dyn PotentialModel, grid: &Grid, part: AlphaPart) -> Vec<f64> {
    let d = grid.dim();
    crate::par::collect(grid.len(), |i| {
        let mut x = [0.0; 3];
        grid.node(i, &mut x[..d]);
        taylor.alpha(&x[..d], pot.value(&x[..d])).part(part)
    })
}

/// `ζ = α·φ` on a grid.
#[derive(Debug, Clone)]
pub struct ResidualField {
    pub base: WaveFunction,
    pub component: AlphaPart,
    pub eps: f64,
}

/// `ζ = α_part · φ`.
pub fn zeta(
    params: &PacketParams,
    pot: &dyn PotentialModel,
    phi: &WaveFunction,
    part: AlphaPart,
) -> Result<ResidualField> {
    let taylor = Taylor::from_params(params, pot)?;
    let a = alpha_field(&taylor, pot, phi.grid(), part);
    let base = phi.with_values(
        phi.values()
            .iter()
            .zip(&a)
            .map(|(f, v)| f * v)
            .collect(),
    );
    Ok(ResidualField {
        base,
        component: part,
        eps: params.eps,
    })
}

/// Pointwise `β` for one packet centre.
pub fn beta(
    q: &[f64],
    q_mat: &CMatrix,
    pot: &dyn PotentialModel,
    x: &[f64],
    eps: f64,
) -> Result<(Vec<Complex64>, Vec<Complex64>, Vec<Complex64>)> {
    let t = Taylor::new(q, q_mat, pot, eps)?;
    Ok(t.beta(x, &pot.gradient(x)))
}

/// `maxᵢ ‖η̂ᵢζ₀ − βᵢφ₀ − (PQ⁻¹)ᵢⱼξ̂ⱼζ₀‖` with `η̂ = ε^{-1/2}(p̂ − p)`.
pub fn eta_zeta_identity_residual(
    params: &PacketParams,
    pot: &dyn PotentialModel,
    grid: &Grid,
) -> Result<f64> {
    let spectral = Spectral::new(grid);
    let phi0 = basis::eval_phi0_with(params, &spectral)?;
    let z = zeta(params, pot, &phi0, AlphaPart::Full)?.base;
    let taylor = Taylor::from_params(params, pot)?;
    let b = params.pq_inv()?;
    let d = params.dim();
    let se = params.eps.sqrt();
    let betas: Vec<Vec<Complex64>> = {
        let mut out = vec![Vec::with_capacity(grid.len()); d];
        let mut x = vec![0.0; d];
        for i in 0..grid.len() {
            grid.node(i, &mut x);
            let (full, _, _) = taylor.beta(&x, &pot.gradient(&x));
            for (k, v) in full.into_iter().enumerate() {
                out[k].push(v);
            }
        }
        out
    };
    let xi_z: Vec<WaveFunction> = (0..d)
        .map(|j| Ok(wave::apply_position(&z, j, &params.q)?.scale(c(1.0 / se, 0.0))))
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for i in 0..d {
        let eta = wave::apply_momentum_with(&spectral, &z, i)?
            .axpy(c(-params.p[i], 0.0), &z)?
            .scale(c(1.0 / se, 0.0));
        let mut rhs: Vec<Complex64> = phi0
            .values()
            .iter()
            .zip(&betas[i])
            .map(|(f, bv)| f * bv)
            .collect();
        for j in 0..d {
            for (r, v) in rhs.iter_mut().zip(xi_z[j].values()) {
                *r += b[(i, j)] * v;
            }
        }
        let diff = eta.sub(&phi0.with_values(rhs))?;
        worst = worst.max(wave::l2_norm(&diff));
    }
    Ok(worst)
}

/// Coefficients `cₙ`, `|n| = 3`, with `α⁽⁰⁾φ₀ = Σ cₙφₙ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThirdStateCoefficients(pub BTreeMap<MultiIndex, Complex64>);

impl ThirdStateCoefficients {
    pub fn get(&self, n: &MultiIndex) -> Complex64 {
        self.0.get(n).copied().unwrap_or_default()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.values().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `Σ cₙφₙ` using the functions of `basis`.
    pub fn reconstruct(&self, basis: &BasisSet) -> Result<WaveFunction> {
        let mut acc = basis.phi0().scale(c(0.0, 0.0));
        for (n, coef) in &self.0 {
            acc = acc.axpy(*coef, basis.get(n)?)?;
        }
        Ok(acc)
    }
}

/// `cₙ = −(√(n!)/(12√2)) Σ T_{ijk} Q_{il} Q_{jm} Q_{kn'}`, summed over ordered
/// triples `(l, m, n')` with `e_l + e_m + e_{n'} = n`, where `T = D³V(q)`.
///
/// For `d = 1` this is `−T Q³ / (4√3)`.
pub fn third_state_coefficients(
    q: &[f64],
    q_mat: &CMatrix,
    pot: &dyn PotentialModel,
) -> Result<ThirdStateCoefficients> {
    let d = q.len();
    let t = pot.derivative(q, 3)?;
    // U_{lmn} = T_{ijk} Q_{il} Q_{jm} Q_{kn}
    let mut u = vec![c(0.0, 0.0); d * d * d];
    for l in 0..d {
        for m in 0..d {
            for n in 0..d {
                let mut acc = c(0.0, 0.0);
                for i in 0..d {
                    for j in 0..d {
                        for k in 0..d {
                            let tv = t.get(&[i, j, k]);
                            if tv != 0.0 {
                                acc += q_mat[(i, l)] * q_mat[(j, m)] * q_mat[(k, n)] * tv;
                            }
                        }
                    }
                }
                u[(l * d + m) * d + n] = acc;
            }
        }
    }
    let mut sums: BTreeMap<MultiIndex, Complex64> = MultiIndex::of_order(d, 3)
        .into_iter()
        .map(|n| (n, c(0.0, 0.0)))
        .collect();
    for l in 0..d {
        for m in 0..d {
            for n in 0..d {
                let idx = MultiIndex::zero(d).raised(l).raised(m).raised(n);
                *sums.get_mut(&idx).expect("order-3 index") += u[(l * d + m) * d + n];
            }
        }
    }
    let pre = -1.0 / (12.0 * std::f64::consts::SQRT_2);
    Ok(ThirdStateCoefficients(
        sums.into_iter()
            .map(|(n, s)| {
                let w = pre * n.factorial().sqrt();
                (n, s * w)
            })
            .collect(),
    ))
}

/// Projections `⟨α⁽⁰⁾φ₀, φₖ⟩` for `|k| ≤ 2` together with `‖α⁽⁰⁾φ₀‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projections {
    pub values: BTreeMap<MultiIndex, Complex64>,
    pub field_norm: f64,
}

impl Projections {
    /// Largest `|⟨α⁽⁰⁾φ₀, φₖ⟩|` relative to `‖α⁽⁰⁾φ₀‖` (absolute when the field vanishes).
    pub fn max_relative(&self) -> f64 {
        let m = self.values.values().map(|z| z.norm()).fold(0.0, f64::max);
        if self.field_norm > 0.0 {
            m / self.field_norm
        } else {
            m
        }
    }
}

pub fn orthogonality_projections(
    params: &PacketParams,
    pot: &dyn PotentialModel,
    basis: &BasisSet,
) -> Result<Projections> {
    let z = zeta(params, pot, basis.phi0(), AlphaPart::Alpha0)?.base;
    let mut values = BTreeMap::new();
    for k in MultiIndex::up_to(params.dim(), 2) {
        values.insert(k.clone(), wave::inner_product(&z, basis.get(&k)?)?);
    }
    Ok(Projections {
        values,
        field_norm: wave::l2_norm(&z),
    })
}

/// `‖α⁽⁰⁾φ₀ − Σ_{|n|=3} cₙφₙ‖ / ‖α⁽⁰⁾φ₀‖` (absolute when the field vanishes).
pub fn third_state_reconstruction_error(
    params: &PacketParams,
    pot: &dyn PotentialModel,
    basis: &BasisSet,
) -> Result<f64> {
    let z = zeta(params, pot, basis.phi0(), AlphaPart::Alpha0)?.base;
    let coeffs = third_state_coefficients(&params.q, &params.q_mat, pot)?;
    let diff = wave::distance(&z, &coeffs.reconstruct(basis)?)?;
    let norm = wave::l2_norm(&z);
    Ok(if norm > 0.0 { diff / norm } else { diff })
}

/// `⟨ζ₀^Hag, φ_{eⱼ}⟩ + (1/√2) Σ_c Q̄_{cj} ∂_{q_c}V⁽¹⁾` for every `j`.
pub fn hagedorn_projection_remainder(
    params: &PacketParams,
    pot: &dyn PotentialModel,
    basis: &BasisSet,
) -> Result<Vec<Complex64>> {
    let d = params.dim();
    let z = zeta(params, pot, basis.phi0(), AlphaPart::Hagedorn)?.base;
    let g = dynamics::grad_v1(&params.q, &params.q_mat, pot);
    (0..d)
        .map(|j| {
            let ip = wave::inner_product(&z, basis.get(&MultiIndex::unit(d, j))?)?;
            let lead: Complex64 = (0..d)
                .map(|cc| params.q_mat[(cc, j)].conj() * g[cc])
                .sum::<Complex64>()
                / std::f64::consts::SQRT_2;
            Ok(ip + lead)
        })
        .collect()
}

/// `max_j ‖𝒵(t)‖` style series: `‖ψ(t) − φₙ(t)‖` for each snapshot.
pub fn wavefunction_error(
    trajectory: &[PacketParams],
    reference: &[WaveFunction],
    n: &MultiIndex,
) -> Result<Vec<f64>> {
    if trajectory.len() != reference.len() {
        return Err(Error::TimeMismatch(format!(
            "{} packet states against {} reference snapshots",
            trajectory.len(),
            reference.len()
        )));
    }
    trajectory
        .iter()
        .zip(reference)
        .map(|(params, psi)| {
            let phi = packet_state(params, psi.grid(), n)?;
            wave::distance(psi, &phi)
        })
        .collect()
}

/// `φₙ` for the given parameters on `grid` (recurrence construction).
pub fn packet_state(params: &PacketParams, grid: &Grid, n: &MultiIndex) -> Result<WaveFunction> {
    if n.order() == 0 {
        return basis::eval_phi0(params, grid);
    }
    let set = basis::ladder_recurrence_eval(params, n.order(), grid)?;
    Ok(set.get(n)?.clone())
}

fn flow_part(flow: Flow) -> AlphaPart {
    match flow {
        Flow::Classical => AlphaPart::Hagedorn,
        Flow::Corrected => AlphaPart::Full,
    }
}

/// `∂ₜφ₀` along the given flow, from the log-derivative of the Gaussian:
/// `−½tr(Q⁻¹Q̇) + (i/ε)(−q̇ᵀBy + ½yᵀḂy + ṗ·y − p·q̇ + Ṡ)`, `B = PQ⁻¹`.
fn phi0_time_derivative(
    params: &PacketParams,
    tangent: &Tangent,
    phi0: &WaveFunction,
) -> Result<WaveFunction> {
    let d = params.dim();
    let q_inv = params.q_inv()?;
    let b = &params.p_mat * &q_inv;
    let b_dot = &tangent.dp_mat * &q_inv - &b * &tangent.dq_mat * &q_inv;
    let tr = -0.5 * (&q_inv * &tangent.dq_mat).trace();
    let bq: Vec<Complex64> = (0..d)
        .map(|j| (0..d).map(|i| b[(i, j)] * tangent.dq[i]).sum())
        .collect();
    let pq: f64 = params.p.iter().zip(&tangent.dq).map(|(a, b)| a * b).sum();
    let inv_eps = c(0.0, 1.0 / params.eps);
    let grid = phi0.grid();
    let values: Vec<Complex64> = crate::par::collect(grid.len(), |i| {
        let mut x = [0.0; 3];
        grid.node(i, &mut x[..d]);
        let mut y = [0.0; 3];
        for k in 0..d {
            y[k] = x[k] - params.q[k];
        }
        let mut s = c(tangent.ds - pq, 0.0);
        for k in 0..d {
            s += -bq[k] * y[k] + tangent.dp[k] * y[k];
            for l in 0..d {
                s += b_dot[(k, l)] * (0.5 * y[k] * y[l]);
            }
        }
        (tr + inv_eps * s) * phi0.values()[i]
    });
    Ok(phi0.with_values(values))
}

/// Components `(d𝒜*ⱼ/dt) f` with
/// `d𝒜*/dt = (i/√(2ε))(Ṗ*(x − q) − P*q̇ − Q̇*(p̂ − p) + Q*ṗ)`.
fn raising_time_derivative(
    params: &PacketParams,
    tangent: &Tangent,
    spectral: &Spectral,
    f: &WaveFunction,
) -> Result<Vec<WaveFunction>> {
    let d = params.dim();
    let pre = c(0.0, 1.0 / (2.0 * params.eps).sqrt());
    let ys: Vec<WaveFunction> = (0..d)
        .map(|k| wave::apply_position(f, k, &params.q))
        .collect::<Result<_>>()?;
    let ms: Vec<WaveFunction> = (0..d)
        .map(|k| {
            wave::apply_momentum_with(spectral, f, k)?.axpy(c(-params.p[k], 0.0), f)
        })
        .collect::<Result<_>>()?;
    (0..d)
        .map(|j| {
            let mut acc = f.scale(c(0.0, 0.0));
            let mut constant = c(0.0, 0.0);
            for k in 0..d {
                acc = acc.axpy(pre * tangent.dp_mat[(k, j)].conj(), &ys[k])?;
                acc = acc.axpy(-pre * tangent.dq_mat[(k, j)].conj(), &ms[k])?;
                constant += -params.p_mat[(k, j)].conj() * tangent.dq[k]
                    + params.q_mat[(k, j)].conj() * tangent.dp[k];
            }
            acc.axpy(pre * constant, f)
        })
        .collect()
}

/// Residual norms of the Schrödinger-type equation
/// `iε∂ₜφₙ − Ĥφₙ − ε^{3/2}αφₙ`, relative to `‖Ĥφₙ‖`, for all `|n| ≤ max_order`.
///
/// `∂ₜφₙ` is assembled by the chain rule from the flow's right-hand side:
/// `∂ₜφ_{n+eⱼ} = ((d𝒜*ⱼ/dt)φₙ + 𝒜*ⱼ∂ₜφₙ)/√(nⱼ + 1)`.
pub fn schrodinger_residual(
    params: &PacketParams,
    pot: &dyn PotentialModel,
    flow: Flow,
    max_order: usize,
    grid: &Grid,
) -> Result<BTreeMap<MultiIndex, f64>> {
    let spectral = Spectral::new(grid);
    let set = basis::ladder_recurrence_eval(params, max_order, grid)?;
    let tangent = dynamics::rhs(flow, params, pot);
    let d = params.dim();
    let mut dots: BTreeMap<MultiIndex, WaveFunction> = BTreeMap::new();
    dots.insert(
        MultiIndex::zero(d),
        phi0_time_derivative(params, &tangent, set.phi0())?,
    );
    for m in MultiIndex::up_to(d, max_order).into_iter().skip(1) {
        let j = m.entries().iter().position(|&v| v > 0).expect("nonzero");
        let n = m.lowered(j).expect("nonzero");
        let da = raising_time_derivative(params, &tangent, &spectral, set.get(&n)?)?;
        let a_dot = basis::apply_raising(params, &spectral, &dots[&n])?;
        let norm = 1.0 / ((n.get(j) + 1) as f64).sqrt();
        let v = da[j].add(&a_dot[j])?.scale(c(norm, 0.0));
        dots.insert(m, v);
    }
    let part = flow_part(flow);
    let mut out = BTreeMap::new();
    let e32 = params.eps.powf(1.5);
    for n in MultiIndex::up_to(d, max_order) {
        let phi = set.get(&n)?;
        let h_phi = wave::apply_hamiltonian(&spectral, phi, pot);
        let z = zeta(params, pot, phi, part)?.base;
        let lhs = dots[&n].scale(c(0.0, params.eps));
        let res = lhs.sub(&h_phi)?.axpy(c(-e32, 0.0), &z)?;
        out.insert(n, wave::l2_norm(&res) / wave::l2_norm(&h_phi));
    }
    Ok(out)
}

/// `maxⱼ ‖(iε d𝒜*ⱼ/dt + [𝒜*ⱼ, Ĥ]) f − (ε²/√2)(Q*∂ₓα)ⱼ f‖` along the corrected flow.
pub fn raising_evolution_residual(
    params: &PacketParams,
    pot: &dyn PotentialModel,
    f: &WaveFunction,
) -> Result<f64> {
    let grid = f.grid().clone();
    let spectral = Spectral::new(&grid);
    let d = params.dim();
    let tangent = dynamics::rhs_corrected(params, pot);
    let da = raising_time_derivative(params, &tangent, &spectral, f)?;
    let hf = wave::apply_hamiltonian(&spectral, f, pot);
    let a_hf = basis::apply_raising(params, &spectral, &hf)?;
    let af = basis::apply_raising(params, &spectral, f)?;
    let taylor = Taylor::from_params(params, pot)?;
    // ∂ₓα = i ε^{-1/2} β
    let se = params.eps.sqrt();
    let mut grad_alpha: Vec<Vec<Complex64>> = vec![Vec::with_capacity(grid.len()); d];
    let mut x = vec![0.0; d];
    for i in 0..grid.len() {
        grid.node(i, &mut x);
        let (full, _, _) = taylor.beta(&x, &pot.gradient(&x));
        for k in 0..d {
            grad_alpha[k].push(full[k] * c(0.0, 1.0 / se));
        }
    }
    let pre = params.eps * params.eps / std::f64::consts::SQRT_2;
    let mut worst: f64 = 0.0;
    for j in 0..d {
        let h_af = wave::apply_hamiltonian(&spectral, &af[j], pot);
        let lhs = da[j]
            .scale(c(0.0, params.eps))
            .add(&a_hf[j])?
            .sub(&h_af)?;
        let rhs: Vec<Complex64> = (0..grid.len())
            .map(|i| {
                let mut s = c(0.0, 0.0);
                for k in 0..d {
                    s += params.q_mat[(k, j)].conj() * grad_alpha[k][i];
                }
                s * pre * f.values()[i]
            })
            .collect();
        worst = worst.max(wave::l2_norm(&lhs.sub(&f.with_values(rhs))?));
    }
    Ok(worst)
}

/// One-step check of `𝒵(h) = iε^{1/2} ∫₀ʰ U(h − s) ζ(s) ds`, where
/// `U(t) = exp(−iĤt/ε)` and `𝒵(h) = ψ(h) − φ₀(h)` with `ψ(0) = φ₀(0)`.
///
/// The integral is replaced by the trapezoidal rule, so the returned relative
/// mismatch `‖𝒵(h) − rule‖ / ‖𝒵(h)‖` is `O(h²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagicFormulaCheck {
    pub error_norm: f64,
    pub quadrature_norm: f64,
    pub mismatch: f64,
}

pub fn magic_formula_check(
    params: &PacketParams,
    pot: &dyn PotentialModel,
    flow: Flow,
    h: f64,
    grid: &Grid,
    substeps: usize,
) -> Result<MagicFormulaCheck> {
    use crate::reference::Propagator;
    let cfg = dynamics::IntegratorConfig {
        scheme: dynamics::Scheme::Rk4,
        dt: h / 64.0,
        t_end: h,
        refine_until: 0.01,
    };
    let end = dynamics::integrate(params, flow, pot, &cfg)?.last().clone();
    let phi_start = basis::eval_phi0(params, grid)?;
    let phi_end = basis::eval_phi0(&end, grid)?;
    let part = flow_part(flow);
    let z_start = zeta(params, pot, &phi_start, part)?.base;
    let z_end = zeta(&end, pot, &phi_end, part)?.base;
    let prop = Propagator::new(grid, pot, h / substeps as f64, params.eps);
    let mut psi = phi_start.clone();
    let mut zs = z_start.clone();
    for _ in 0..substeps {
        prop.step(psi.values_mut());
        prop.step(zs.values_mut());
    }
    let err = psi.sub(&phi_end)?;
    let quad = zs.add(&z_end)?.scale(c(0.0, 0.5 * h * params.eps.sqrt()));
    let err_norm = wave::l2_norm(&err);
    Ok(MagicFormulaCheck {
        error_norm: err_norm,
        quadrature_norm: wave::l2_norm(&quad),
        mismatch: wave::distance(&err, &quad)? / err_norm,
    })
}
