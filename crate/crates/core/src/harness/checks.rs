//! Validation suites behind `basis-check` and `residual-check`.

use crate::basis::{self, BasisSet};
use crate::dynamics::{Flow, PacketParams};
use crate::error::Result;
use crate::matrix::c;
use crate::multi_index::MultiIndex;
use crate::potentials::PotentialModel;
use crate::residuals;
use crate::spectral::Spectral;
use crate::wave;

/// One measured quantity against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value < self.tolerance
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(Check::passed)
}

pub fn checks_csv(checks: &[Check]) -> String {
    let mut out = String::from("name,value,tolerance,passed\n");
    for ch in checks {
        out.push_str(&format!(
            "{},{:.17e},{:e},{}\n",
            ch.name,
            ch.value,
            ch.tolerance,
            ch.passed()
        ));
    }
    out
}

/// Orthonormality, ladder identities and agreement of the two constructions
/// for basis functions up to `max_order`.
pub fn basis_suite(params: &PacketParams, max_order: usize) -> Result<Vec<Check>> {
    let d = params.dim();
    let grid = basis::grid_for_packet(params, max_order)?;
    let spectral = Spectral::new(&grid);
    let spectral_set = basis::build_basis(params, max_order, &grid)?;
    let rec = basis::ladder_recurrence_eval(params, max_order, &grid)?;
    let mut out = vec![
        Check::new("gram_spectral", spectral_set.gram_deviation()?, 1e-7),
        Check::new("gram_recurrence", rec.gram_deviation()?, 1e-7),
        Check::new("lowering_of_ground", basis::lowering_of_ground(params, &spectral)?, 1e-8),
        Check::new("construction_agreement", spectral_set.max_difference(&rec)?, 1e-7),
    ];
    let inner = max_order.saturating_sub(1);
    let mut comm: f64 = 0.0;
    let mut pos: f64 = 0.0;
    let mut mom: f64 = 0.0;
    for n in MultiIndex::up_to(d, inner) {
        let f = rec.get(&n)?;
        comm = comm.max(basis::commutator_defect(params, &spectral, f)?);
        let xs = basis::position_via_ladder(&rec, &n)?;
        let ps = basis::momentum_via_ladder(&rec, &n)?;
        for k in 0..d {
            let direct_x = wave::apply_position(f, k, &params.q)?;
            pos = pos.max(wave::distance(&xs[k], &direct_x)?);
            let direct_p =
                wave::apply_momentum_with(&spectral, f, k)?.axpy(c(-params.p[k], 0.0), f)?;
            mom = mom.max(wave::distance(&ps[k], &direct_p)?);
        }
    }
    out.push(Check::new("commutator", comm, 1e-7));
    out.push(Check::new("position_via_ladder", pos, 1e-7));
    out.push(Check::new("momentum_via_ladder", mom, 1e-7));
    Ok(out)
}

/// Orthogonality of `α⁽⁰⁾φ₀` to low states, third-state reconstruction and the residual identities.
pub fn residual_suite(params: &PacketParams, pot: &dyn PotentialModel) -> Result<Vec<Check>> {
    let d = params.dim();
    let grid = basis::grid_for_packet(params, 4)?;
    let set: BasisSet = basis::ladder_recurrence_eval(params, 3, &grid)?;
    let mut out = vec![
        Check::new(
            "orthogonality",
            residuals::orthogonality_projections(params, pot, &set)?.max_relative(),
            1e-7,
        ),
        Check::new(
            "third_state_reconstruction",
            residuals::third_state_reconstruction_error(params, pot, &set)?,
            1e-6,
        ),
        Check::new(
            "eta_zeta",
            residuals::eta_zeta_identity_residual(params, pot, &grid)?,
            1e-7,
        ),
    ];
    for flow in [Flow::Corrected, Flow::Classical] {
        let r = residuals::schrodinger_residual(params, pot, flow, 2, &grid)?;
        let worst = r.values().copied().fold(0.0, f64::max);
        out.push(Check::new(format!("schrodinger_{}", flow.name()), worst, 1e-6));
    }
    let mut raising: f64 = 0.0;
    for n in MultiIndex::up_to(d, 1) {
        raising = raising.max(residuals::raising_evolution_residual(params, pot, set.get(&n)?)?);
    }
    out.push(Check::new("raising_evolution", raising, 1e-6));
    Ok(out)
}
