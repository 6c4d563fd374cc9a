//! Small dense complex matrices (the `Q`, `P` width matrices of a packet).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;
pub type CVector = DVector<Complex64>;

/// Condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

/// `s * I` for a complex scalar.
pub fn scaled_identity(d: usize, s: Complex64) -> CMatrix {
    CMatrix::from_diagonal_element(d, d, s)
}

pub fn from_real(m: &RMatrix) -> CMatrix {
    m.map(|x| c(x, 0.0))
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Frobenius-norm condition estimate `‖A‖_F ‖A⁻¹‖_F`; infinite when singular.
pub fn condition_estimate(m: &CMatrix) -> f64 {
    match m.clone().try_inverse() {
        Some(inv) if inv.iter().all(|z| z.is_finite()) => frobenius(m) * frobenius(&inv),
        _ => f64::INFINITY,
    }
}

/// Inverse with a conditioning check.
pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    let inv = m.clone().try_inverse().ok_or(Error::SingularMatrix {
        condition: f64::INFINITY,
    })?;
    let condition = frobenius(m) * frobenius(&inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::SingularMatrix { condition });
    }
    Ok(inv)
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.is_finite())
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}
