//! Wave functions sampled on a grid, inner products and basic observables.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::par;
use crate::potentials::PotentialModel;
use crate::spectral::Spectral;

/// Spectral tail mass above which a resolution warning is emitted.
pub const TAIL_WARNING: f64 = 1e-8;
/// Tolerance on the norm of states passed to [`expectation`].
pub const NORM_TOLERANCE: f64 = 1e-8;
/// Largest imaginary residue accepted from a Hermitian expectation value.
pub const IMAG_TOLERANCE: f64 = 1e-9;

/// Complex samples `f(xₖ)` on a [`Grid`], tagged with the semiclassical parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid,
    values: Vec<Complex64>,
    eps: f64,
}

impl WaveFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>, eps: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("eps = {eps} must be positive")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite wave function samples".into()));
        }
        Ok(Self { grid, values, eps })
    }

    pub fn zeros(grid: &Grid, eps: f64) -> Self {
        Self {
            values: vec![Complex64::default(); grid.len()],
            grid: grid.clone(),
            eps,
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn<F>(grid: &Grid, eps: f64, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Sync + Send,
    {
        let d = grid.dim();
        let values = par::collect(grid.len(), |i| {
            let mut x = [0.0; 3];
            grid.node(i, &mut x[..d]);
            f(&x[..d])
        });
        Self {
            grid: grid.clone(),
            values,
            eps,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn check_compatible(&self, other: &WaveFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                left: self.grid.to_string(),
                right: other.grid.to_string(),
            });
        }
        if self.eps != other.eps {
            return Err(Error::EpsMismatch {
                left: self.eps,
                right: other.eps,
            });
        }
        Ok(())
    }

    /// Same grid and ε, new samples.
    pub fn with_values(&self, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            grid: self.grid.clone(),
            values,
            eps: self.eps,
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|_, v| v * c)
    }

    /// Pointwise `g(i, f(xᵢ))`.
    pub fn map<G>(&self, g: G) -> Self
    where
        G: Fn(usize, Complex64) -> Complex64 + Sync + Send,
    {
        self.with_values(par::collect(self.values.len(), |i| g(i, self.values[i])))
    }

    /// Pointwise multiplication by `m(x)`.
    pub fn multiply<M>(&self, m: M) -> Self
    where
        M: Fn(&[f64]) -> Complex64 + Sync + Send,
    {
        let d = self.grid.dim();
        self.map(|i, v| {
            let mut x = [0.0; 3];
            self.grid.node(i, &mut x[..d]);
            v * m(&x[..d])
        })
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: Complex64, other: &WaveFunction) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(self.map(|i, v| v + c * other.values[i]))
    }

    pub fn sub(&self, other: &WaveFunction) -> Result<Self> {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    pub fn add(&self, other: &WaveFunction) -> Result<Self> {
        self.axpy(Complex64::new(1.0, 0.0), other)
    }

    /// Largest pointwise modulus.
    pub fn max_abs(&self) -> f64 {
        par::max_f64(self.values.len(), |i| self.values[i].norm())
    }
}

/// `⟨f, g⟩ = ∫ f̄ g dx` by Riemann quadrature (antilinear in `f`).
pub fn inner_product(f: &WaveFunction, g: &WaveFunction) -> Result<Complex64> {
    f.check_compatible(g)?;
    let s = par::sum_c64(f.values.len(), |i| f.values[i].conj() * g.values[i]);
    Ok(s * f.grid.cell_volume())
}

pub fn l2_norm(f: &WaveFunction) -> f64 {
    let s = par::sum_f64(f.values.len(), |i| f.values[i].norm_sqr());
    (s * f.grid.cell_volume()).sqrt()
}

/// `‖f − g‖`.
pub fn distance(f: &WaveFunction, g: &WaveFunction) -> Result<f64> {
    f.check_compatible(g)?;
    let s = par::sum_f64(f.values.len(), |i| (f.values[i] - g.values[i]).norm_sqr());
    Ok((s * f.grid.cell_volume()).sqrt())
}

/// Multiplication by `(xᵢ − qᵢ)`.
pub fn apply_position(f: &WaveFunction, axis: usize, shift: &[f64]) -> Result<WaveFunction> {
    let d = f.grid.dim();
    if axis >= d {
        return Err(Error::AxisOutOfRange { axis, dim: d });
    }
    if shift.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: shift.len(),
        });
    }
    let q = shift[axis];
    Ok(f.multiply(|x| Complex64::new(x[axis] - q, 0.0)))
}

/// `p̂ᵢ f = −iε ∂ᵢ f`, spectrally.
pub fn apply_momentum(f: &WaveFunction, axis: usize) -> Result<WaveFunction> {
    apply_momentum_with(&Spectral::new(&f.grid), f, axis)
}

/// [`apply_momentum`] with precomputed FFT plans for `f`'s grid.
pub fn apply_momentum_with(
    spectral: &Spectral,
    f: &WaveFunction,
    axis: usize,
) -> Result<WaveFunction> {
    let d = f.grid.dim();
    if axis >= d {
        return Err(Error::AxisOutOfRange { axis, dim: d });
    }
    if spectral.grid() != &f.grid {
        return Err(Error::GridMismatch {
            left: spectral.grid().to_string(),
            right: f.grid.to_string(),
        });
    }
    if log::log_enabled!(log::Level::Warn) {
        // absolute mass, so roundoff-sized inputs stay quiet
        let tail = spectral.tail_mass(&f.values) * l2_norm(f).powi(2);
        if tail > TAIL_WARNING {
            log::warn!("apply_momentum: spectral tail mass {tail:e} on {}", f.grid);
        }
    }
    Ok(f.with_values(spectral.momentum(&f.values, axis, f.eps)))
}

/// `Ĥ f = p̂²f/2 + V f`.
pub fn apply_hamiltonian(
    spectral: &Spectral,
    f: &WaveFunction,
    pot: &dyn PotentialModel,
) -> WaveFunction {
    let kin = spectral.kinetic(&f.values, f.eps);
    let d = f.grid.dim();
    f.with_values(par::collect(f.values.len(), |i| {
        let mut x = [0.0; 3];
        f.grid.node(i, &mut x[..d]);
        kin[i] + f.values[i] * pot.value(&x[..d])
    }))
}

/// Observables available to [`expectation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Position(usize),
    Momentum(usize),
    Energy,
    /// `Ĵᵢⱼ = x̂ⱼp̂ᵢ − x̂ᵢp̂ⱼ` (symmetrized).
    AngularMomentum(usize, usize),
}

/// `⟨ψ, Ô ψ⟩` for a normalized state; warns if the imaginary residue is not negligible.
pub fn expectation(
    observable: Observable,
    psi: &WaveFunction,
    pot: &dyn PotentialModel,
) -> Result<f64> {
    let norm = l2_norm(psi);
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NotNormalized { norm });
    }
    let spectral = Spectral::new(&psi.grid);
    expectation_with(&spectral, observable, psi, pot)
}

/// [`expectation`] without the normalization check, with precomputed plans.
pub fn expectation_with(
    spectral: &Spectral,
    observable: Observable,
    psi: &WaveFunction,
    pot: &dyn PotentialModel,
) -> Result<f64> {
    let d = psi.grid.dim();
    let origin = vec![0.0; d];
    let check_axis = |a: usize| {
        if a >= d {
            Err(Error::AxisOutOfRange { axis: a, dim: d })
        } else {
            Ok(())
        }
    };
    let value = match observable {
        Observable::Position(i) => {
            check_axis(i)?;
            inner_product(psi, &apply_position(psi, i, &origin)?)?
        }
        Observable::Momentum(i) => {
            check_axis(i)?;
            inner_product(psi, &apply_momentum_with(spectral, psi, i)?)?
        }
        Observable::Energy => inner_product(psi, &apply_hamiltonian(spectral, psi, pot))?,
        Observable::AngularMomentum(i, j) => {
            check_axis(i)?;
            check_axis(j)?;
            let half = Complex64::new(0.5, 0.0);
            // x̂ⱼp̂ᵢ and p̂ᵢx̂ⱼ averaged, likewise for the second term
            let pi = apply_momentum_with(spectral, psi, i)?;
            let pj = apply_momentum_with(spectral, psi, j)?;
            let xj_pi = apply_position(&pi, j, &origin)?;
            let pi_xj = apply_momentum_with(spectral, &apply_position(psi, j, &origin)?, i)?;
            let xi_pj = apply_position(&pj, i, &origin)?;
            let pj_xi = apply_momentum_with(spectral, &apply_position(psi, i, &origin)?, j)?;
            let op = xj_pi
                .add(&pi_xj)?
                .sub(&xi_pj)?
                .sub(&pj_xi)?
                .scale(half);
            inner_product(psi, &op)?
        }
    };
    let scale = value.re.abs().max(1.0);
    if value.im.abs() > IMAG_TOLERANCE * scale {
        log::warn!(
            "expectation {observable:?}: imaginary residue {:e}",
            value.im
        );
    }
    Ok(value.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian(grid: &Grid, eps: f64, q: f64, p: f64) -> WaveFunction {
        WaveFunction::from_fn(grid, eps, |x| {
            let y = x[0] - q;
            let amp = (PI * eps).powf(-0.25) * (-y * y / (2.0 * eps)).exp();
            Complex64::from_polar(amp, p * y / eps)
        })
    }

    #[test]
    fn norm_and_zero() {
        let g = Grid::cube(1, 0.0, 4.0, 256).unwrap();
        let f = gaussian(&g, 0.1, 0.3, 0.2);
        assert!((l2_norm(&f) - 1.0).abs() < 1e-12);
        let z = WaveFunction::zeros(&g, 0.1);
        assert_eq!(inner_product(&z, &z).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(l2_norm(&z), 0.0);
        let c = Complex64::new(-2.0, 1.5);
        assert!((l2_norm(&f.scale(c)) - c.norm()).abs() < 1e-12 * c.norm());
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let g1 = Grid::cube(1, 0.0, 4.0, 64).unwrap();
        let g2 = Grid::cube(1, 0.0, 4.0, 128).unwrap();
        let err = inner_product(&WaveFunction::zeros(&g1, 0.1), &WaveFunction::zeros(&g2, 0.1))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("64") && msg.contains("128"), "{msg}");
    }

    #[test]
    fn position_operator() {
        let g = Grid::cube(1, 0.0, 4.0, 64).unwrap();
        let one = WaveFunction::from_fn(&g, 0.1, |_| Complex64::new(1.0, 0.0));
        let xf = apply_position(&one, 0, &[0.0]).unwrap();
        let coords = g.axis_coords(0);
        for (v, x) in xf.values().iter().zip(coords) {
            assert_eq!(v.re, x);
        }
        assert!(apply_position(&one, 1, &[0.0]).is_err());
    }

    #[test]
    fn momentum_of_constant_is_zero() {
        let g = Grid::cube(1, 0.0, 4.0, 64).unwrap();
        let one = WaveFunction::from_fn(&g, 0.1, |_| Complex64::new(1.0, 0.0));
        assert!(apply_momentum(&one, 0).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn gaussian_expectations() {
        let g = Grid::cube(1, 0.5, 4.0, 512).unwrap();
        let eps = 0.05;
        let f = gaussian(&g, eps, 0.7, -0.4);
        let pot = crate::potentials::Potential::Free { dim: 1 };
        assert!((expectation(Observable::Position(0), &f, &pot).unwrap() - 0.7).abs() < 1e-9);
        assert!((expectation(Observable::Momentum(0), &f, &pot).unwrap() + 0.4).abs() < 1e-9);
    }

    #[test]
    fn unnormalized_state_is_rejected() {
        let g = Grid::cube(1, 0.0, 4.0, 256).unwrap();
        let f = gaussian(&g, 0.1, 0.0, 0.0).scale(Complex64::new(2.0, 0.0));
        let pot = crate::potentials::Potential::Free { dim: 1 };
        match expectation(Observable::Energy, &f, &pot) {
            Err(Error::NotNormalized { norm }) => assert!((norm - 2.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }
}
