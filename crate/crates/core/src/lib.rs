//! Semiclassical Gaussian wave packet laboratory.
//!
//! Compares the classical Hagedorn parameter dynamics with the symplectically
//! corrected dynamics against a split-step Fourier solution of
//! `iε ∂ₜψ = (−ε²Δ/2 + V)ψ`, and measures convergence rates in ε.

pub mod basis;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod matrix;
pub mod multi_index;
pub mod par;
pub mod potentials;
pub mod reference;
pub mod residuals;
pub mod spectral;
pub mod wave;

pub use dynamics::{Flow, IntegratorConfig, PacketParams, Scheme, Trajectory};
pub use error::{Error, ErrorKind, Result};
pub use grid::Grid;
pub use multi_index::MultiIndex;
pub use potentials::{Potential, PotentialModel};
pub use wave::WaveFunction;
