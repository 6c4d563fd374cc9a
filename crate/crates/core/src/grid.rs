//! Uniform periodic tensor grids.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the total number of grid nodes.
pub const DEFAULT_POINT_BUDGET: usize = 1 << 24;

/// Box `[cᵢ − Lᵢ, cᵢ + Lᵢ)` per axis, sampled with `Nᵢ` nodes.
///
/// Values on the grid are stored row-major: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    center: Vec<f64>,
    half_width: Vec<f64>,
    points: Vec<usize>,
}

impl Grid {
    pub fn new(center: Vec<f64>, half_width: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        Self::with_budget(center, half_width, points, DEFAULT_POINT_BUDGET)
    }

    pub fn with_budget(
        center: Vec<f64>,
        half_width: Vec<f64>,
        points: Vec<usize>,
        budget: usize,
    ) -> Result<Self> {
        let d = center.len();
        if d == 0 || d > 3 {
            return Err(Error::InvalidGrid(format!("dimension {d} outside 1..=3")));
        }
        if half_width.len() != d || points.len() != d {
            return Err(Error::InvalidGrid(format!(
                "axis data lengths differ: center {d}, half_width {}, points {}",
                half_width.len(),
                points.len()
            )));
        }
        for (i, (&l, &n)) in half_width.iter().zip(&points).enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidGrid(format!("axis {i}: half width {l} must be > 0")));
            }
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "axis {i}: {n} points, need a power of two >= 8"
                )));
            }
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGrid("non-finite center".into()));
        }
        let total = points
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .unwrap_or(usize::MAX);
        if total > budget {
            return Err(Error::InvalidGrid(format!(
                "{total} nodes exceed the budget of {budget}"
            )));
        }
        Ok(Self {
            center,
            half_width,
            points,
        })
    }

    /// Same box and resolution along every axis.
    pub fn cube(dim: usize, center: f64, half_width: f64, points: usize) -> Result<Self> {
        Self::new(vec![center; dim], vec![half_width; dim], vec![points; dim])
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn half_width(&self) -> &[f64] {
        &self.half_width
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.half_width[axis] / self.points[axis] as f64
    }

    /// Quadrature weight `Π hᵢ`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.spacing(i)).product()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node coordinates along one axis.
    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing(axis);
        let lo = self.center[axis] - self.half_width[axis];
        (0..self.points[axis]).map(|j| lo + j as f64 * h).collect()
    }

    /// Angular wavenumbers along one axis in FFT order:
    /// `(0, 1, …, N/2−1, −N/2, …, −1)·π/L`.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.points[axis] as i64;
        let dk = PI / self.half_width[axis];
        (0..n)
            .map(|j| if j < n / 2 { j } else { j - n })
            .map(|m| m as f64 * dk)
            .collect()
    }

    /// Per-axis index of the flat node `idx`.
    pub fn unravel(&self, mut idx: usize, out: &mut [usize]) {
        for axis in (0..self.dim()).rev() {
            let n = self.points[axis];
            out[axis] = idx % n;
            idx /= n;
        }
    }

    /// Coordinates of the flat node `idx` written into `out`.
    pub fn node(&self, idx: usize, out: &mut [f64]) {
        let mut rem = idx;
        for axis in (0..self.dim()).rev() {
            let n = self.points[axis];
            let j = rem % n;
            rem /= n;
            out[axis] = self.center[axis] - self.half_width[axis] + j as f64 * self.spacing(axis);
        }
    }

    /// Stride (in flat indices) of one step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.points[axis + 1..].iter().product()
    }

    /// Same box with `factor` times more nodes per axis.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(
            self.center.clone(),
            self.half_width.clone(),
            self.points.iter().map(|n| n * factor).collect(),
        )
    }

    /// Size a grid so that a Gaussian packet travelling through `extent` is
    /// resolved: the box covers the centre excursion plus eight position
    /// standard deviations, and the spacing resolves the fastest phase.
    pub fn sized_for(extent: &PacketExtent, eps: f64, budget: usize) -> Result<Self> {
        let d = extent.q_min.len();
        let sqrt_eps = eps.sqrt();
        let mut center = Vec::with_capacity(d);
        let mut half_width = Vec::with_capacity(d);
        let mut points = Vec::with_capacity(d);
        for i in 0..d {
            let lo = extent.q_min[i];
            let hi = extent.q_max[i];
            let l = 0.5 * (hi - lo) + 8.0 * sqrt_eps * extent.q_spread;
            let p = extent.p_abs_max[i];
            // five nodes per oscillation period of the carrier
            let dx_phase = 2.0 * PI * eps / (5.0 * (p + sqrt_eps * extent.p_spread));
            // Nyquist beyond ten momentum standard deviations
            let dx_tail =
                PI * eps / (p + 10.0 * (0.5 * eps).sqrt() * extent.p_spread);
            let dx = dx_phase.min(dx_tail);
            let n = ((2.0 * l / dx).ceil() as usize).max(8).next_power_of_two();
            center.push(0.5 * (hi + lo));
            half_width.push(l);
            points.push(n);
        }
        Self::with_budget(center, half_width, points, budget)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid[")?;
        for i in 0..self.dim() {
            if i > 0 {
                write!(f, " x ")?;
            }
            write!(
                f,
                "{}@[{:.6},{:.6})",
                self.points[i],
                self.center[i] - self.half_width[i],
                self.center[i] + self.half_width[i]
            )?;
        }
        write!(f, "]")
    }
}

/// Envelope of a packet trajectory used by [`Grid::sized_for`].
#[derive(Debug, Clone, PartialEq)]
pub struct PacketExtent {
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub p_abs_max: Vec<f64>,
    /// Largest singular value of `Q` along the trajectory.
    pub q_spread: f64,
    /// Largest singular value of `P` along the trajectory.
    pub p_spread: f64,
}

impl PacketExtent {
    pub fn empty(dim: usize) -> Self {
        Self {
            q_min: vec![f64::INFINITY; dim],
            q_max: vec![f64::NEG_INFINITY; dim],
            p_abs_max: vec![0.0; dim],
            q_spread: 0.0,
            p_spread: 0.0,
        }
    }

    pub fn include(&mut self, q: &[f64], p: &[f64], q_spread: f64, p_spread: f64) {
        for i in 0..q.len() {
            self.q_min[i] = self.q_min[i].min(q[i]);
            self.q_max[i] = self.q_max[i].max(q[i]);
            self.p_abs_max[i] = self.p_abs_max[i].max(p[i].abs());
        }
        self.q_spread = self.q_spread.max(q_spread);
        self.p_spread = self.p_spread.max(p_spread);
    }

    pub fn merge(&mut self, other: &PacketExtent) {
        for i in 0..self.q_min.len() {
            self.q_min[i] = self.q_min[i].min(other.q_min[i]);
            self.q_max[i] = self.q_max[i].max(other.q_max[i]);
            self.p_abs_max[i] = self.p_abs_max[i].max(other.p_abs_max[i]);
        }
        self.q_spread = self.q_spread.max(other.q_spread);
        self.p_spread = self.p_spread.max(other.p_spread);
    }
}
