//! Two-mode Laplacian depth distribution per pixel.
//!
//! `p(x) = α/(2σ₁)·exp(−|x−μ₁|/σ₁) + (1−α)/(2σ₂)·exp(−|x−μ₂|/σ₂)`
//!
//! The mode with the larger responsibility `α/σ₁` vs `(1−α)/σ₂` supplies the
//! pixel's depth when the map is collapsed.

use thiserror::Error;

use crate::grid::{DepthMap, DepthRange, Grid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BimodalError {
    #[error("invalid mixture parameters: {0}")]
    InvalidParameters(String),
    #[error("parameter grids disagree in size")]
    DimensionMismatch,
}

/// Lower bound on σ produced by [`sigma_from_preimage`], in scene units.
pub const SIGMA_FLOOR: f64 = 1e-4;
/// α produced by [`alpha_from_logit`] stays in `[ALPHA_EPS, 1 − ALPHA_EPS]`.
pub const ALPHA_EPS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BimodalLaplacian {
    pub alpha: f64,
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
}

impl BimodalLaplacian {
    pub fn new(alpha: f64, mu1: f64, sigma1: f64, mu2: f64, sigma2: f64) -> Result<Self, BimodalError> {
        let theta = Self {
            alpha,
            mu1,
            sigma1,
            mu2,
            sigma2,
        };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<(), BimodalError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(BimodalError::InvalidParameters(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0 && self.sigma1.is_finite() && self.sigma2.is_finite()) {
            return Err(BimodalError::InvalidParameters(format!(
                "scales must be positive (σ₁={}, σ₂={})",
                self.sigma1, self.sigma2
            )));
        }
        if !(self.mu1.is_finite() && self.mu2.is_finite()) {
            return Err(BimodalError::InvalidParameters("non-finite mode location".into()));
        }
        Ok(())
    }

    /// Same distribution with the mode labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            alpha: 1.0 - self.alpha,
            mu1: self.mu2,
            sigma1: self.sigma2,
            mu2: self.mu1,
            sigma2: self.sigma1,
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        density(x, self)
    }

    pub fn responsibility(&self) -> (f64, f64) {
        responsibility(self)
    }

    /// Location of the responsible mode; ties go to mode 1.
    #[inline]
    pub fn winning_mode(&self) -> Mode {
        let (r1, r2) = responsibility(self);
        if r1 >= r2 {
            Mode::First
        } else {
            Mode::Second
        }
    }

    #[inline]
    pub fn winning_depth(&self) -> f64 {
        match self.winning_mode() {
            Mode::First => self.mu1,
            Mode::Second => self.mu2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    First,
    Second,
}

pub fn density(x: f64, theta: &BimodalLaplacian) -> f64 {
    let a = theta.alpha / (2.0 * theta.sigma1) * (-(x - theta.mu1).abs() / theta.sigma1).exp();
    let b = (1.0 - theta.alpha) / (2.0 * theta.sigma2) * (-(x - theta.mu2).abs() / theta.sigma2).exp();
    a + b
}

/// Log-densities of the two weighted components, `ln(α/(2σ₁)) − |x−μ₁|/σ₁`
/// and the mode-2 analogue. A zero weight gives `−∞`.
#[inline]
pub fn component_log_densities(x: f64, theta: &BimodalLaplacian) -> (f64, f64) {
    let la = theta.alpha.ln() - (2.0 * theta.sigma1).ln() - (x - theta.mu1).abs() / theta.sigma1;
    let lb = (1.0 - theta.alpha).ln() - (2.0 * theta.sigma2).ln() - (x - theta.mu2).abs() / theta.sigma2;
    (la, lb)
}

/// `ln p(x; θ)` evaluated with log-sum-exp so that far tails stay finite.
pub fn log_density(x: f64, theta: &BimodalLaplacian) -> f64 {
    let (la, lb) = component_log_densities(x, theta);
    log_add_exp(la, lb)
}

#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn responsibility(theta: &BimodalLaplacian) -> (f64, f64) {
    (theta.alpha / theta.sigma1, (1.0 - theta.alpha) / theta.sigma2)
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// α from an unconstrained logit: `ε + (1 − 2ε)·logistic(a)`.
#[inline]
pub fn alpha_from_logit(a: f64) -> f64 {
    ALPHA_EPS + (1.0 - 2.0 * ALPHA_EPS) * logistic(a)
}

/// `dα/da` for [`alpha_from_logit`].
#[inline]
pub fn alpha_logit_derivative(a: f64) -> f64 {
    let s = logistic(a);
    (1.0 - 2.0 * ALPHA_EPS) * s * (1.0 - s)
}

/// Inverse of [`alpha_from_logit`]; `alpha` is clamped into the open range.
pub fn alpha_to_logit(alpha: f64) -> f64 {
    let s = ((alpha - ALPHA_EPS) / (1.0 - 2.0 * ALPHA_EPS)).clamp(1e-15, 1.0 - 1e-15);
    (s / (1.0 - s)).ln()
}

/// σ from an unconstrained pre-image: `floor + scale·softplus(s)`.
#[inline]
pub fn sigma_from_preimage(s: f64, scale: f64) -> f64 {
    SIGMA_FLOOR + scale * softplus(s)
}

/// `dσ/ds` for [`sigma_from_preimage`].
#[inline]
pub fn sigma_preimage_derivative(s: f64, scale: f64) -> f64 {
    scale * logistic(s)
}

/// Inverse of [`sigma_from_preimage`] for `sigma > SIGMA_FLOOR`.
pub fn sigma_to_preimage(sigma: f64, scale: f64) -> f64 {
    let y = ((sigma - SIGMA_FLOOR) / scale).max(1e-300);
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Grid of per-pixel mixture parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BimodalDepthMap {
    pub cells: Grid<BimodalLaplacian>,
    pub valid: Grid<bool>,
    pub range: DepthRange,
}

impl BimodalDepthMap {
    pub fn new(cells: Grid<BimodalLaplacian>, valid: Grid<bool>, range: DepthRange) -> Result<Self, BimodalError> {
        if !cells.same_dims(&valid) {
            return Err(BimodalError::DimensionMismatch);
        }
        for c in cells.iter() {
            c.validate()?;
        }
        Ok(Self { cells, valid, range })
    }

    /// Assembles a map from five parameter planes.
    pub fn from_planes(
        alpha: &Grid<f64>,
        mu1: &Grid<f64>,
        sigma1: &Grid<f64>,
        mu2: &Grid<f64>,
        sigma2: &Grid<f64>,
        valid: Grid<bool>,
        range: DepthRange,
    ) -> Result<Self, BimodalError> {
        let dims = alpha.dims();
        if [mu1.dims(), sigma1.dims(), mu2.dims(), sigma2.dims(), valid.dims()].iter().any(|d| *d != dims) {
            return Err(BimodalError::DimensionMismatch);
        }
        let cells = Grid::from_fn(dims.0, dims.1, |x, y| BimodalLaplacian {
            alpha: *alpha.get(x, y),
            mu1: *mu1.get(x, y),
            sigma1: *sigma1.get(x, y),
            mu2: *mu2.get(x, y),
            sigma2: *sigma2.get(x, y),
        });
        Self::new(cells, valid, range)
    }

    /// The five parameter planes `(α, μ₁, σ₁, μ₂, σ₂)`.
    pub fn planes(&self) -> [Grid<f64>; 5] {
        [
            self.cells.map(|c| c.alpha),
            self.cells.map(|c| c.mu1),
            self.cells.map(|c| c.sigma1),
            self.cells.map(|c| c.mu2),
            self.cells.map(|c| c.sigma2),
        ]
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.cells.dims()
    }
}

/// Per-pixel depth of the higher-responsibility mode, clamped to the map's
/// depth range.
pub fn collapse(map: &BimodalDepthMap) -> DepthMap {
    let depth = map.cells.map(|c| map.range.clamp(c.winning_depth()));
    DepthMap::new(depth, map.valid.clone(), map.range)
}
