//! Second-order depth change, the thresholded boundary mask, and the
//! edge-aware smoothness weight.

use thiserror::Error;

use crate::grid::{BoundaryMask, DepthMap, Grid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscontinuityError {
    #[error("depth map must be at least 3x3, got {0}x{1}")]
    ImageTooSmall(usize, usize),
    #[error("threshold τ must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("sharpness β must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("edge value {0} outside [0, 1]")]
    EdgeOutOfRange(f64),
}

/// Default sharpness of the smoothness switch.
pub const DEFAULT_BETA: f64 = 10.0;
/// Default φ threshold as a fraction of the view's depth range.
pub const DEFAULT_TAU_FRACTION: f64 = 0.005;

/// Per-pixel probability of a depth discontinuity.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMap {
    grid: Grid<f64>,
}

impl EdgeMap {
    pub fn new(grid: Grid<f64>) -> Result<Self, DiscontinuityError> {
        if let Some(bad) = grid.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(DiscontinuityError::EdgeOutOfRange(*bad));
        }
        Ok(Self { grid })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            grid: Grid::filled(width, height, 0.0),
        }
    }

    pub fn from_mask(mask: &BoundaryMask) -> Self {
        Self {
            grid: mask.map(|m| if *m { 1.0 } else { 0.0 }),
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid<f64> {
        &self.grid
    }

    pub fn into_grid(self) -> Grid<f64> {
        self.grid
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    pub fn threshold(&self, level: f64) -> BoundaryMask {
        self.grid.map(|e| *e > level)
    }
}

/// Whether the 5-point stencil at `(x, y)` is interior and fully valid.
#[inline]
pub fn stencil_active(valid: &Grid<bool>, x: usize, y: usize) -> bool {
    let (w, h) = valid.dims();
    x >= 1
        && y >= 1
        && x + 1 < w
        && y + 1 < h
        && *valid.get(x, y)
        && *valid.get(x - 1, y)
        && *valid.get(x + 1, y)
        && *valid.get(x, y - 1)
        && *valid.get(x, y + 1)
}

/// 4-neighbor Laplacian of a raw grid under a validity mask; zero on the
/// border and wherever the stencil touches an invalid pixel.
pub fn laplacian_masked(depth: &Grid<f64>, valid: &Grid<bool>) -> Grid<f64> {
    let (w, h) = depth.dims();
    Grid::from_fn(w, h, |x, y| {
        if stencil_active(valid, x, y) {
            depth.get(x - 1, y) + depth.get(x + 1, y) + depth.get(x, y - 1) + depth.get(x, y + 1) - 4.0 * depth.get(x, y)
        } else {
            0.0
        }
    })
}

pub fn laplacian(depth: &DepthMap) -> Result<Grid<f64>, DiscontinuityError> {
    let (w, h) = depth.dims();
    if w < 3 || h < 3 {
        return Err(DiscontinuityError::ImageTooSmall(w, h));
    }
    Ok(laplacian_masked(&depth.depth, &depth.valid))
}

/// Mask of pixels where `|Δdepth| > tau`.
pub fn phi(depth: &DepthMap, tau: f64) -> Result<BoundaryMask, DiscontinuityError> {
    if !(tau > 0.0) {
        return Err(DiscontinuityError::NonPositiveTau(tau));
    }
    Ok(laplacian(depth)?.map(|l| l.abs() > tau))
}

/// `ω = exp(−β·E)` elementwise.
pub fn smoothness_weight(edge: &EdgeMap, beta: f64) -> Result<Grid<f64>, DiscontinuityError> {
    if !(beta > 0.0) {
        return Err(DiscontinuityError::NonPositiveBeta(beta));
    }
    Ok(edge.grid.map(|e| (-beta * e).exp()))
}
