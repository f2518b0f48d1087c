//! The refinement objective and its closed-form gradients.
//!
//! ```text
//! L_gt  = Σ_k (1/N_k) Σ |D_k − D̂_k|                    multi-scale depth error
//! L_ed  = (1/N) Σ (E − φ(ΔD̂, τ))²                      edge vs. GT discontinuities
//! L_sm  = (1/N) Σ exp(−βE)·|ΔD|                         edge-aware smoothness
//! L_bi  = (1/N) Σ −ln p(D̂; θ)                           bimodal likelihood
//! L_tot = L_gt + λ₁ L_ed + λ₂ L_sm + λ₃ L_bi
//! ```
//!
//! Pixels without valid ground truth contribute nothing, neither to the sums
//! nor to the normalizing counts. The subgradient of `|·|` at its kink is 0.

use thiserror::Error;

use crate::bimodal::{component_log_densities, log_add_exp, BimodalDepthMap};
use crate::discontinuity::{laplacian_masked, stencil_active, DiscontinuityError, EdgeMap};
use crate::grid::{ordered_row_sum, BoundaryMask, DepthMap, Grid, GroundTruth};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("threshold τ must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("sharpness β must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("loss weights must be non-negative")]
    InvalidWeights,
    #[error("need at least one scale")]
    NoScales,
    #[error(transparent)]
    Discontinuity(#[from] DiscontinuityError),
}

/// Relative width of the band around a `|·|` kink treated as the kink itself.
pub const KINK_REL_TOL: f64 = 1e-12;

/// Sign with a zero band of relative width [`KINK_REL_TOL`] around 0.
#[inline]
pub fn kink_sign(v: f64, scale: f64) -> f64 {
    if v.abs() <= KINK_REL_TOL * scale.abs() || v == 0.0 {
        0.0
    } else {
        v.signum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 4.0,
            lambda2: 1.25,
            lambda3: 0.5,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
        }
    }

    fn validate(&self) -> Result<(), LossError> {
        if [self.lambda1, self.lambda2, self.lambda3].iter().all(|l| *l >= 0.0 && l.is_finite()) {
            Ok(())
        } else {
            Err(LossError::InvalidWeights)
        }
    }
}

/// Everything the objective reads. `depths[0]` and `gts[0]` are the finest
/// scale, which also carries the edge, smoothness and bimodal terms.
#[derive(Clone, Copy, Debug)]
pub struct LossInputs<'a> {
    pub depths: &'a [DepthMap],
    pub gts: &'a [GroundTruth],
    pub bimodal: &'a BimodalDepthMap,
    pub edge: &'a EdgeMap,
    pub beta: f64,
    pub tau: f64,
}

/// Partials of a loss with respect to the five mixture planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaGradients {
    pub alpha: Grid<f64>,
    pub mu1: Grid<f64>,
    pub sigma1: Grid<f64>,
    pub mu2: Grid<f64>,
    pub sigma2: Grid<f64>,
}

impl ThetaGradients {
    fn zeros(w: usize, h: usize) -> Self {
        let z = Grid::filled(w, h, 0.0);
        Self {
            alpha: z.clone(),
            mu1: z.clone(),
            sigma1: z.clone(),
            mu2: z.clone(),
            sigma2: z,
        }
    }

    fn scaled(&self, k: f64) -> Self {
        Self {
            alpha: self.alpha.map(|v| k * v),
            mu1: self.mu1.map(|v| k * v),
            sigma1: self.sigma1.map(|v| k * v),
            mu2: self.mu2.map(|v| k * v),
            sigma2: self.sigma2.map(|v| k * v),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossGradients {
    /// One grid per scale, matching `LossInputs::depths`.
    pub depth: Vec<Grid<f64>>,
    pub theta: ThetaGradients,
    pub edge: Grid<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub l_gt: f64,
    pub l_ed: f64,
    pub l_sm: f64,
    pub l_bi: f64,
    pub l_total: f64,
    pub weights: LossWeights,
    pub gradients: LossGradients,
}

impl LossReport {
    /// Flat `key = value` lines for regression diffing.
    pub fn to_key_value(&self) -> String {
        let norm = |g: &Grid<f64>| g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut s = String::new();
        for (k, v) in [
            ("l_gt", self.l_gt),
            ("l_ed", self.l_ed),
            ("l_sm", self.l_sm),
            ("l_bi", self.l_bi),
            ("l_total", self.l_total),
            ("lambda1", self.weights.lambda1),
            ("lambda2", self.weights.lambda2),
            ("lambda3", self.weights.lambda3),
            ("grad_norm_alpha", norm(&self.gradients.theta.alpha)),
            ("grad_norm_mu1", norm(&self.gradients.theta.mu1)),
            ("grad_norm_sigma1", norm(&self.gradients.theta.sigma1)),
            ("grad_norm_mu2", norm(&self.gradients.theta.mu2)),
            ("grad_norm_sigma2", norm(&self.gradients.theta.sigma2)),
            ("grad_norm_edge", norm(&self.gradients.edge)),
        ] {
            s.push_str(&format!("{k} = {v:e}\n"));
        }
        for (k, g) in self.gradients.depth.iter().enumerate() {
            s.push_str(&format!("grad_norm_depth{k} = {:e}\n", norm(g)));
        }
        s
    }
}

fn check_dims(what: &str, a: (usize, usize), b: (usize, usize)) -> Result<(), LossError> {
    if a == b {
        Ok(())
    } else {
        Err(LossError::DimensionMismatch(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1)))
    }
}

fn count(mask: impl Iterator<Item = bool>) -> usize {
    mask.filter(|v| *v).count()
}

/// Mean absolute depth error summed over scales, with per-scale gradients.
pub fn depth_gt_term(depths: &[DepthMap], gts: &[GroundTruth]) -> Result<(f64, Vec<Grid<f64>>), LossError> {
    if depths.is_empty() {
        return Err(LossError::NoScales);
    }
    if depths.len() != gts.len() {
        return Err(LossError::DimensionMismatch(format!("{} estimates vs {} ground truths", depths.len(), gts.len())));
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(depths.len());
    for (k, (d, gt)) in depths.iter().zip(gts).enumerate() {
        check_dims(&format!("scale {k}"), d.dims(), gt.dims())?;
        let (w, h) = d.dims();
        let active = |x: usize, y: usize| *gt.valid.get(x, y) && *d.valid.get(x, y);
        let n = count((0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| active(x, y)));
        if n == 0 {
            grads.push(Grid::filled(w, h, 0.0));
            continue;
        }
        let inv_n = 1.0 / n as f64;
        let sum = ordered_row_sum(h, |y| {
            (0..w).filter(|&x| active(x, y)).map(|x| (d.depth.get(x, y) - gt.depth.get(x, y)).abs()).sum::<f64>()
        });
        total += sum * inv_n;
        grads.push(Grid::par_from_fn(w, h, |x, y| {
            if active(x, y) {
                let r = d.depth.get(x, y) - gt.depth.get(x, y);
                kink_sign(r, *gt.depth.get(x, y)) * inv_n
            } else {
                0.0
            }
        }));
    }
    Ok((total, grads))
}

pub fn depth_gt_loss(depths: &[DepthMap], gts: &[GroundTruth]) -> Result<f64, LossError> {
    Ok(depth_gt_term(depths, gts)?.0)
}

/// Squared edge error against a fixed target mask over `valid` pixels.
pub fn edge_term_with_target(edge: &EdgeMap, target: &BoundaryMask, valid: &Grid<bool>) -> Result<(f64, Grid<f64>), LossError> {
    check_dims("edge vs target", edge.dims(), target.dims())?;
    check_dims("edge vs validity", edge.dims(), valid.dims())?;
    let (w, h) = edge.dims();
    let n = count(valid.iter().copied());
    if n == 0 {
        return Ok((0.0, Grid::filled(w, h, 0.0)));
    }
    let inv_n = 1.0 / n as f64;
    let e = edge.grid();
    let m = |x: usize, y: usize| if *target.get(x, y) { 1.0 } else { 0.0 };
    let sum = ordered_row_sum(h, |y| {
        (0..w).filter(|&x| *valid.get(x, y)).map(|x| (e.get(x, y) - m(x, y)).powi(2)).sum::<f64>()
    });
    let grad = Grid::par_from_fn(w, h, |x, y| if *valid.get(x, y) { 2.0 * (e.get(x, y) - m(x, y)) * inv_n } else { 0.0 });
    Ok((sum * inv_n, grad))
}

/// φ mask of the ground truth: `|ΔD̂| > τ`, stencils restricted to valid GT.
pub fn gt_boundary_target(gt: &GroundTruth, tau: f64) -> Result<BoundaryMask, LossError> {
    if !(tau > 0.0) {
        return Err(LossError::NonPositiveTau(tau));
    }
    Ok(laplacian_masked(&gt.depth, &gt.valid).map(|l| l.abs() > tau))
}

pub fn edge_depth_term(edge: &EdgeMap, gt: &GroundTruth, tau: f64) -> Result<(f64, Grid<f64>), LossError> {
    check_dims("edge vs ground truth", edge.dims(), gt.dims())?;
    let target = gt_boundary_target(gt, tau)?;
    edge_term_with_target(edge, &target, &gt.valid)
}

pub fn edge_depth_loss(edge: &EdgeMap, gt: &GroundTruth, tau: f64) -> Result<f64, LossError> {
    Ok(edge_depth_term(edge, gt, tau)?.0)
}

/// Edge-aware smoothness averaged over `valid` pixels. Returns the value and
/// the gradients with respect to depth and edge.
pub fn smoothness_term(depth: &DepthMap, edge: &EdgeMap, valid: &Grid<bool>, beta: f64) -> Result<(f64, Grid<f64>, Grid<f64>), LossError> {
    if !(beta > 0.0) {
        return Err(LossError::NonPositiveBeta(beta));
    }
    check_dims("depth vs edge", depth.dims(), edge.dims())?;
    check_dims("depth vs validity", depth.dims(), valid.dims())?;
    let (w, h) = depth.dims();
    let n = count(valid.iter().copied());
    if n == 0 {
        return Ok((0.0, Grid::filled(w, h, 0.0), Grid::filled(w, h, 0.0)));
    }
    let inv_n = 1.0 / n as f64;
    let lap = laplacian_masked(&depth.depth, &depth.valid);
    let e = edge.grid();
    let omega = e.map(|v| (-beta * v).exp());
    let sum = ordered_row_sum(h, |y| {
        (0..w).filter(|&x| *valid.get(x, y)).map(|x| omega.get(x, y) * lap.get(x, y).abs()).sum::<f64>()
    });
    let d_edge = Grid::par_from_fn(w, h, |x, y| {
        if *valid.get(x, y) {
            -beta * omega.get(x, y) * lap.get(x, y).abs() * inv_n
        } else {
            0.0
        }
    });
    // Coefficient of each active stencil, then its adjoint scatter.
    let coef = Grid::par_from_fn(w, h, |x, y| {
        if *valid.get(x, y) && stencil_active(&depth.valid, x, y) {
            omega.get(x, y) * kink_sign(*lap.get(x, y), *depth.depth.get(x, y)) * inv_n
        } else {
            0.0
        }
    });
    let d_depth = Grid::par_from_fn(w, h, |x, y| {
        let mut g = -4.0 * coef.get(x, y);
        if x > 0 {
            g += coef.get(x - 1, y);
        }
        if x + 1 < w {
            g += coef.get(x + 1, y);
        }
        if y > 0 {
            g += coef.get(x, y - 1);
        }
        if y + 1 < h {
            g += coef.get(x, y + 1);
        }
        g
    });
    Ok((sum * inv_n, d_depth, d_edge))
}

/// Smoothness loss normalized by the count of valid ground-truth pixels.
pub fn smoothness_loss(depth: &DepthMap, edge: &EdgeMap, gt: &GroundTruth, beta: f64) -> Result<f64, LossError> {
    check_dims("depth vs ground truth", depth.dims(), gt.dims())?;
    Ok(smoothness_term(depth, edge, &gt.valid, beta)?.0)
}

/// Negative log-likelihood of the ground truth under the per-pixel mixture.
pub fn bimodal_term(map: &BimodalDepthMap, gt: &GroundTruth) -> Result<(f64, ThetaGradients), LossError> {
    check_dims("bimodal vs ground truth", map.dims(), gt.dims())?;
    let (w, h) = map.dims();
    let active = |x: usize, y: usize| *gt.valid.get(x, y) && *map.valid.get(x, y);
    let n = count((0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| active(x, y)));
    let mut grads = ThetaGradients::zeros(w, h);
    if n == 0 {
        return Ok((0.0, grads));
    }
    let inv_n = 1.0 / n as f64;
    let sum = ordered_row_sum(h, |y| {
        (0..w)
            .filter(|&x| active(x, y))
            .map(|x| {
                let (la, lb) = component_log_densities(*gt.depth.get(x, y), map.cells.get(x, y));
                -log_add_exp(la, lb)
            })
            .sum::<f64>()
    });
    let per_pixel: Vec<[f64; 5]> = Grid::par_from_fn(w, h, |x, y| {
        if !active(x, y) {
            return [0.0; 5];
        }
        let t = map.cells.get(x, y);
        let xv = *gt.depth.get(x, y);
        let (la, lb) = component_log_densities(xv, t);
        let lp = log_add_exp(la, lb);
        let w1 = (la - lp).exp();
        let w2 = (lb - lp).exp();
        let (r1, r2) = (xv - t.mu1, xv - t.mu2);
        // Unweighted component densities over p, so α = 0 or 1 stays finite.
        let k1 = (-(2.0 * t.sigma1).ln() - r1.abs() / t.sigma1 - lp).exp();
        let k2 = (-(2.0 * t.sigma2).ln() - r2.abs() / t.sigma2 - lp).exp();
        [
            -(k1 - k2) * inv_n,
            -w1 * kink_sign(r1, xv) / t.sigma1 * inv_n,
            -w1 * (r1.abs() / (t.sigma1 * t.sigma1) - 1.0 / t.sigma1) * inv_n,
            -w2 * kink_sign(r2, xv) / t.sigma2 * inv_n,
            -w2 * (r2.abs() / (t.sigma2 * t.sigma2) - 1.0 / t.sigma2) * inv_n,
        ]
    })
    .into_vec();
    for (i, g) in per_pixel.iter().enumerate() {
        grads.alpha.as_mut_slice()[i] = g[0];
        grads.mu1.as_mut_slice()[i] = g[1];
        grads.sigma1.as_mut_slice()[i] = g[2];
        grads.mu2.as_mut_slice()[i] = g[3];
        grads.sigma2.as_mut_slice()[i] = g[4];
    }
    Ok((sum * inv_n, grads))
}

pub fn bimodal_loss(map: &BimodalDepthMap, gt: &GroundTruth) -> Result<f64, LossError> {
    Ok(bimodal_term(map, gt)?.0)
}

/// All four terms, their weighted sum, and the gradient of the sum.
pub fn total_loss(inputs: &LossInputs<'_>, weights: LossWeights) -> Result<LossReport, LossError> {
    weights.validate()?;
    if inputs.depths.is_empty() || inputs.gts.is_empty() {
        return Err(LossError::NoScales);
    }
    if !(inputs.beta > 0.0) {
        return Err(LossError::NonPositiveBeta(inputs.beta));
    }
    let gt0 = &inputs.gts[0];
    check_dims("edge vs ground truth", inputs.edge.dims(), gt0.dims())?;
    check_dims("bimodal vs ground truth", inputs.bimodal.dims(), gt0.dims())?;

    let (l_gt, mut depth_grads) = depth_gt_term(inputs.depths, inputs.gts)?;
    let (l_ed, ed_grad) = edge_depth_term(inputs.edge, gt0, inputs.tau)?;
    let (l_sm, sm_depth, sm_edge) = smoothness_term(&inputs.depths[0], inputs.edge, &gt0.valid, inputs.beta)?;
    let (l_bi, bi_grads) = bimodal_term(inputs.bimodal, gt0)?;

    let LossWeights { lambda1, lambda2, lambda3 } = weights;
    let l_total = l_gt + lambda1 * l_ed + lambda2 * l_sm + lambda3 * l_bi;

    for (g, s) in depth_grads[0].as_mut_slice().iter_mut().zip(sm_depth.iter()) {
        *g += lambda2 * s;
    }
    let (w, h) = inputs.edge.dims();
    let edge = Grid::from_fn(w, h, |x, y| lambda1 * ed_grad.get(x, y) + lambda2 * sm_edge.get(x, y));

    Ok(LossReport {
        l_gt,
        l_ed,
        l_sm,
        l_bi,
        l_total,
        weights,
        gradients: LossGradients {
            depth: depth_grads,
            theta: bi_grads.scaled(lambda3),
            edge,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bimodal::BimodalLaplacian;
    use crate::grid::DepthRange;

    const RANGE: DepthRange = DepthRange { min: 0.0, max: 100.0 };

    fn gt_of(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> GroundTruth {
        GroundTruth::from_depth(Grid::from_fn(w, h, f))
    }

    fn dense(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> DepthMap {
        DepthMap::dense(Grid::from_fn(w, h, f), RANGE)
    }

    fn step(x: usize) -> f64 {
        if x < 4 {
            10.0
        } else {
            30.0
        }
    }

    fn unimodal_at(gt: &GroundTruth, sigma: f64) -> BimodalDepthMap {
        let (w, h) = gt.dims();
        let cells = Grid::from_fn(w, h, |x, y| BimodalLaplacian::new(1.0, *gt.depth.get(x, y), sigma, 0.0, 1.0).unwrap());
        BimodalDepthMap::new(cells, Grid::filled(w, h, true), RANGE).unwrap()
    }

    #[test]
    fn gt_loss_examples() {
        let gt = gt_of(4, 4, |x, y| 1.0 + (x + y) as f64);
        let est = gt.as_depth_map(RANGE);
        assert_eq!(depth_gt_loss(std::slice::from_ref(&est), std::slice::from_ref(&gt)).unwrap(), 0.0);
        let off = dense(4, 4, |x, y| 1.0 + (x + y) as f64 + 0.25);
        assert!((depth_gt_loss(&[off], std::slice::from_ref(&gt)).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gt_loss_two_scales_matches_scalar_loop() {
        let gt_full = gt_of(4, 4, |x, y| if x + y == 5 { 0.0 } else { 2.0 + x as f64 * 0.5 + y as f64 });
        let gts = gt_full.pyramid(2);
        let ests = vec![dense(4, 4, |x, y| 2.3 + (x * y) as f64 * 0.1), dense(2, 2, |x, y| 1.0 + (x + 2 * y) as f64)];
        // Scalar-loop oracle.
        let mut oracle = 0.0;
        for (e, g) in ests.iter().zip(&gts) {
            let (mut s, mut n) = (0.0, 0usize);
            for y in 0..g.dims().1 {
                for x in 0..g.dims().0 {
                    if *g.valid.get(x, y) {
                        s += (e.depth.get(x, y) - g.depth.get(x, y)).abs();
                        n += 1;
                    }
                }
            }
            oracle += s / n as f64;
        }
        let got = depth_gt_loss(&ests, &gts).unwrap();
        assert!((got - oracle).abs() < 1e-14, "{got} vs {oracle}");
        assert!(matches!(depth_gt_loss(&ests[..1], &gts), Err(LossError::DimensionMismatch(_))));
    }

    #[test]
    fn empty_scale_contributes_zero() {
        let gt = GroundTruth::new(Grid::filled(3, 3, 1.0), Grid::filled(3, 3, false));
        assert_eq!(depth_gt_loss(&[dense(3, 3, |_, _| 5.0)], &[gt]).unwrap(), 0.0);
    }

    #[test]
    fn edge_loss_examples() {
        let gt = gt_of(8, 6, |x, _| step(x));
        let target = gt_boundary_target(&gt, 1.0).unwrap();
        assert_eq!(edge_depth_loss(&EdgeMap::from_mask(&target), &gt, 1.0).unwrap(), 0.0);
        let m = target.iter().filter(|v| **v).count();
        assert_eq!(m, 8);
        let got = edge_depth_loss(&EdgeMap::zeros(8, 6), &gt, 1.0).unwrap();
        assert_eq!(got, m as f64 / 48.0);
        assert!(matches!(edge_depth_loss(&EdgeMap::zeros(8, 6), &gt, 0.0), Err(LossError::NonPositiveTau(_))));
        assert!(matches!(edge_depth_loss(&EdgeMap::zeros(7, 6), &gt, 1.0), Err(LossError::DimensionMismatch(_))));
    }

    #[test]
    fn edge_loss_random_edges_match_oracle() {
        let gt = gt_of(8, 6, |x, _| step(x));
        let e = EdgeMap::new(Grid::from_fn(8, 6, |x, y| ((x * 37 + y * 11) % 17) as f64 / 16.0)).unwrap();
        let mut s = 0.0;
        for y in 0..6 {
            for x in 0..8 {
                let lap = if x > 0 && y > 0 && x < 7 && y < 5 {
                    step(x - 1) + step(x + 1) + 2.0 * step(x) - 4.0 * step(x)
                } else {
                    0.0
                };
                let m = if lap.abs() > 1.0 { 1.0 } else { 0.0 };
                s += (e.grid().get(x, y) - m).powi(2);
            }
        }
        let got = edge_depth_loss(&e, &gt, 1.0).unwrap();
        assert!((got - s / 48.0).abs() < 1e-12);
    }

    #[test]
    fn smoothness_examples() {
        let gt = gt_of(6, 6, |_, _| 1.0);
        let ramp = dense(6, 6, |x, y| 3.0 * x as f64 + y as f64);
        let e = EdgeMap::new(Grid::from_fn(6, 6, |x, _| x as f64 / 5.0)).unwrap();
        assert!(smoothness_loss(&ramp, &e, &gt, 10.0).unwrap().abs() < 1e-13);

        let stepped = dense(8, 6, |x, _| step(x));
        let gt8 = gt_of(8, 6, |_, _| 1.0);
        let ones = EdgeMap::new(Grid::filled(8, 6, 1.0)).unwrap();
        let l_small = smoothness_loss(&stepped, &ones, &gt8, 10.0).unwrap();
        let l_large = smoothness_loss(&stepped, &ones, &gt8, 100.0).unwrap();
        assert!(l_large < l_small * 1e-30);

        // E = 1 exactly on step-adjacent pixels, β = 10.
        let edge = EdgeMap::new(Grid::from_fn(8, 6, |x, _| if x == 3 || x == 4 { 1.0 } else { 0.0 })).unwrap();
        let got = smoothness_loss(&stepped, &edge, &gt8, 10.0).unwrap();
        // 4 interior rows × 2 columns of |Δ| = 20 each, weighted by e^−10.
        let oracle = 4.0 * 2.0 * 20.0 * (-10.0f64).exp() / 48.0;
        assert!((got - oracle).abs() < 1e-15);
    }

    #[test]
    fn bimodal_loss_examples() {
        let gt = gt_of(5, 4, |x, y| 10.0 + (x * y) as f64);
        let l = bimodal_loss(&unimodal_at(&gt, 1.0), &gt).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bimodal_loss(&unimodal_at(&gt, 0.5), &gt).unwrap().abs() < 1e-15);
        let l3 = bimodal_loss(&unimodal_at(&gt, 3.0), &gt).unwrap();
        assert!((l3 - 6f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bimodal_mu_gradient_vanishes_at_exact_fit() {
        let gt = gt_of(3, 3, |x, _| 5.0 + x as f64);
        let (_, g) = bimodal_term(&unimodal_at(&gt, 0.7), &gt).unwrap();
        assert!(g.mu1.iter().all(|v| *v == 0.0));
    }

    fn setup() -> (Vec<DepthMap>, Vec<GroundTruth>, BimodalDepthMap, EdgeMap) {
        let gt = gt_of(8, 6, |x, _| step(x));
        let depth = dense(8, 6, |x, y| step(x) + 0.3 * ((x * 3 + y * 5) % 7) as f64);
        let cells = Grid::from_fn(8, 6, |x, y| BimodalLaplacian::new(0.7, step(x) + 0.1 * y as f64, 0.8, 20.0, 2.0).unwrap());
        let bi = BimodalDepthMap::new(cells, Grid::filled(8, 6, true), RANGE).unwrap();
        let edge = EdgeMap::new(Grid::from_fn(8, 6, |x, y| ((x + 2 * y) % 5) as f64 / 4.0)).unwrap();
        (vec![depth], vec![gt], bi, edge)
    }

    #[test]
    fn total_is_weighted_sum() {
        let (d, g, b, e) = setup();
        let inputs = LossInputs { depths: &d, gts: &g, bimodal: &b, edge: &e, beta: 10.0, tau: 1.0 };
        let r = total_loss(&inputs, LossWeights::default()).unwrap();
        assert!((r.l_total - (r.l_gt + 4.0 * r.l_ed + 1.25 * r.l_sm + 0.5 * r.l_bi)).abs() <= 1e-12);
        let z = total_loss(&inputs, LossWeights::zero()).unwrap();
        assert_eq!(z.l_total, z.l_gt);
        assert!(z.gradients.edge.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_is_linear_in_lambda() {
        let (d, g, b, e) = setup();
        let inputs = LossInputs { depths: &d, gts: &g, bimodal: &b, edge: &e, beta: 10.0, tau: 1.0 };
        let only_ed = |l1: f64| total_loss(&inputs, LossWeights { lambda1: l1, lambda2: 0.0, lambda3: 0.0 }).unwrap();
        let (one, four) = (only_ed(1.0), only_ed(4.0));
        for (a, b) in one.gradients.edge.iter().zip(four.gradients.edge.iter()) {
            assert_eq!(4.0 * a, *b);
        }
    }

    #[test]
    fn smoothness_edge_gradient_formula() {
        let (d, g, _, e) = setup();
        let (_, _, de) = smoothness_term(&d[0], &e, &g[0].valid, 10.0).unwrap();
        let lap = laplacian_masked(&d[0].depth, &d[0].valid);
        for i in 0..de.len() {
            let expect = -10.0 * (-10.0 * e.grid().as_slice()[i]).exp() * lap.as_slice()[i].abs() / 48.0;
            assert!((de.as_slice()[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_pixels_contribute_nothing() {
        let (d, mut g, b, e) = setup();
        let inputs = LossInputs { depths: &d, gts: &g, bimodal: &b, edge: &e, beta: 10.0, tau: 1.0 };
        let before = total_loss(&inputs, LossWeights::default()).unwrap();
        // Perturbing parameters at a pixel without ground truth changes nothing
        // once that pixel is masked out (and it is not in any stencil).
        g[0].valid.set(0, 0, false);
        let mut d2 = d.clone();
        d2[0].depth.set(0, 0, 1e6);
        let mut b2 = b.clone();
        b2.cells.get_mut(0, 0).mu1 = -1e6;
        let inputs2 = LossInputs { depths: &d2, gts: &g, bimodal: &b2, edge: &e, beta: 10.0, tau: 1.0 };
        let r2 = total_loss(&inputs2, LossWeights::default()).unwrap();
        let inputs3 = LossInputs { depths: &d, gts: &g, bimodal: &b, edge: &e, beta: 10.0, tau: 1.0 };
        let r3 = total_loss(&inputs3, LossWeights::default()).unwrap();
        assert_eq!(r2.l_total, r3.l_total);
        assert_eq!(*r2.gradients.depth[0].get(0, 0), 0.0);
        assert_eq!(*r2.gradients.theta.mu1.get(0, 0), 0.0);
        assert_ne!(before.l_total, r3.l_total);
    }
}
