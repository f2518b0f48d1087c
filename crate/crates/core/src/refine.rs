//! Depth refinement by direct minimization of the bimodal objective.
//!
//! The PatchMatch depth is upsampled to full resolution, turned into a
//! per-pixel mixture plus edge map, and descended on. Parameters live in
//! unconstrained coordinates (α and E as logits, σ as a softplus pre-image,
//! μ as is), so every iterate satisfies the mixture and edge constraints.
//!
//! Each step computes the gradient once and moves every coordinate along
//! `−c·clip(N·g, −1, 1)`, where `N` is the pixel count and `c` a unit per
//! coordinate (the depth span for μ, a fixed logit step otherwise). For the
//! logit and pre-image coordinates `g` is taken with respect to the
//! constrained value, so saturated pixels still move. Pixels are updated in
//! five interleaved color classes that share no loss term; within a class
//! each pixel line-searches its own coordinates against its local energy.
//! The loss therefore never increases, and a step whose global total rises
//! by rounding is discarded.

use serde::Serialize;
use thiserror::Error;

use crate::bimodal::{
    alpha_from_logit, component_log_densities, log_add_exp, alpha_to_logit, logistic, sigma_from_preimage, sigma_to_preimage, BimodalDepthMap, BimodalError, BimodalLaplacian, Mode,
};
use crate::discontinuity::{laplacian_masked, stencil_active, EdgeMap, DEFAULT_BETA, DEFAULT_TAU_FRACTION};
use crate::geometry::CalibratedView;
use crate::grid::{ordered_row_sum, BoundaryMask, DepthMap, DepthRange, Grid, GroundTruth};
use crate::image::Image;
use crate::losses::{edge_term_with_target, gt_boundary_target, smoothness_term, total_loss, LossError, LossInputs, LossWeights, ThetaGradients};
use crate::patchmatch::{MatchCost, WORST_COST};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("loss became non-finite at step {0}")]
    DivergedLoss(usize),
    #[error("self-supervised refinement needs at least one source view")]
    NoSources,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Bimodal(#[from] BimodalError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    Supervised,
    SelfSupervised,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineConfig {
    /// Descent iterations; 0 returns the initialization untouched.
    pub steps: usize,
    pub step_size: f64,
    /// Step size reached by the cosine schedule on the last iteration.
    pub final_step_size: f64,
    pub beta: f64,
    /// Absolute discontinuity threshold; `None` means 0.005 of the depth span.
    pub tau: Option<f64>,
    pub mode: RefineMode,
    /// Initial σ as a fraction of the depth span.
    pub sigma_init: f64,
    /// Fallback mode gap as a fraction of the depth span.
    pub mu_offset_init: f64,
    pub weights: LossWeights,
    /// Self-supervised edge target refresh period. A refreshed target is
    /// kept only when it does not raise the loss.
    pub target_refresh: usize,
    /// NCC window of the self-supervised data term.
    pub window: usize,
    /// Weight of the photometric term in depth spans per unit of NCC cost.
    pub photometric_weight: f64,
    pub max_backtracks: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            steps: 400,
            step_size: 0.05,
            final_step_size: 0.001,
            beta: DEFAULT_BETA,
            tau: None,
            mode: RefineMode::Supervised,
            sigma_init: 0.01,
            mu_offset_init: 0.02,
            weights: LossWeights::default(),
            target_refresh: 25,
            window: 5,
            photometric_weight: 10.0,
            max_backtracks: 1,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        let bad = |m: String| Err(RefineError::InvalidConfig(m));
        if !(self.step_size > 0.0 && self.final_step_size > 0.0 && self.final_step_size <= self.step_size) {
            return bad(format!("step sizes {} → {} must be positive and decaying", self.step_size, self.final_step_size));
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta {} must be positive", self.beta));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0) {
                return bad(format!("tau {t} must be positive"));
            }
        }
        for (name, f) in [("sigma_init", self.sigma_init), ("mu_offset_init", self.mu_offset_init)] {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("{name} {f} outside (0, 1)"));
            }
        }
        if self.target_refresh == 0 {
            return bad("target_refresh must be ≥ 1".into());
        }
        if !(self.photometric_weight > 0.0 && self.photometric_weight.is_finite()) {
            return bad(format!("photometric_weight {} must be positive", self.photometric_weight));
        }
        if self.window < 3 || self.window.is_multiple_of(2) {
            return bad(format!("window {} must be odd and ≥ 3", self.window));
        }
        Ok(())
    }

    pub fn tau_for(&self, range: DepthRange) -> f64 {
        self.tau.unwrap_or(DEFAULT_TAU_FRACTION * range.span())
    }

    /// Cosine-decayed step size for iteration `step`.
    pub fn step_size_at(&self, step: usize) -> f64 {
        if self.steps <= 1 {
            return self.step_size;
        }
        let t = step as f64 / (self.steps - 1) as f64;
        self.final_step_size + 0.5 * (self.step_size - self.final_step_size) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

/// Starting point of a refinement.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineInit {
    pub bimodal: BimodalDepthMap,
    pub edge: EdgeMap,
}

/// Loss terms after a step. `data` is the depth term in supervised mode and
/// the photometric term in self-supervised mode, where `l_bi` is 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub total: f64,
    pub data: f64,
    pub l_ed: f64,
    pub l_sm: f64,
    pub l_bi: f64,
    /// Fraction of the scheduled step actually taken.
    pub accepted: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineResult {
    pub bimodal: BimodalDepthMap,
    pub edge: EdgeMap,
    pub depth: DepthMap,
    /// Row 0 is the initialization, then one row per step.
    pub trace: Vec<TraceRow>,
}

impl RefineResult {
    pub fn totals(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.total).collect()
    }
}

/// The `l_gt` column holds `data`, whichever mode produced it.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("step,total,l_gt,l_ed,l_sm,l_bi\n");
    for r in trace {
        s.push_str(&format!("{},{:e},{:e},{:e},{:e},{:e}\n", r.step, r.total, r.data, r.l_ed, r.l_sm, r.l_bi));
    }
    s
}

const SPATIAL_SIGMA: f64 = 1.0;
const SPATIAL_RADIUS: f64 = 2.0;
const COLOR_SIGMA: f64 = 0.1;
/// Guide colors further apart than this many σ_c get no weight at all, which
/// keeps depths on opposite sides of a color edge from blending.
const COLOR_CUTOFF: f64 = 3.0;

/// Joint bilateral 2× upsampling guided by the full-resolution image.
pub fn upsample_depth(coarse: &DepthMap, guide: &Image) -> Result<DepthMap, RefineError> {
    let (cw, ch) = coarse.dims();
    let (w, h) = (guide.width(), guide.height());
    if (w, h) != (2 * cw, 2 * ch) {
        return Err(RefineError::DimensionMismatch(format!("guide {w}x{h} is not twice {cw}x{ch}")));
    }
    let small = guide.box_downsample();
    let cutoff2 = (COLOR_CUTOFF * COLOR_SIGMA).powi(2);
    let cells = Grid::par_from_fn(w, h, |x, y| {
        // Fine pixel centers sit at 2i + 0.5 in coarse-pixel terms.
        let (u, v) = ((x as f64 - 0.5) / 2.0, (y as f64 - 0.5) / 2.0);
        let g = guide.rgb(x, y);
        let (mut num, mut den) = (0.0, 0.0);
        let (i0, j0) = (u.floor() as isize - 1, v.floor() as isize - 1);
        for j in j0..=j0 + 3 {
            for i in i0..=i0 + 3 {
                if i < 0 || j < 0 || i as usize >= cw || j as usize >= ch {
                    continue;
                }
                let (i, j) = (i as usize, j as usize);
                let Some(d) = coarse.at(i, j) else { continue };
                let r2 = (i as f64 - u).powi(2) + (j as f64 - v).powi(2);
                if r2 > SPATIAL_RADIUS * SPATIAL_RADIUS {
                    continue;
                }
                let c = small.rgb(i, j);
                let c2 = (0..3).map(|k| (g[k] - c[k]).powi(2)).sum::<f64>() / 3.0;
                if c2 > cutoff2 {
                    continue;
                }
                let wt = (-r2 / (2.0 * SPATIAL_SIGMA * SPATIAL_SIGMA)).exp() * (-c2 / (2.0 * COLOR_SIGMA * COLOR_SIGMA)).exp();
                num += wt * d;
                den += wt;
            }
        }
        if den > 0.0 {
            (num / den, true)
        } else {
            (0.0, false)
        }
    });
    Ok(DepthMap::new(cells.map(|c| c.0), cells.map(|c| c.1), coarse.range))
}

/// Mixture and edge warm start from a depth map.
pub fn init_parameters(depth: &DepthMap, config: &RefineConfig) -> RefineInit {
    let (w, h) = depth.dims();
    let span = depth.range.span();
    let offset = config.mu_offset_init * span;
    let sigma = config.sigma_init * span;
    let tau = config.tau_for(depth.range);
    let cells = Grid::from_fn(w, h, |x, y| {
        let d = *depth.depth.get(x, y);
        let mut far = None;
        let mut best = 0.0;
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let (u, v) = (x as isize + dx, y as isize + dy);
                if (dx, dy) == (0, 0) || u < 0 || v < 0 || u as usize >= w || v as usize >= h {
                    continue;
                }
                if let Some(n) = depth.at(u as usize, v as usize) {
                    if (n - d).abs() > best {
                        best = (n - d).abs();
                        far = Some(n);
                    }
                }
            }
        }
        let mu2 = match far {
            Some(n) if best >= offset => n,
            _ => d + offset,
        };
        BimodalLaplacian {
            alpha: 0.9,
            mu1: d,
            sigma1: sigma,
            mu2,
            sigma2: sigma,
        }
    });
    let lap = laplacian_masked(&depth.depth, &depth.valid);
    let edge = EdgeMap::new(lap.map(|l| (l.abs() / tau).min(1.0))).expect("warm start lies in [0, 1]");
    RefineInit {
        bimodal: BimodalDepthMap {
            cells,
            valid: depth.valid.clone(),
            range: depth.range,
        },
        edge,
    }
}

const A: usize = 0;
const M1: usize = 1;
const S1: usize = 2;
const M2: usize = 3;
const S2: usize = 4;
const E: usize = 5;
type Cell = [f64; 6];

/// Logit step unit for α, σ and E coordinates.
const LOGIT_STEP: f64 = 4.0;
/// Edge probabilities are pulled this far from 0 and 1 before taking logits.
const EDGE_CLAMP: f64 = 1e-7;

#[derive(Clone)]
struct State {
    cells: Vec<Cell>,
    /// Per-coordinate fraction of the scheduled step to try first. Halved
    /// on rejection, doubled (up to 1) on acceptance.
    reach: Vec<Cell>,
    width: usize,
    height: usize,
    valid: Grid<bool>,
    range: DepthRange,
    sigma_scale: f64,
}

impl State {
    fn from_init(init: &RefineInit, sigma_scale: f64) -> Self {
        let (width, height) = init.bimodal.dims();
        let cells: Vec<Cell> = init
            .bimodal
            .cells
            .iter()
            .zip(init.edge.grid().iter())
            .map(|(t, e)| {
                let e = e.clamp(EDGE_CLAMP, 1.0 - EDGE_CLAMP);
                [
                    alpha_to_logit(t.alpha),
                    t.mu1,
                    sigma_to_preimage(t.sigma1, sigma_scale),
                    t.mu2,
                    sigma_to_preimage(t.sigma2, sigma_scale),
                    (e / (1.0 - e)).ln(),
                ]
            })
            .collect();
        Self {
            reach: vec![[1.0; 6]; cells.len()],
            cells,
            width,
            height,
            valid: init.bimodal.valid.clone(),
            range: init.bimodal.range,
            sigma_scale,
        }
    }

    fn theta(&self, c: &Cell) -> BimodalLaplacian {
        BimodalLaplacian {
            alpha: alpha_from_logit(c[A]),
            mu1: c[M1],
            sigma1: sigma_from_preimage(c[S1], self.sigma_scale),
            mu2: c[M2],
            sigma2: sigma_from_preimage(c[S2], self.sigma_scale),
        }
    }

    fn bimodal(&self) -> Result<BimodalDepthMap, RefineError> {
        let cells = Grid::from_vec(self.width, self.height, self.cells.iter().map(|c| self.theta(c)).collect());
        Ok(BimodalDepthMap::new(cells, self.valid.clone(), self.range)?)
    }

    fn edge(&self) -> EdgeMap {
        EdgeMap::new(Grid::from_vec(self.width, self.height, self.cells.iter().map(|c| logistic(c[E])).collect()))
            .expect("logistic lies in [0, 1]")
    }

    fn first_wins(&self) -> Vec<bool> {
        self.cells.iter().map(|c| self.theta(c).winning_mode() == Mode::First).collect()
    }

    /// Winning-mode depth without range clamping, so its gradient is exact.
    fn depth(&self) -> DepthMap {
        let d = self
            .cells
            .iter()
            .map(|c| self.theta(c).winning_depth())
            .collect();
        DepthMap::new(Grid::from_vec(self.width, self.height, d), self.valid.clone(), self.range)
    }

    fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Loss at a state and its gradient: μ partials as is, α, σ and E partials
/// with respect to the constrained values.
struct Evaluation {
    row: TraceRow,
    grad: Vec<Cell>,
}

/// Mask and normalizer of the smoothness sum.
struct SmoothTerm {
    mask: Grid<bool>,
    inv_n: f64,
    beta: f64,
    weight: f64,
}

impl SmoothTerm {
    fn new(mask: Grid<bool>, beta: f64, weight: f64) -> Self {
        let n = mask.iter().filter(|v| **v).count();
        Self {
            mask,
            inv_n: if n == 0 { 0.0 } else { 1.0 / n as f64 },
            beta,
            weight,
        }
    }

    /// Weighted smoothness of the stencils touching `(x, y)` when that pixel
    /// takes `depth` and `edge`.
    fn local(&self, depth: &Grid<f64>, edge: &Grid<f64>, valid: &Grid<bool>, x: usize, y: usize, d: f64, e: f64) -> f64 {
        let (w, h) = depth.dims();
        let at = |u: usize, v: usize| if (u, v) == (x, y) { d } else { *depth.get(u, v) };
        let mut sum = 0.0;
        let mut visit = |u: usize, v: usize| {
            if !*self.mask.get(u, v) || !stencil_active(valid, u, v) {
                return;
            }
            let lap = at(u - 1, v) + at(u + 1, v) + at(u, v - 1) + at(u, v + 1) - 4.0 * at(u, v);
            let eu = if (u, v) == (x, y) { e } else { *edge.get(u, v) };
            sum += (-self.beta * eu).exp() * lap.abs();
        };
        visit(x, y);
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
        self.weight * sum * self.inv_n
    }
}

trait Objective: Sync {
    fn eval(&self, state: &State) -> Result<Evaluation, RefineError>;

    /// Weighted data term of pixel `(x, y)` at `depth`.
    fn own_depth(&self, x: usize, y: usize, depth: f64) -> f64;

    /// Weighted terms of pixel `(x, y)` that read only its mixture and edge.
    fn own_params(&self, x: usize, y: usize, theta: &BimodalLaplacian, edge: f64) -> f64;

    fn smooth(&self) -> &SmoothTerm;

    /// Hook run before `step`; returns whether the objective changed.
    fn refresh(&mut self, _state: &State, _step: usize) -> Result<bool, RefineError> {
        Ok(false)
    }

    /// Undoes the last refresh.
    fn revert(&mut self) {}
}

/// Adds the depth gradient onto the winning μ and the collapse-independent
/// parts onto their own coordinates.
fn assemble(state: &State, depth_grad: &Grid<f64>, theta: Option<&ThetaGradients>, edge_grad: &Grid<f64>) -> Vec<Cell> {
    let wins = state.first_wins();
    (0..state.cells.len())
        .map(|i| {
            let mut g = [0.0; 6];
            if let Some(t) = theta {
                g[A] = t.alpha.as_slice()[i];
                g[M1] = t.mu1.as_slice()[i];
                g[S1] = t.sigma1.as_slice()[i];
                g[M2] = t.mu2.as_slice()[i];
                g[S2] = t.sigma2.as_slice()[i];
            }
            g[if wins[i] { M1 } else { M2 }] += depth_grad.as_slice()[i];
            g[E] = edge_grad.as_slice()[i];
            g
        })
        .collect()
}

fn inv_count(mask: impl Iterator<Item = bool>) -> f64 {
    let n = mask.filter(|v| *v).count();
    if n == 0 {
        0.0
    } else {
        1.0 / n as f64
    }
}

struct Supervised {
    gts: Vec<GroundTruth>,
    coarse: Vec<DepthMap>,
    target: BoundaryMask,
    valid: Grid<bool>,
    inv_gt: f64,
    inv_ed: f64,
    inv_bi: f64,
    smooth: SmoothTerm,
    beta: f64,
    tau: f64,
    weights: LossWeights,
}

impl Supervised {
    fn new(gt: &GroundTruth, coarse: &[DepthMap], valid: &Grid<bool>, config: &RefineConfig, range: DepthRange) -> Result<Self, RefineError> {
        let tau = config.tau_for(range);
        let both = gt.valid.iter().zip(valid.iter()).map(|(a, b)| *a && *b);
        let inv_both = inv_count(both);
        Ok(Self {
            gts: gt.pyramid(coarse.len() + 1),
            coarse: coarse.to_vec(),
            target: gt_boundary_target(gt, tau)?,
            valid: valid.clone(),
            inv_gt: inv_both,
            inv_ed: inv_count(gt.valid.iter().copied()),
            inv_bi: inv_both,
            smooth: SmoothTerm::new(gt.valid.clone(), config.beta, config.weights.lambda2),
            beta: config.beta,
            tau,
            weights: config.weights,
        })
    }
}

impl Objective for Supervised {
    fn eval(&self, state: &State) -> Result<Evaluation, RefineError> {
        let mut depths = vec![state.depth()];
        depths.extend(self.coarse.iter().cloned());
        let bimodal = state.bimodal()?;
        let edge = state.edge();
        let report = total_loss(
            &LossInputs {
                depths: &depths,
                gts: &self.gts,
                bimodal: &bimodal,
                edge: &edge,
                beta: self.beta,
                tau: self.tau,
            },
            self.weights,
        )?;
        let g = &report.gradients;
        Ok(Evaluation {
            row: TraceRow {
                step: 0,
                total: report.l_total,
                data: report.l_gt,
                l_ed: report.l_ed,
                l_sm: report.l_sm,
                l_bi: report.l_bi,
                accepted: 0.0,
            },
            grad: assemble(state, &g.depth[0], Some(&g.theta), &g.edge),
        })
    }

    fn own_depth(&self, x: usize, y: usize, depth: f64) -> f64 {
        let gt = &self.gts[0];
        if *gt.valid.get(x, y) && *self.valid.get(x, y) {
            (depth - gt.depth.get(x, y)).abs() * self.inv_gt
        } else {
            0.0
        }
    }

    fn own_params(&self, x: usize, y: usize, theta: &BimodalLaplacian, edge: f64) -> f64 {
        let gt = &self.gts[0];
        if !*gt.valid.get(x, y) {
            return 0.0;
        }
        let m = if *self.target.get(x, y) { 1.0 } else { 0.0 };
        let mut v = self.weights.lambda1 * (edge - m).powi(2) * self.inv_ed;
        if *self.valid.get(x, y) {
            let (la, lb) = component_log_densities(*gt.depth.get(x, y), theta);
            v -= self.weights.lambda3 * log_add_exp(la, lb) * self.inv_bi;
        }
        v
    }

    fn smooth(&self) -> &SmoothTerm {
        &self.smooth
    }
}

struct SelfSupervised<'a> {
    matcher: MatchCost<'a>,
    target: BoundaryMask,
    valid: Grid<bool>,
    inv_n: f64,
    smooth: SmoothTerm,
    beta: f64,
    tau: f64,
    weights: LossWeights,
    fd_step: f64,
    photo_weight: f64,
    refresh_every: usize,
    previous: Option<BoundaryMask>,
}

impl SelfSupervised<'_> {
    fn target_of(state: &State, tau: f64) -> BoundaryMask {
        let d = state.depth();
        laplacian_masked(&d.depth, &d.valid).map(|l| l.abs() > tau)
    }

    fn photo(&self, x: usize, y: usize, depth: f64) -> f64 {
        let c = self.matcher.cost(x, y, depth);
        self.photo_weight * if c.valid { c.cost } else { WORST_COST }
    }
}

impl Objective for SelfSupervised<'_> {
    fn eval(&self, state: &State) -> Result<Evaluation, RefineError> {
        let depth = state.depth();
        let edge = state.edge();
        let (w, h) = depth.dims();
        let fd = self.fd_step;
        // (cost at D, d cost / d D)
        let photo = Grid::par_from_fn(w, h, |x, y| {
            if !*state.valid.get(x, y) {
                return (0.0, 0.0);
            }
            let d = *depth.depth.get(x, y);
            let c = self.matcher.costs(x, y, &[d, d + fd, d - fd]);
            let val = |k: usize| self.photo_weight * if c[k].valid { c[k].cost } else { WORST_COST };
            (val(0), (val(1) - val(2)) / (2.0 * fd))
        });
        let data = ordered_row_sum(h, |y| (0..w).map(|x| photo.get(x, y).0).sum::<f64>()) * self.inv_n;
        let (l_ed, ed_grad) = edge_term_with_target(&edge, &self.target, &state.valid)?;
        let (l_sm, sm_depth, sm_edge) = smoothness_term(&depth, &edge, &state.valid, self.beta)?;
        let LossWeights { lambda1, lambda2, .. } = self.weights;
        let total = data + lambda1 * l_ed + lambda2 * l_sm;
        let depth_grad = Grid::from_fn(w, h, |x, y| photo.get(x, y).1 * self.inv_n + lambda2 * sm_depth.get(x, y));
        let edge_grad = Grid::from_fn(w, h, |x, y| lambda1 * ed_grad.get(x, y) + lambda2 * sm_edge.get(x, y));
        Ok(Evaluation {
            row: TraceRow {
                step: 0,
                total,
                data,
                l_ed,
                l_sm,
                l_bi: 0.0,
                accepted: 0.0,
            },
            grad: assemble(state, &depth_grad, None, &edge_grad),
        })
    }

    fn own_depth(&self, x: usize, y: usize, depth: f64) -> f64 {
        if *self.valid.get(x, y) {
            self.photo(x, y, depth) * self.inv_n
        } else {
            0.0
        }
    }

    fn own_params(&self, x: usize, y: usize, _theta: &BimodalLaplacian, edge: f64) -> f64 {
        if !*self.valid.get(x, y) {
            return 0.0;
        }
        let m = if *self.target.get(x, y) { 1.0 } else { 0.0 };
        self.weights.lambda1 * (edge - m).powi(2) * self.inv_n
    }

    fn smooth(&self) -> &SmoothTerm {
        &self.smooth
    }

    fn refresh(&mut self, state: &State, step: usize) -> Result<bool, RefineError> {
        if step == 0 || !step.is_multiple_of(self.refresh_every) {
            return Ok(false);
        }
        let fresh = Self::target_of(state, self.tau);
        if fresh == self.target {
            return Ok(false);
        }
        self.previous = Some(std::mem::replace(&mut self.target, fresh));
        Ok(true)
    }

    fn revert(&mut self) {
        if let Some(t) = self.previous.take() {
            self.target = t;
        }
    }
}

/// Descent direction per coordinate, before the step size.
fn direction(state: &State, grad: &[Cell]) -> Vec<Cell> {
    let n = state.valid_count().max(1) as f64;
    let span = state.range.span();
    state
        .cells
        .iter()
        .zip(grad)
        .map(|(c, g)| {
            let clip = |v: f64| (n * v).clamp(-1.0, 1.0);
            let mut d = [0.0; 6];
            d[M1] = -span * clip(g[M1]);
            d[M2] = -span * clip(g[M2]);
            // α and E partials are per unit probability; σ partials per unit
            // of relative scale.
            d[A] = -LOGIT_STEP * clip(g[A]);
            d[E] = -LOGIT_STEP * clip(g[E]);
            let s1 = sigma_from_preimage(c[S1], state.sigma_scale);
            let s2 = sigma_from_preimage(c[S2], state.sigma_scale);
            d[S1] = -LOGIT_STEP * clip(g[S1] * s1);
            d[S2] = -LOGIT_STEP * clip(g[S2] * s2);
            d
        })
        .collect()
}

/// Pixels of one color share no loss term: the stencils of two pixels
/// overlap only within Manhattan distance 2, and `(x + 2y) mod 5` separates
/// all such pairs.
const COLORS: usize = 5;

fn color_of(x: usize, y: usize) -> usize {
    (x + 2 * y) % COLORS
}

/// One pass over the colors. Each pixel takes its coordinates in turn,
/// halving that coordinate's step until the local energy drops. Returns the fraction of pixels that moved.
fn coordinate_pass(state: &mut State, dir: &[Cell], eta: f64, objective: &dyn Objective, config: &RefineConfig, min_gain: f64) -> f64 {
    let (w, h) = (state.width, state.height);
    let mut moved = 0usize;
    for color in 0..COLORS {
        let depth = state.depth().depth;
        let edge = state.edge().into_grid();
        let snapshot = &*state;
        let updates: Vec<(usize, Cell, Cell)> = Grid::par_from_fn(w, h, |x, y| {
            if color_of(x, y) != color || !*snapshot.valid.get(x, y) {
                return None;
            }
            let i = y * w + x;
            let smooth = objective.smooth();
            let mut cur = snapshot.cells[i];
            let mut cur_depth = snapshot.theta(&cur).winning_depth();
            let mut cur_data = objective.own_depth(x, y, cur_depth);
            let energy = |c: &Cell, d: f64, data: f64| {
                let e = logistic(c[E]);
                data + objective.own_params(x, y, &snapshot.theta(c), e) + smooth.local(&depth, &edge, &snapshot.valid, x, y, d, e)
            };
            let mut base = energy(&cur, cur_depth, cur_data);
            let mut reach = snapshot.reach[i];
            let mut changed = false;
            for k in [M1, M2, A, S1, S2, E] {
                if dir[i][k] == 0.0 {
                    continue;
                }
                let mut f = reach[k];
                let mut taken = false;
                for _ in 0..=config.max_backtracks {
                    let mut cand = cur;
                    cand[k] += eta * f * dir[i][k];
                    let d = snapshot.theta(&cand).winning_depth();
                    let data = if d == cur_depth { cur_data } else { objective.own_depth(x, y, d) };
                    let v = energy(&cand, d, data);
                    if v.is_finite() && v < base - min_gain {
                        (cur, cur_depth, cur_data, base, changed) = (cand, d, data, v, true);
                        taken = true;
                        break;
                    }
                    f *= 0.5;
                }
                reach[k] = if taken { (2.0 * f).min(1.0) } else { f.max(MIN_REACH) };
            }
            (changed || reach != snapshot.reach[i]).then_some((i, cur, reach))
        })
        .into_vec()
        .into_iter()
        .flatten()
        .collect();
        for (i, c, r) in updates {
            moved += usize::from(c != state.cells[i]);
            state.cells[i] = c;
            state.reach[i] = r;
        }
    }
    moved as f64 / state.valid_count().max(1) as f64
}

const MIN_REACH: f64 = 1.0 / (1u64 << 40) as f64;

/// Smallest local energy drop worth taking, relative to the global loss, so
/// that summation rounding cannot turn accepted moves into a global rise.
const MIN_GAIN_REL: f64 = 1e-13;

fn descend(mut state: State, objective: &mut dyn Objective, config: &RefineConfig) -> Result<(State, Vec<TraceRow>), RefineError> {
    let mut current = objective.eval(&state)?;
    if !current.row.total.is_finite() {
        return Err(RefineError::DivergedLoss(0));
    }
    let mut trace = vec![current.row];
    for step in 0..config.steps {
        if objective.refresh(&state, step)? {
            let refreshed = objective.eval(&state)?;
            if refreshed.row.total <= current.row.total {
                current = refreshed;
            } else {
                objective.revert();
            }
        }
        let eta = config.step_size_at(step);
        let dir = direction(&state, &current.grad);
        let min_gain = MIN_GAIN_REL * current.row.total.abs().max(1.0);
        let mut next_state = state.clone();
        let moved = coordinate_pass(&mut next_state, &dir, eta, &*objective, config, min_gain);
        let next = objective.eval(&next_state)?;
        if !next.row.total.is_finite() {
            return Err(RefineError::DivergedLoss(step + 1));
        }
        let accepted = if next.row.total <= current.row.total {
            state = next_state;
            current = next;
            moved
        } else {
            0.0
        };
        trace.push(TraceRow {
            step: step + 1,
            accepted,
            ..current.row
        });
    }
    Ok((state, trace))
}

fn finish(state: State, trace: Vec<TraceRow>) -> Result<RefineResult, RefineError> {
    let bimodal = state.bimodal()?;
    let depth = crate::bimodal::collapse(&bimodal);
    Ok(RefineResult {
        bimodal,
        edge: state.edge(),
        depth,
        trace,
    })
}

fn check_init(init: &RefineInit) -> Result<(), RefineError> {
    if init.bimodal.dims() != init.edge.dims() {
        return Err(RefineError::DimensionMismatch("edge map vs bimodal map".into()));
    }
    Ok(())
}

/// Supervised refinement against full-resolution ground truth.
pub fn refine_supervised(init: &RefineInit, gt: &GroundTruth, config: &RefineConfig) -> Result<RefineResult, RefineError> {
    refine_supervised_multiscale(init, gt, &[], config)
}

/// Supervised refinement where `coarse[k − 1]` enters the depth term as scale
/// `k` against the `2^k`-downsampled ground truth. The coarse maps are fixed
/// inputs, so they shift the loss but not the descent.
pub fn refine_supervised_multiscale(
    init: &RefineInit,
    gt: &GroundTruth,
    coarse: &[DepthMap],
    config: &RefineConfig,
) -> Result<RefineResult, RefineError> {
    config.validate()?;
    check_init(init)?;
    if gt.dims() != init.bimodal.dims() {
        let ((a, b), (c, d)) = (gt.dims(), init.bimodal.dims());
        return Err(RefineError::DimensionMismatch(format!("ground truth {a}x{b} vs estimate {c}x{d}")));
    }
    let range = init.bimodal.range;
    let mut objective = Supervised::new(gt, coarse, &init.bimodal.valid, config, range)?;
    for (k, (c, g)) in objective.coarse.iter().zip(&objective.gts[1..]).enumerate() {
        if c.dims() != g.dims() {
            return Err(RefineError::DimensionMismatch(format!("coarse level {} has the wrong size", k + 1)));
        }
    }
    let state = State::from_init(init, config.sigma_init * range.span());
    let (state, trace) = descend(state, &mut objective, config)?;
    finish(state, trace)
}

/// Refinement with a photometric data term in place of ground truth.
/// `reference` and `sources` must be at the resolution of `init`.
pub fn refine_self_supervised(
    init: &RefineInit,
    reference: &CalibratedView,
    sources: &[CalibratedView],
    config: &RefineConfig,
) -> Result<RefineResult, RefineError> {
    config.validate()?;
    check_init(init)?;
    if sources.is_empty() {
        return Err(RefineError::NoSources);
    }
    let dims = init.bimodal.dims();
    if let Some(v) = std::iter::once(reference).chain(sources).find(|v| (v.width(), v.height()) != dims) {
        return Err(RefineError::DimensionMismatch(format!(
            "view {}x{} vs estimate {}x{}",
            v.width(),
            v.height(),
            dims.0,
            dims.1
        )));
    }
    let range = init.bimodal.range;
    let tau = config.tau_for(range);
    let state = State::from_init(init, config.sigma_init * range.span());
    let mut objective = SelfSupervised {
        matcher: MatchCost::new(reference, sources, config.window),
        target: SelfSupervised::target_of(&state, tau),
        valid: state.valid.clone(),
        inv_n: inv_count(state.valid.iter().copied()),
        smooth: SmoothTerm::new(state.valid.clone(), config.beta, config.weights.lambda2),
        beta: config.beta,
        tau,
        weights: config.weights,
        fd_step: 1e-3 * range.span(),
        photo_weight: config.photometric_weight * range.span(),
        refresh_every: config.target_refresh,
        previous: None,
    };
    let (state, trace) = descend(state, &mut objective, config)?;
    finish(state, trace)
}

/// Either mode, as selected by `config.mode`.
pub fn refine(
    init: &RefineInit,
    gt: Option<&GroundTruth>,
    reference: &CalibratedView,
    sources: &[CalibratedView],
    config: &RefineConfig,
) -> Result<RefineResult, RefineError> {
    match (config.mode, gt) {
        (RefineMode::Supervised, Some(gt)) => refine_supervised(init, gt, config),
        (RefineMode::Supervised, None) => Err(RefineError::InvalidConfig("supervised mode needs ground truth".into())),
        (RefineMode::SelfSupervised, _) => refine_self_supervised(init, reference, sources, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bimodal::{collapse, SIGMA_FLOOR};
    use crate::eval::depth_metrics;
    use crate::synth::{render_scene, SceneSpec, PLANE_SCENE};

    const RANGE: DepthRange = DepthRange { min: 500.0, max: 900.0 };

    fn step_gt() -> GroundTruth {
        GroundTruth::from_depth(Grid::from_fn(32, 32, |x, y| if (10..22).contains(&x) && (8..24).contains(&y) { 650.0 } else { 800.0 }))
    }

    /// Ground truth blurred across the step plus a fixed ripple.
    fn noisy_init(gt: &GroundTruth) -> DepthMap {
        let (w, h) = gt.dims();
        let d = Grid::from_fn(w, h, |x, y| {
            let mut s = 0.0;
            let mut n = 0.0;
            for (u, v) in [(x.wrapping_sub(1), y), (x, y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)] {
                if u < w && v < h {
                    s += gt.depth.get(u, v);
                    n += 1.0;
                }
            }
            s / n + ((x * 7 + y * 13) % 5) as f64 - 2.0
        });
        DepthMap::dense(d, RANGE)
    }

    #[test]
    fn config_validation_and_schedule() {
        let c = RefineConfig::default();
        c.validate().unwrap();
        assert_eq!(c.step_size_at(0), 0.05);
        assert!((c.step_size_at(399) - 0.001).abs() < 1e-15);
        assert!(c.step_size_at(200) < c.step_size_at(100));
        for bad in [
            RefineConfig { step_size: 0.0, ..c },
            RefineConfig { sigma_init: 1.0, ..c },
            RefineConfig { mu_offset_init: 0.0, ..c },
            RefineConfig { tau: Some(-1.0), ..c },
            RefineConfig { window: 4, ..c },
        ] {
            assert!(matches!(bad.validate(), Err(RefineError::InvalidConfig(_))));
        }
        assert_eq!(c.tau_for(RANGE), 2.0);
    }

    #[test]
    fn upsample_constant_and_invalid() {
        let guide = Image::from_rgb_fn(16, 12, |x, y| [(x as f64 * 0.37).sin().abs(), (y as f64 * 0.21).cos().abs(), 0.5]);
        let coarse = DepthMap::constant(8, 6, 640.0, RANGE);
        let fine = upsample_depth(&coarse, &guide).unwrap();
        assert_eq!(fine.dims(), (16, 12));
        assert!(fine.depth.iter().all(|d| (d - 640.0).abs() < 1e-12));
        assert!(fine.valid.iter().all(|v| *v));

        let mut none = coarse.clone();
        none.valid = Grid::filled(8, 6, false);
        assert!(upsample_depth(&none, &guide).unwrap().valid.iter().all(|v| !*v));
        assert!(matches!(upsample_depth(&coarse, &Image::from_rgb_fn(15, 12, |_, _| [0.0; 3])), Err(RefineError::DimensionMismatch(_))));
    }

    #[test]
    fn upsample_follows_guide_edge() {
        let coarse = DepthMap::dense(Grid::from_fn(8, 8, |x, _| if x < 4 { 600.0 } else { 700.0 }), RANGE);
        let guide = Image::from_rgb_fn(16, 16, |x, _| if x < 8 { [0.1; 3] } else { [0.9; 3] });
        let fine = upsample_depth(&coarse, &guide).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let d = *fine.depth.get(x, y);
                let blended = d > 600.0 + 1e-9 && d < 700.0 - 1e-9;
                assert!(!blended || x == 7 || x == 8, "blend {d} at ({x}, {y})");
                assert!((d - if x < 8 { 600.0 } else { 700.0 }).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn init_constant_map() {
        let c = RefineConfig::default();
        let init = init_parameters(&DepthMap::constant(9, 7, 700.0, RANGE), &c);
        for t in init.bimodal.cells.iter() {
            assert_eq!(t.alpha, 0.9);
            assert_eq!(t.mu1, 700.0);
            assert_eq!(t.mu2, 708.0);
            assert_eq!((t.sigma1, t.sigma2), (4.0, 4.0));
        }
        assert!(init.edge.grid().iter().all(|e| *e == 0.0));
    }

    #[test]
    fn init_takes_second_mode_across_step() {
        let gt = step_gt();
        let depth = gt.as_depth_map(RANGE);
        let init = init_parameters(&depth, &RefineConfig::default());
        for y in 1..31 {
            for x in 1..31 {
                let d = *depth.depth.get(x, y);
                let across = (-1isize..=1).any(|dy| (-1isize..=1).any(|dx| *depth.depth.get((x as isize + dx) as usize, (y as isize + dy) as usize) != d));
                let t = init.bimodal.cells.get(x, y);
                assert_eq!(t.mu1, d);
                if across {
                    assert_eq!(t.mu2, if d == 650.0 { 800.0 } else { 650.0 });
                } else {
                    assert_eq!(t.mu2, d + 8.0);
                }
            }
        }
        let e = init.edge.grid();
        assert_eq!(*e.get(10, 15), 1.0);
        assert_eq!(*e.get(15, 15), 0.0);
    }

    #[test]
    fn optimal_init_is_stationary() {
        // Affine ground truth, both modes on it, σ at the floor and E on the
        // (empty) discontinuity mask.
        let gt = GroundTruth::from_depth(Grid::from_fn(24, 20, |x, y| 600.0 + 2.0 * x as f64 - 3.0 * y as f64));
        let sigma = SIGMA_FLOOR * (1.0 + 1e-9);
        let cells = gt.depth.map(|g| BimodalLaplacian {
            alpha: 0.5,
            mu1: *g,
            sigma1: sigma,
            mu2: *g,
            sigma2: sigma,
        });
        let init = RefineInit {
            bimodal: BimodalDepthMap::new(cells, Grid::filled(24, 20, true), RANGE).unwrap(),
            edge: EdgeMap::zeros(24, 20),
        };
        let cfg = RefineConfig { steps: 60, ..Default::default() };
        let res = refine_supervised(&init, &gt, &cfg).unwrap();
        let tr = res.totals();
        assert!(tr.iter().all(|t| (t - tr[0]).abs() <= 1e-6 * tr[0].abs()));
        for (a, b) in res.bimodal.cells.iter().zip(init.bimodal.cells.iter()) {
            for (p, q) in [(a.alpha, b.alpha), (a.mu1, b.mu1), (a.mu2, b.mu2), (a.sigma1, b.sigma1), (a.sigma2, b.sigma2)] {
                assert!((p - q).abs() < 1e-6);
            }
        }
        assert!(res.edge.grid().iter().all(|e| *e < 1e-6));
    }

    #[test]
    fn zero_weights_fit_ground_truth() {
        let gt = step_gt();
        let cfg = RefineConfig {
            weights: LossWeights::zero(),
            ..Default::default()
        };
        let init = init_parameters(&noisy_init(&gt), &cfg);
        let res = refine_supervised(&init, &gt, &cfg).unwrap();
        let worst = res.depth.depth.iter().zip(gt.depth.iter()).map(|(d, g)| (d - g).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-3 * RANGE.span(), "worst {worst}");
    }

    #[test]
    fn supervised_improves_step() {
        let gt = step_gt();
        let cfg = RefineConfig { steps: 150, ..Default::default() };
        let init_depth = noisy_init(&gt);
        let init = init_parameters(&init_depth, &cfg);
        let res = refine_supervised(&init, &gt, &cfg).unwrap();
        let before = depth_metrics(&collapse(&init.bimodal), &gt, 8.0, 5.0).unwrap();
        let after = depth_metrics(&res.depth, &gt, 8.0, 5.0).unwrap();
        assert!(after.boundary_mae < before.boundary_mae, "{} vs {}", after.boundary_mae, before.boundary_mae);
        assert!(after.smooth_mae < before.smooth_mae);
        let tr = res.totals();
        assert!(tr.last().unwrap() < &tr[0]);
        assert!(tr.windows(2).all(|w| w[1] <= w[0]));
        assert!(tr.iter().all(|t| t.is_finite()));
        assert_eq!(res.trace.len(), 151);
        assert_eq!(res.depth, collapse(&res.bimodal));
        for t in res.bimodal.cells.iter() {
            t.validate().unwrap();
            assert!(t.alpha > 0.0 && t.alpha < 1.0 && t.sigma1 >= SIGMA_FLOOR && t.sigma2 >= SIGMA_FLOOR);
        }
        assert!(res.edge.grid().iter().all(|e| (0.0..=1.0).contains(e)));
    }

    #[test]
    fn supervised_is_deterministic() {
        let gt = step_gt();
        let cfg = RefineConfig { steps: 30, ..Default::default() };
        let init = init_parameters(&noisy_init(&gt), &cfg);
        assert_eq!(refine_supervised(&init, &gt, &cfg).unwrap(), refine_supervised(&init, &gt, &cfg).unwrap());
    }

    #[test]
    fn supervised_rejects_bad_inputs() {
        let gt = step_gt();
        let cfg = RefineConfig::default();
        let init = init_parameters(&DepthMap::constant(16, 16, 700.0, RANGE), &cfg);
        assert!(matches!(refine_supervised(&init, &gt, &cfg), Err(RefineError::DimensionMismatch(_))));
        let init = init_parameters(&noisy_init(&gt), &cfg);
        let coarse = vec![DepthMap::constant(10, 10, 700.0, RANGE)];
        assert!(matches!(refine_supervised_multiscale(&init, &gt, &coarse, &cfg), Err(RefineError::DimensionMismatch(_))));
    }

    #[test]
    fn coarse_levels_shift_the_loss_only() {
        let gt = step_gt();
        let cfg = RefineConfig { steps: 10, ..Default::default() };
        let init = init_parameters(&noisy_init(&gt), &cfg);
        let coarse = vec![DepthMap::constant(16, 16, 700.0, RANGE), DepthMap::constant(8, 8, 700.0, RANGE)];
        let a = refine_supervised(&init, &gt, &cfg).unwrap();
        let b = refine_supervised_multiscale(&init, &gt, &coarse, &cfg).unwrap();
        let shift: f64 = coarse.iter().zip(&gt.pyramid(3)[1..]).map(|(c, g)| crate::losses::depth_gt_loss(std::slice::from_ref(c), std::slice::from_ref(g)).unwrap()).sum();
        assert!(shift > 0.0);
        assert!((b.trace[0].total - a.trace[0].total - shift).abs() < 1e-9);
        assert!(b.trace.last().unwrap().total < b.trace[0].total);
    }

    /// The local energies used for acceptance must account for exactly the
    /// global change caused by moving one pixel.
    fn check_local_energy(objective: &dyn Objective, state: &State) {
        let base = objective.eval(state).unwrap().row.total;
        let depth = state.depth().depth;
        let edge = state.edge().into_grid();
        let (w, _) = (state.width, state.height);
        let local = |s: &State, x: usize, y: usize| {
            let c = s.cells[y * w + x];
            let t = s.theta(&c);
            let d = t.winning_depth();
            let e = logistic(c[E]);
            objective.own_depth(x, y, d) + objective.own_params(x, y, &t, e) + objective.smooth().local(&depth, &edge, &s.valid, x, y, d, e)
        };
        for (x, y, delta) in [(10, 8, [0.3, -4.0, 0.2, 9.0, -0.4, 1.5]), (15, 15, [-0.2, 2.5, -0.3, -1.0, 0.1, -2.0]), (0, 0, [0.1, 1.0, 0.1, 1.0, 0.1, 0.5])] {
            let mut moved = state.clone();
            for k in 0..6 {
                moved.cells[y * w + x][k] += delta[k];
            }
            let global = objective.eval(&moved).unwrap().row.total - base;
            let loc = local(&moved, x, y) - local(state, x, y);
            assert!((global - loc).abs() <= 1e-12 * base.abs().max(1.0), "({x}, {y}): {global} vs {loc}");
        }
    }

    #[test]
    fn local_energy_matches_global_supervised() {
        let gt = step_gt();
        let cfg = RefineConfig::default();
        let init = init_parameters(&noisy_init(&gt), &cfg);
        let state = State::from_init(&init, cfg.sigma_init * RANGE.span());
        let objective = Supervised::new(&gt, &[], &init.bimodal.valid, &cfg, RANGE).unwrap();
        check_local_energy(&objective, &state);
    }

    #[test]
    fn local_energy_matches_global_self_supervised() {
        let scene = render_scene(&SceneSpec::parse(PLANE_SCENE).unwrap()).unwrap();
        let cfg = RefineConfig::default();
        let gt = &scene.gt_depths[0];
        let range = scene.views[0].range();
        let depth = DepthMap::dense(gt.depth.map(|d| d + 1.5), range);
        let init = init_parameters(&depth, &cfg);
        let state = State::from_init(&init, cfg.sigma_init * range.span());
        let tau = cfg.tau_for(range);
        let objective = SelfSupervised {
            matcher: MatchCost::new(&scene.views[0], &scene.views[1..], cfg.window),
            target: SelfSupervised::target_of(&state, tau),
            valid: state.valid.clone(),
            inv_n: inv_count(state.valid.iter().copied()),
            smooth: SmoothTerm::new(state.valid.clone(), cfg.beta, cfg.weights.lambda2),
            beta: cfg.beta,
            tau,
            weights: cfg.weights,
            fd_step: 1e-3 * range.span(),
            photo_weight: cfg.photometric_weight * range.span(),
            refresh_every: cfg.target_refresh,
            previous: None,
        };
        check_local_energy(&objective, &state);
    }

    #[test]
    fn self_supervised_zero_steps_returns_init() {
        let scene = render_scene(&SceneSpec::parse(PLANE_SCENE).unwrap()).unwrap();
        let cfg = RefineConfig {
            steps: 0,
            mode: RefineMode::SelfSupervised,
            ..Default::default()
        };
        let depth = DepthMap::dense(scene.gt_depths[0].depth.map(|d| d + 1.5), scene.views[0].range());
        let init = init_parameters(&depth, &cfg);
        let res = refine_self_supervised(&init, &scene.views[0], &scene.views[1..], &cfg).unwrap();
        assert_eq!(res.depth, collapse(&init.bimodal));
        assert_eq!(res.trace.len(), 1);
        assert!(matches!(refine_self_supervised(&init, &scene.views[0], &[], &cfg), Err(RefineError::NoSources)));
        assert!(matches!(refine(&init, None, &scene.views[0], &scene.views[1..], &RefineConfig::default()), Err(RefineError::InvalidConfig(_))));
    }

    #[test]
    fn trace_csv_has_a_row_per_step() {
        let gt = step_gt();
        let cfg = RefineConfig { steps: 3, ..Default::default() };
        let res = refine_supervised(&init_parameters(&noisy_init(&gt), &cfg), &gt, &cfg).unwrap();
        let csv = trace_csv(&res.trace);
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("step,total,l_gt,l_ed,l_sm,l_bi\n"));
    }
}
