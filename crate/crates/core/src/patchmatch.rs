//! Coarse-to-fine PatchMatch over fronto-parallel depth hypotheses.
//!
//! Each level alternates red/black checkerboard half-rounds. In a half-round
//! the pixels of one parity gather their incumbent depth, the depths of their
//! 4-neighbors (all of the other parity), and a few random perturbations, then
//! keep the candidate with the lowest zero-mean NCC cost averaged over the
//! source views. The coarsest level starts from uniform random depths; finer
//! levels start from the nearest-neighbor upsampled coarser result. The
//! finest level runs at half the input resolution.
//!
//! Every random draw comes from a stream keyed by `(seed, level, round, x, y)`
//! so results do not depend on how pixels are scheduled across threads.

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{CalibratedView, PlaneHomography};
use crate::grid::{DepthMap, DepthRange, Grid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatchMatchError {
    #[error("at least one source view is required")]
    NoSources,
    #[error("image {width}x{height} too small for {levels} pyramid levels")]
    ImageTooSmall { width: usize, height: usize, levels: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Denominator guard for NCC and the textureless-patch threshold.
pub const NCC_EPS: f64 = 1e-6;
/// Cost assigned to textureless reference patches and unmatched pixels.
pub const WORST_COST: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchMatchConfig {
    pub levels: usize,
    pub iterations_per_level: usize,
    /// Odd side length of the square matching window.
    pub window: usize,
    pub hypotheses_per_pixel: usize,
    pub rng_seed: u64,
}

impl Default for PatchMatchConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            iterations_per_level: 2,
            window: 5,
            hypotheses_per_pixel: 8,
            rng_seed: 0,
        }
    }
}

impl PatchMatchConfig {
    pub fn validate(&self) -> Result<(), PatchMatchError> {
        if self.levels < 1 {
            return Err(PatchMatchError::InvalidConfig("levels must be ≥ 1".into()));
        }
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(PatchMatchError::InvalidConfig(format!("window {} must be odd and ≥ 3", self.window)));
        }
        if self.hypotheses_per_pixel < 2 {
            return Err(PatchMatchError::InvalidConfig("hypotheses_per_pixel must be ≥ 2".into()));
        }
        Ok(())
    }
}

/// Checkerboard color; red pixels have even `x + y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Red,
    Black,
}

impl Parity {
    #[inline]
    pub fn of(x: usize, y: usize) -> Parity {
        if (x + y).is_multiple_of(2) {
            Parity::Red
        } else {
            Parity::Black
        }
    }
}

/// Per-pixel depth hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidates {
    pub lists: Grid<Vec<f64>>,
}

impl Candidates {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            lists: Grid::filled(width, height, Vec::new()),
        }
    }

    /// A single-hypothesis set at every pixel.
    pub fn uniform(width: usize, height: usize, depths: &[f64]) -> Self {
        Self {
            lists: Grid::filled(width, height, depths.to_vec()),
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        self.lists.get(x, y)
    }

    /// Appends `other`'s hypotheses after this set's, pixel by pixel.
    pub fn extend(&mut self, other: &Candidates) {
        for (a, b) in self.lists.as_mut_slice().iter_mut().zip(other.lists.iter()) {
            a.extend_from_slice(b);
        }
    }
}

/// Selected depth and best cost per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub depth: DepthMap,
    pub cost: Grid<f64>,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream for one pixel at one `(level, round)` step.
pub fn pixel_rng(seed: u64, level: u64, round: u64, x: usize, y: usize) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for v in [level, round, x as u64, y as u64] {
        h = splitmix64(h ^ v);
    }
    ChaCha8Rng::seed_from_u64(h)
}

// Rounds are offset so the initialization stream never collides with a
// perturbation round.
const INIT_ROUND: u64 = u64::MAX;

/// Uniform random depths in `range`, independent per pixel.
pub fn random_init(width: usize, height: usize, range: DepthRange, level: usize, config: &PatchMatchConfig) -> DepthMap {
    let depth = Grid::par_from_fn(width, height, |x, y| {
        let mut rng = pixel_rng(config.rng_seed, level as u64, INIT_ROUND, x, y);
        let u: f64 = rng.random();
        range.clamp(range.min + u * range.span())
    });
    DepthMap::dense(depth, range)
}

/// Nearest-neighbor 2× upsampling of depth and validity.
pub fn upsample_init(coarse: &DepthMap, width: usize, height: usize) -> Result<DepthMap, PatchMatchError> {
    if width != 2 * coarse.width() || height != 2 * coarse.height() {
        return Err(PatchMatchError::DimensionMismatch(format!(
            "target {width}x{height} is not twice {}x{}",
            coarse.width(),
            coarse.height()
        )));
    }
    Ok(DepthMap::new(
        Grid::from_fn(width, height, |x, y| *coarse.depth.get(x / 2, y / 2)),
        Grid::from_fn(width, height, |x, y| *coarse.valid.get(x / 2, y / 2)),
        coarse.range,
    ))
}

fn valid_neighbors(depth: &DepthMap, x: usize, y: usize) -> impl Iterator<Item = f64> + '_ {
    let (w, h) = depth.dims();
    let mut out = [None; 4];
    if x > 0 {
        out[0] = depth.at(x - 1, y);
    }
    if x + 1 < w {
        out[1] = depth.at(x + 1, y);
    }
    if y > 0 {
        out[2] = depth.at(x, y - 1);
    }
    if y + 1 < h {
        out[3] = depth.at(x, y + 1);
    }
    out.into_iter().flatten()
}

/// For pixels of `parity`: the incumbent depth followed by the distinct depths
/// of valid 4-neighbors. Other pixels get no candidates.
pub fn propagate(depth: &DepthMap, parity: Parity) -> Candidates {
    let (w, h) = depth.dims();
    Candidates {
        lists: Grid::from_fn(w, h, |x, y| {
            if Parity::of(x, y) != parity {
                return Vec::new();
            }
            let mut list = vec![*depth.depth.get(x, y)];
            for d in valid_neighbors(depth, x, y) {
                if !list.contains(&d) {
                    list.push(d);
                }
            }
            list
        }),
    }
}

/// Full width of the perturbation window at a given round.
pub fn perturbation_window(range: DepthRange, round: usize) -> f64 {
    range.span() / 4.0 / 2f64.powi(round.min(1000) as i32)
}

/// Random hypotheses around each pixel's current depth, restricted to pixels
/// of `parity` when given. Each pixel receives `hypotheses_per_pixel − (valid
/// neighbor count + 1)` draws, uniform within the round's window and clamped
/// to the depth range.
pub fn random_perturbation(depth: &DepthMap, level: usize, round: usize, parity: Option<Parity>, config: &PatchMatchConfig) -> Candidates {
    let (w, h) = depth.dims();
    let half = 0.5 * perturbation_window(depth.range, round);
    Candidates {
        lists: Grid::par_from_fn(w, h, |x, y| {
            if parity.is_some_and(|p| p != Parity::of(x, y)) {
                return Vec::new();
            }
            let n = config.hypotheses_per_pixel.saturating_sub(valid_neighbors(depth, x, y).count() + 1);
            let mut rng = pixel_rng(config.rng_seed, level as u64, round as u64, x, y);
            let d0 = *depth.depth.get(x, y);
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random();
                    depth.range.clamp(d0 + (2.0 * u - 1.0) * half)
                })
                .collect()
        }),
    }
}

/// Outcome of matching one pixel at one depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelCost {
    pub cost: f64,
    /// At least one source had ≥ 50% of the window inside its image.
    pub valid: bool,
}

struct SourceMatcher<'a> {
    homography: PlaneHomography,
    intensity: &'a Grid<f64>,
}

/// Photometric matching cost between a reference view and its sources.
pub struct MatchCost<'a> {
    reference: &'a Grid<f64>,
    sources: Vec<SourceMatcher<'a>>,
    radius: isize,
}

impl<'a> MatchCost<'a> {
    pub fn new(reference: &'a CalibratedView, sources: &'a [CalibratedView], window: usize) -> Self {
        Self {
            reference: &reference.intensity,
            sources: sources
                .iter()
                .map(|s| SourceMatcher {
                    homography: PlaneHomography::between(reference, s),
                    intensity: &s.intensity,
                })
                .collect(),
            radius: (window / 2) as isize,
        }
    }

    fn ref_window(&self, x: usize, y: usize) -> (Vec<(f64, f64, f64)>, f64) {
        let (w, h) = self.reference.dims();
        let mut samples = Vec::with_capacity(((2 * self.radius + 1) * (2 * self.radius + 1)) as usize);
        for dy in -self.radius..=self.radius {
            for dx in -self.radius..=self.radius {
                let (u, v) = (x as isize + dx, y as isize + dy);
                if u >= 0 && v >= 0 && (u as usize) < w && (v as usize) < h {
                    samples.push((u as f64, v as f64, *self.reference.get(u as usize, v as usize)));
                }
            }
        }
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| s.2).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s.2 - mean).powi(2)).sum::<f64>() / n;
        (samples, var)
    }

    /// Zero-mean NCC between the reference window and one source, or `None`
    /// when fewer than half of the window's samples land in the source.
    fn ncc(&self, src: &SourceMatcher<'_>, h: &Matrix3<f64>, window: &[(f64, f64, f64)], pairs: &mut Vec<(f64, f64)>) -> Option<f64> {
        pairs.clear();
        for &(u, v, r) in window {
            if let Some(p) = PlaneHomography::apply(h, u, v) {
                if let Some(s) = crate::image::bilinear(src.intensity, p.x, p.y) {
                    pairs.push((r, s));
                }
            }
        }
        if 2 * pairs.len() < window.len() {
            return None;
        }
        let n = pairs.len() as f64;
        let (mr, ms) = pairs.iter().fold((0.0, 0.0), |(a, b), (r, s)| (a + r, b + s));
        let (mr, ms) = (mr / n, ms / n);
        let (mut cov, mut vr, mut vs) = (0.0, 0.0, 0.0);
        for (r, s) in pairs.iter() {
            let (a, b) = (r - mr, s - ms);
            cov += a * b;
            vr += a * a;
            vs += b * b;
        }
        let (cov, vr, vs) = (cov / n, vr / n, vs / n);
        Some((cov / (vr * vs).sqrt().max(NCC_EPS)).clamp(-1.0, 1.0))
    }

    /// Mean `1 − NCC` over usable sources for the window centered at
    /// `(x, y)` on the fronto-parallel plane at `depth`.
    pub fn cost(&self, x: usize, y: usize, depth: f64) -> PixelCost {
        let (window, var) = self.ref_window(x, y);
        let mut pairs = Vec::with_capacity(window.len());
        self.cost_with(&window, var, depth, &mut pairs)
    }

    /// Costs of several depths at one pixel, sharing the reference window.
    pub fn costs(&self, x: usize, y: usize, depths: &[f64]) -> Vec<PixelCost> {
        let (window, var) = self.ref_window(x, y);
        let mut pairs = Vec::with_capacity(window.len());
        depths.iter().map(|d| self.cost_with(&window, var, *d, &mut pairs)).collect()
    }

    fn cost_with(&self, window: &[(f64, f64, f64)], ref_var: f64, depth: f64, pairs: &mut Vec<(f64, f64)>) -> PixelCost {
        let (mut sum, mut used) = (0.0, 0usize);
        for src in &self.sources {
            let h = src.homography.at_depth(depth);
            if let Some(ncc) = self.ncc(src, &h, window, pairs) {
                sum += 1.0 - ncc;
                used += 1;
            }
        }
        if used == 0 {
            return PixelCost { cost: WORST_COST, valid: false };
        }
        if ref_var < NCC_EPS {
            return PixelCost { cost: WORST_COST, valid: true };
        }
        PixelCost {
            cost: sum / used as f64,
            valid: true,
        }
    }

    /// Best of `candidates` at `(x, y)`. Valid candidates beat invalid ones;
    /// among equals the earliest wins.
    pub fn select(&self, x: usize, y: usize, candidates: &[f64]) -> Option<(f64, PixelCost)> {
        let (window, var) = self.ref_window(x, y);
        let mut pairs = Vec::with_capacity(window.len());
        let mut best: Option<(f64, PixelCost)> = None;
        for &d in candidates {
            let c = self.cost_with(&window, var, d, &mut pairs);
            let better = match &best {
                None => true,
                Some((_, b)) => (c.valid && !b.valid) || (c.valid == b.valid && c.cost < b.cost),
            };
            if better {
                best = Some((d, c));
            }
        }
        best
    }
}

/// Chooses the lowest-cost candidate at every pixel. Pixels without
/// candidates, and pixels whose best window falls mostly outside every
/// source, are invalid.
pub fn evaluate(
    reference: &CalibratedView,
    sources: &[CalibratedView],
    candidates: &Candidates,
    config: &PatchMatchConfig,
) -> Result<Evaluation, PatchMatchError> {
    if sources.is_empty() {
        return Err(PatchMatchError::NoSources);
    }
    let (w, h) = (reference.width(), reference.height());
    if candidates.lists.dims() != (w, h) {
        return Err(PatchMatchError::DimensionMismatch("candidate grid differs from reference view".into()));
    }
    let matcher = MatchCost::new(reference, sources, config.window);
    let range = reference.range();
    let picked = Grid::par_from_fn(w, h, |x, y| matcher.select(x, y, candidates.at(x, y)));
    let depth = picked.map(|p| p.map_or(range.min, |(d, _)| d));
    let valid = picked.map(|p| p.is_some_and(|(_, c)| c.valid));
    let cost = picked.map(|p| p.map_or(WORST_COST, |(_, c)| c.cost));
    Ok(Evaluation {
        depth: DepthMap::new(depth, valid, range),
        cost,
    })
}

/// Per-pixel best cost after one half-round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundSnapshot {
    pub level: usize,
    pub round: usize,
    pub cost: Grid<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchMatchOutput {
    /// Depth per pyramid level; index 0 is the finest (half input resolution).
    pub levels: Vec<DepthMap>,
    /// Best cost of the finest level.
    pub cost: Grid<f64>,
    /// Filled only when history recording was requested.
    pub history: Vec<RoundSnapshot>,
}

impl PatchMatchOutput {
    pub fn finest(&self) -> &DepthMap {
        &self.levels[0]
    }
}

fn check_inputs(reference: &CalibratedView, sources: &[CalibratedView], config: &PatchMatchConfig) -> Result<(), PatchMatchError> {
    config.validate()?;
    if sources.is_empty() {
        return Err(PatchMatchError::NoSources);
    }
    let (w, h) = (reference.width(), reference.height());
    let f = 1usize << config.levels;
    if w < f || h < f {
        return Err(PatchMatchError::ImageTooSmall { width: w, height: h, levels: config.levels });
    }
    if w % f != 0 || h % f != 0 {
        return Err(PatchMatchError::DimensionMismatch(format!("{w}x{h} is not divisible by 2^{}", config.levels)));
    }
    Ok(())
}

fn pyramid(view: &CalibratedView, levels: usize) -> Vec<CalibratedView> {
    let mut out = Vec::with_capacity(levels);
    let mut v = view.downsampled();
    for _ in 0..levels {
        let next = v.downsampled();
        out.push(v);
        v = next;
    }
    out
}

/// One half-round: candidates for pixels of `parity`, re-selected in place.
fn half_round(matcher: &MatchCost<'_>, depth: &mut DepthMap, cost: &mut Grid<f64>, candidates: &Candidates, parity: Parity) {
    let (w, h) = depth.dims();
    let picked = Grid::par_from_fn(w, h, |x, y| {
        if Parity::of(x, y) != parity {
            None
        } else {
            matcher.select(x, y, candidates.at(x, y))
        }
    });
    for y in 0..h {
        for x in 0..w {
            if let Some((d, c)) = picked.get(x, y) {
                depth.depth.set(x, y, *d);
                depth.valid.set(x, y, c.valid);
                cost.set(x, y, c.cost);
            }
        }
    }
}

/// Runs the full coarse-to-fine schedule, optionally recording per-round costs.
pub fn run_pyramid(
    reference: &CalibratedView,
    sources: &[CalibratedView],
    config: &PatchMatchConfig,
    record_history: bool,
) -> Result<PatchMatchOutput, PatchMatchError> {
    check_inputs(reference, sources, config)?;
    let ref_levels = pyramid(reference, config.levels);
    let src_levels: Vec<Vec<CalibratedView>> = sources.iter().map(|s| pyramid(s, config.levels)).collect();
    let range = reference.range();

    let mut results: Vec<DepthMap> = Vec::with_capacity(config.levels);
    let mut history = Vec::new();
    let mut cost = Grid::filled(0, 0, WORST_COST);
    for level in (0..config.levels).rev() {
        let r = &ref_levels[level];
        let srcs: Vec<CalibratedView> = src_levels.iter().map(|s| s[level].clone()).collect();
        let matcher = MatchCost::new(r, &srcs, config.window);
        let (w, h) = (r.width(), r.height());
        let mut depth = match results.last() {
            None => random_init(w, h, range, level, config),
            Some(coarse) => upsample_init(coarse, w, h)?,
        };
        let init = Grid::par_from_fn(w, h, |x, y| matcher.cost(x, y, *depth.depth.get(x, y)));
        depth.valid = init.map(|c| c.valid);
        cost = init.map(|c| c.cost);
        if record_history {
            history.push(RoundSnapshot { level, round: 0, cost: cost.clone() });
        }
        for round in 0..config.iterations_per_level {
            for parity in [Parity::Red, Parity::Black] {
                let mut cands = propagate(&depth, parity);
                cands.extend(&random_perturbation(&depth, level, round, Some(parity), config));
                half_round(&matcher, &mut depth, &mut cost, &cands, parity);
            }
            if record_history {
                history.push(RoundSnapshot { level, round: round + 1, cost: cost.clone() });
            }
        }
        results.push(depth);
    }
    results.reverse();
    Ok(PatchMatchOutput { levels: results, cost, history })
}

/// Depth at half the input resolution.
pub fn run(reference: &CalibratedView, sources: &[CalibratedView], config: &PatchMatchConfig) -> Result<DepthMap, PatchMatchError> {
    Ok(run_pyramid(reference, sources, config, false)?.levels.swap_remove(0))
}
