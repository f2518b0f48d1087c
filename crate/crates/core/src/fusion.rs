//! Photo-geometric filtering of per-view depth maps and fusion into one
//! colored point cloud.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{project, unproject, CalibratedView};
use crate::grid::{DepthMap, Grid};
use crate::patchmatch::MatchCost;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("fusion needs at least two views, got {0}")]
    TooFewViews(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionConfig {
    pub max_reproj_px: f64,
    pub max_rel_depth: f64,
    pub min_consistent_views: usize,
    pub use_photometric: bool,
    pub min_ncc: f64,
    pub ncc_window: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            max_reproj_px: 1.0,
            max_rel_depth: 0.01,
            min_consistent_views: 3,
            use_photometric: true,
            min_ncc: 0.3,
            ncc_window: 5,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.max_reproj_px > 0.0 && self.max_rel_depth > 0.0) {
            return Err(FusionError::InvalidConfig("tolerances must be positive".into()));
        }
        if self.min_consistent_views < 1 {
            return Err(FusionError::InvalidConfig("min_consistent_views must be ≥ 1".into()));
        }
        if !(-1.0..=1.0).contains(&self.min_ncc) {
            return Err(FusionError::InvalidConfig(format!("min_ncc {} outside [-1, 1]", self.min_ncc)));
        }
        if self.ncc_window < 3 || self.ncc_window.is_multiple_of(2) {
            return Err(FusionError::InvalidConfig(format!("ncc_window {} must be odd and ≥ 3", self.ncc_window)));
        }
        Ok(())
    }
}

/// Points with colors in `[0, 1]`, the view that produced each point, and
/// how many sources agreed with it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub colors: Vec<[f64; 3]>,
    pub view_ids: Vec<usize>,
    pub consistency: Vec<usize>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vector3<f64>>) -> Self {
        let n = points.len();
        Self {
            points,
            colors: vec![[0.0; 3]; n],
            view_ids: vec![0; n],
            consistency: vec![0; n],
        }
    }

    pub fn push(&mut self, point: Vector3<f64>, color: [f64; 3], view: usize, consistency: usize) {
        self.points.push(point);
        self.colors.push(color);
        self.view_ids.push(view);
        self.consistency.push(consistency);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn append(&mut self, other: PointCloud) {
        self.points.extend(other.points);
        self.colors.extend(other.colors);
        self.view_ids.extend(other.view_ids);
        self.consistency.extend(other.consistency);
    }
}

/// The view halved until it matches the depth map's resolution.
pub fn view_for_map(view: &CalibratedView, map: &DepthMap) -> Result<CalibratedView, FusionError> {
    let (w, h) = map.dims();
    view.at_resolution(w, h).map_err(|e| FusionError::DimensionMismatch(e.to_string()))
}

/// Forward-backward check of one pixel: returns the reference depth implied
/// by the source's estimate when the round trip lands within tolerance.
fn check_pixel(
    x: usize,
    y: usize,
    ref_depth: &DepthMap,
    reference: &CalibratedView,
    src_depth: &DepthMap,
    src: &CalibratedView,
    config: &FusionConfig,
) -> Option<f64> {
    let d = ref_depth.at(x, y)?;
    let p = Vector2::new(x as f64, y as f64);
    let world = unproject(&p, d, reference).ok()?;
    let (q, _) = project(&world, src).ok()?;
    let (qx, qy) = (q.x.round(), q.y.round());
    if qx < 0.0 || qy < 0.0 || qx >= src_depth.width() as f64 || qy >= src_depth.height() as f64 {
        return None;
    }
    let d_s = src_depth.at(qx as usize, qy as usize)?;
    let back = unproject(&Vector2::new(qx, qy), d_s, src).ok()?;
    let (p2, d2) = project(&back, reference).ok()?;
    ((p2 - p).norm() <= config.max_reproj_px && (d2 - d).abs() / d <= config.max_rel_depth).then_some(d2)
}

fn reprojected_depths(
    ref_depth: &DepthMap,
    reference: &CalibratedView,
    src_depth: &DepthMap,
    src: &CalibratedView,
    config: &FusionConfig,
) -> Grid<Option<f64>> {
    let (w, h) = ref_depth.dims();
    Grid::par_from_fn(w, h, |x, y| check_pixel(x, y, ref_depth, reference, src_depth, src, config))
}

/// Per-pixel geometric agreement between a reference depth map and one source.
pub fn geometric_consistency(
    ref_depth: &DepthMap,
    reference: &CalibratedView,
    src_depth: &DepthMap,
    src: &CalibratedView,
    config: &FusionConfig,
) -> Result<Grid<bool>, FusionError> {
    let r = view_for_map(reference, ref_depth)?;
    let s = view_for_map(src, src_depth)?;
    Ok(reprojected_depths(ref_depth, &r, src_depth, &s, config).map(|d| d.is_some()))
}

/// Geometric agreement further gated by window NCC at the reference depth.
fn pair_support(
    ref_depth: &DepthMap,
    reference: &CalibratedView,
    src_depth: &DepthMap,
    src: &CalibratedView,
    config: &FusionConfig,
) -> Grid<Option<f64>> {
    let geo = reprojected_depths(ref_depth, reference, src_depth, src, config);
    if !config.use_photometric {
        return geo;
    }
    let sources = std::slice::from_ref(src);
    let matcher = MatchCost::new(reference, sources, config.ncc_window);
    let (w, h) = geo.dims();
    Grid::par_from_fn(w, h, |x, y| {
        let d2 = (*geo.get(x, y))?;
        let c = matcher.cost(x, y, *ref_depth.depth.get(x, y));
        (c.valid && 1.0 - c.cost >= config.min_ncc).then_some(d2)
    })
}

/// Fuses `(view, depth)` pairs. A pixel survives when at least
/// `min_consistent_views` other views agree with it; its point is the pixel
/// ray at the mean of its own depth and the agreeing reprojected depths.
/// Order is view-major, then row-major.
pub fn fuse(views: &[(CalibratedView, DepthMap)], config: &FusionConfig) -> Result<PointCloud, FusionError> {
    config.validate()?;
    if views.len() < 2 {
        return Err(FusionError::TooFewViews(views.len()));
    }
    let scaled = views
        .iter()
        .map(|(v, m)| view_for_map(v, m))
        .collect::<Result<Vec<_>, _>>()?;
    let per_view: Vec<PointCloud> = (0..views.len())
        .into_par_iter()
        .map(|i| {
            let (ref_depth, reference) = (&views[i].1, &scaled[i]);
            let supports: Vec<Grid<Option<f64>>> = (0..views.len())
                .filter(|j| *j != i)
                .map(|j| pair_support(ref_depth, reference, &views[j].1, &scaled[j], config))
                .collect();
            let mut cloud = PointCloud::default();
            for y in 0..ref_depth.height() {
                for x in 0..ref_depth.width() {
                    let Some(d) = ref_depth.at(x, y) else { continue };
                    let agreeing: Vec<f64> = supports.iter().filter_map(|s| *s.get(x, y)).collect();
                    if agreeing.len() < config.min_consistent_views {
                        continue;
                    }
                    let mean = (d + agreeing.iter().sum::<f64>()) / (agreeing.len() + 1) as f64;
                    if let Ok(p) = unproject(&Vector2::new(x as f64, y as f64), mean, reference) {
                        cloud.push(p, reference.image.rgb(x, y), i, agreeing.len());
                    }
                }
            }
            cloud
        })
        .collect();
    let mut out = PointCloud::default();
    for c in per_view {
        out.append(c);
    }
    Ok(out)
}
