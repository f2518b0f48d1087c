//! Point-cloud accuracy, completeness and threshold scores, plus depth-map
//! error statistics split into boundary and smooth regions.

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::discontinuity::laplacian_masked;
use crate::fusion::PointCloud;
use crate::grid::{DepthMap, GroundTruth, Grid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("no point has a neighbor within the outlier cap {0}")]
    NoMatchesWithinCap(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no pixel is valid in both maps")]
    NoValidPixels,
}

/// Conventional distance cap for outlier exclusion, in scene units.
pub const DEFAULT_OUTLIER_CAP: f64 = 20.0;
/// Boundary pixels have `|Δ gt| >` this value.
pub const DEFAULT_BOUNDARY_LAPLACIAN: f64 = 5.0;
/// Depth error above which a pixel counts as wrong.
pub const DEFAULT_ERROR_THRESHOLD: f64 = 8.0;

#[inline]
pub fn distance(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Uniform voxel hash answering "nearest point within `cell`" queries.
pub struct VoxelIndex<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl<'a> VoxelIndex<'a> {
    pub fn new(points: &'a [Vector3<f64>], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { points, cell, buckets }
    }

    #[inline]
    fn key(p: &Vector3<f64>, cell: f64) -> (i64, i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64)
    }

    /// Distance to the nearest indexed point if it is at most `cell` away.
    pub fn nearest_within_cell(&self, q: &Vector3<f64>) -> Option<f64> {
        let (kx, ky, kz) = Self::key(q, self.cell);
        let mut best = f64::INFINITY;
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(ids) = self.buckets.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &i in ids {
                            best = best.min(distance(q, &self.points[i]));
                        }
                    }
                }
            }
        }
        (best <= self.cell).then_some(best)
    }
}

/// Nearest-neighbor distance from each query to `target`, or `None` when
/// farther than `radius`.
pub fn capped_nearest(queries: &[Vector3<f64>], target: &[Vector3<f64>], radius: f64) -> Vec<Option<f64>> {
    let index = VoxelIndex::new(target, radius);
    queries.par_iter().map(|q| index.nearest_within_cell(q)).collect()
}

fn check_clouds(a: &PointCloud, b: &PointCloud) -> Result<(), EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptyCloud);
    }
    Ok(())
}

fn check_threshold(t: f64) -> Result<(), EvalError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(EvalError::NonPositiveThreshold(t));
    }
    Ok(())
}

/// Mean distance from reconstruction points to their nearest reference
/// point; points farther than `outlier_cap` are left out of the mean.
pub fn cloud_accuracy(recon: &PointCloud, reference: &PointCloud, outlier_cap: f64) -> Result<f64, EvalError> {
    check_clouds(recon, reference)?;
    check_threshold(outlier_cap)?;
    let d = capped_nearest(&recon.points, &reference.points, outlier_cap);
    let (sum, n) = d.iter().flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        return Err(EvalError::NoMatchesWithinCap(outlier_cap));
    }
    Ok(sum / n as f64)
}

/// Mean distance from reference points to the reconstruction.
pub fn cloud_completeness(recon: &PointCloud, reference: &PointCloud, outlier_cap: f64) -> Result<f64, EvalError> {
    cloud_accuracy(reference, recon, outlier_cap)
}

fn pct_within(queries: &[Vector3<f64>], target: &[Vector3<f64>], threshold: f64) -> f64 {
    let hits = capped_nearest(queries, target, threshold).iter().filter(|d| d.is_some()).count();
    100.0 * hits as f64 / queries.len() as f64
}

#[inline]
pub fn fscore(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// `(precision %, recall %, F-score)` at a distance threshold (inclusive).
pub fn cloud_pct_metrics(recon: &PointCloud, reference: &PointCloud, threshold: f64) -> Result<(f64, f64, f64), EvalError> {
    check_clouds(recon, reference)?;
    check_threshold(threshold)?;
    let p = pct_within(&recon.points, &reference.points, threshold);
    let r = pct_within(&reference.points, &recon.points, threshold);
    Ok((p, r, fscore(p, r)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CloudMetrics {
    pub accuracy: f64,
    pub completeness: f64,
    pub overall: f64,
    pub precision_pct: f64,
    pub recall_pct: f64,
    pub fscore: f64,
}

pub fn cloud_metrics(recon: &PointCloud, reference: &PointCloud, outlier_cap: f64, threshold: f64) -> Result<CloudMetrics, EvalError> {
    let accuracy = cloud_accuracy(recon, reference, outlier_cap)?;
    let completeness = cloud_completeness(recon, reference, outlier_cap)?;
    let (precision_pct, recall_pct, fscore) = cloud_pct_metrics(recon, reference, threshold)?;
    Ok(CloudMetrics {
        accuracy,
        completeness,
        overall: (accuracy + completeness) / 2.0,
        precision_pct,
        recall_pct,
        fscore,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DepthMetrics {
    pub mae: f64,
    pub error_ratio: f64,
    pub boundary_mae: f64,
    pub smooth_mae: f64,
    pub valid_pixels: usize,
    pub boundary_pixels: usize,
    pub smooth_pixels: usize,
}

/// Pixels where `|Δ gt| > threshold`, with the Laplacian masked by GT validity.
pub fn boundary_region(gt: &GroundTruth, threshold: f64) -> Grid<bool> {
    laplacian_masked(&gt.depth, &gt.valid).map(|l| l.abs() > threshold)
}

/// Error statistics over pixels valid in both `est` and `gt`. An empty
/// region reports a mean of 0.
pub fn depth_metrics(est: &DepthMap, gt: &GroundTruth, error_threshold: f64, boundary_lap_threshold: f64) -> Result<DepthMetrics, EvalError> {
    if est.dims() != gt.dims() {
        return Err(EvalError::DimensionMismatch(format!("estimate {:?} vs ground truth {:?}", est.dims(), gt.dims())));
    }
    check_threshold(error_threshold)?;
    check_threshold(boundary_lap_threshold)?;
    let boundary = boundary_region(gt, boundary_lap_threshold);
    let (w, h) = est.dims();
    let (mut sb, mut nb, mut ss, mut ns, mut wrong) = (0.0, 0usize, 0.0, 0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            if !*gt.valid.get(x, y) {
                continue;
            }
            let Some(d) = est.at(x, y) else { continue };
            let e = (d - gt.depth.get(x, y)).abs();
            if e > error_threshold {
                wrong += 1;
            }
            if *boundary.get(x, y) {
                sb += e;
                nb += 1;
            } else {
                ss += e;
                ns += 1;
            }
        }
    }
    let n = nb + ns;
    if n == 0 {
        return Err(EvalError::NoValidPixels);
    }
    let mean = |s: f64, k: usize| if k == 0 { 0.0 } else { s / k as f64 };
    Ok(DepthMetrics {
        mae: (sb + ss) / n as f64,
        error_ratio: wrong as f64 / n as f64,
        boundary_mae: mean(sb, nb),
        smooth_mae: mean(ss, ns),
        valid_pixels: n,
        boundary_pixels: nb,
        smooth_pixels: ns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DepthRange;
    use rand::{Rng, SeedableRng};

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::from_points(points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect())
    }

    fn brute(q: &[Vector3<f64>], t: &[Vector3<f64>], cap: f64) -> Vec<Option<f64>> {
        q.iter()
            .map(|a| {
                let mut best = f64::INFINITY;
                for b in t {
                    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
                    best = best.min((dx * dx + dy * dy + dz * dz).sqrt());
                }
                (best <= cap).then_some(best)
            })
            .collect()
    }

    #[test]
    fn identical_and_translated_clouds() {
        let a = cloud(&[[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 5.0]]);
        assert_eq!(cloud_accuracy(&a, &a, 20.0).unwrap(), 0.0);
        let shifted = cloud(&[[0.5, 0.0, 0.0], [10.5, 0.0, 0.0], [0.5, 10.0, 5.0]]);
        assert_eq!(cloud_accuracy(&shifted, &a, 20.0).unwrap(), 0.5);
        assert_eq!(cloud_pct_metrics(&a, &a, 1.0).unwrap(), (100.0, 100.0, 100.0));
        let far = cloud(&[[1e3, 1e3, 1e3]]);
        assert_eq!(cloud_pct_metrics(&far, &a, 1.0).unwrap(), (0.0, 0.0, 0.0));
        assert!(matches!(cloud_accuracy(&far, &a, 20.0), Err(EvalError::NoMatchesWithinCap(_))));
        assert!(matches!(cloud_accuracy(&PointCloud::default(), &a, 20.0), Err(EvalError::EmptyCloud)));
    }

    #[test]
    fn completeness_cap_excludes_far_reference_point() {
        let recon = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let reference = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 50.0]]);
        assert_eq!(cloud_completeness(&recon, &reference, 20.0).unwrap(), 0.0);
        assert_eq!(cloud_completeness(&reference, &recon, 20.0).unwrap(), 0.0);
        assert_eq!(cloud_completeness(&reference, &reference, 20.0).unwrap(), 0.0);
    }

    #[test]
    fn half_precision_full_recall() {
        let reference = cloud(&[[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]]);
        let recon = cloud(&[[0.0, 0.0, 0.1], [5.0, 0.0, 0.1], [0.0, 9.0, 0.0], [5.0, 9.0, 0.0]]);
        let (p, r, f) = cloud_pct_metrics(&recon, &reference, 1.0).unwrap();
        assert_eq!((p, r), (50.0, 100.0));
        assert!((f - 2.0 * 50.0 * 100.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn voxel_search_matches_brute_force_bitwise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let n = rng.random_range(1..=50);
            let m = rng.random_range(1..=50);
            let mk = |rng: &mut rand_chacha::ChaCha8Rng, k: usize| -> Vec<Vector3<f64>> {
                (0..k).map(|_| Vector3::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0), rng.random_range(-10.0..10.0))).collect()
            };
            let (a, b) = (mk(&mut rng, n), mk(&mut rng, m));
            let cap = rng.random_range(1.0..30.0);
            let fast = capped_nearest(&a, &b, cap);
            let slow = brute(&a, &b, cap);
            assert_eq!(fast.iter().map(|d| d.map(f64::to_bits)).collect::<Vec<_>>(), slow.iter().map(|d| d.map(f64::to_bits)).collect::<Vec<_>>());
        }
    }

    #[test]
    fn accuracy_completeness_symmetry() {
        let a = cloud(&[[0.0, 0.0, 0.0], [3.0, 1.0, 0.0], [7.0, 2.0, 1.0]]);
        let b = cloud(&[[0.5, 0.0, 0.0], [3.0, 2.0, 0.0]]);
        assert_eq!(cloud_accuracy(&a, &b, 20.0).unwrap().to_bits(), cloud_completeness(&b, &a, 20.0).unwrap().to_bits());
    }

    fn step_gt() -> GroundTruth {
        GroundTruth::from_depth(Grid::from_fn(10, 6, |x, _| if x < 5 { 600.0 } else { 800.0 }))
    }

    #[test]
    fn depth_metric_examples() {
        let gt = step_gt();
        let r = DepthRange::new(500.0, 900.0);
        let exact = depth_metrics(&gt.as_depth_map(r), &gt, 8.0, 5.0).unwrap();
        assert_eq!((exact.mae, exact.error_ratio, exact.boundary_mae, exact.smooth_mae), (0.0, 0.0, 0.0, 0.0));
        let mut off = gt.as_depth_map(r);
        off.depth = off.depth.map(|d| d + 10.0);
        let m = depth_metrics(&off, &gt, 8.0, 5.0).unwrap();
        assert_eq!((m.mae, m.error_ratio), (10.0, 1.0));
        assert!(matches!(depth_metrics(&DepthMap::constant(3, 3, 1.0, r), &gt, 8.0, 5.0), Err(EvalError::DimensionMismatch(_))));
    }

    #[test]
    fn region_split_matches_scalar_oracle() {
        let gt = step_gt();
        let r = DepthRange::new(500.0, 900.0);
        let mut est = gt.as_depth_map(r);
        // Step columns hold boundary errors of 12, everything else errors of 3 or 0.
        for y in 0..6 {
            for x in 0..10 {
                let e = if (x == 4 || x == 5) && (1..5).contains(&y) { 12.0 } else if (x + y) % 3 == 0 { 3.0 } else { 0.0 };
                est.depth.set(x, y, gt.depth.get(x, y) + e);
            }
        }
        est.valid.set(0, 0, false);
        let m = depth_metrics(&est, &gt, 8.0, 5.0).unwrap();
        let (mut sb, mut nb, mut ss, mut ns) = (0.0, 0, 0.0, 0);
        for y in 0..6 {
            for x in 0..10 {
                if x == 0 && y == 0 {
                    continue;
                }
                let e = (est.depth.get(x, y) - gt.depth.get(x, y)).abs();
                if (x == 4 || x == 5) && (1..5).contains(&y) {
                    sb += e;
                    nb += 1;
                } else {
                    ss += e;
                    ns += 1;
                }
            }
        }
        assert_eq!((m.boundary_pixels, m.smooth_pixels), (nb, ns));
        assert_eq!(m.boundary_mae, sb / nb as f64);
        assert_eq!(m.smooth_mae, ss / ns as f64);
        assert_eq!(m.error_ratio, 8.0 / 59.0);
        let recombined = (m.boundary_mae * nb as f64 + m.smooth_mae * ns as f64) / (nb + ns) as f64;
        assert!((recombined - m.mae).abs() < 1e-12);
    }

    #[test]
    fn boundary_uses_strict_threshold_on_absolute_laplacian() {
        let gt = GroundTruth::from_depth(Grid::from_fn(5, 3, |x, _| if x < 2 { 10.0 } else { 15.0 }));
        let mask = boundary_region(&gt, 5.0);
        assert!(!mask.iter().any(|b| *b));
        let mask = boundary_region(&gt, 4.999);
        assert!(*mask.get(1, 1) && *mask.get(2, 1));
    }
}
