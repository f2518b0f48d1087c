//! Piecewise-planar synthetic scenes with exact ground truth.
//!
//! A scene is a background plane `z = background` plus axis-aligned
//! rectangles on planes `z = depth`, all in world coordinates, covered by a
//! procedural texture. Every pixel center is ray-cast analytically and the
//! nearest surface wins, so depth is exact and edges are not anti-aliased.
//!
//! Spec files are line-oriented:
//!
//! ```text
//! size 64 64
//! focal 256
//! range 500 900
//! background 800
//! rect -40 -60 0 60 600
//! texture 7 12.5
//! views lateral 3 30
//! ```
//!
//! `views ring <n> <radius> [<look_at_z>]` places cameras on a circle in the
//! `z = 0` plane, either looking straight down `+z` or converging on
//! `(0, 0, look_at_z)`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::fusion::PointCloud;
use crate::geometry::{unproject, CalibratedView, GeometryError, Intrinsics, Pose};
use crate::grid::{BoundaryMask, Grid, GroundTruth};
use crate::image::Image;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Two textured planes seen by three laterally displaced cameras.
pub const TWO_PLANE_SCENE: &str = include_str!("../scenes/two_plane.txt");
/// A foreground slab across part of the view, seen by three cameras.
pub const STEP_SCENE: &str = include_str!("../scenes/step.txt");
/// One textured plane seen by five cameras.
pub const PLANE_SCENE: &str = include_str!("../scenes/plane.txt");

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub depth: f64,
}

impl Rect {
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rig {
    Lateral { count: usize, baseline: f64 },
    Ring { count: usize, radius: f64, look_at: Option<f64> },
}

impl Rig {
    pub fn count(&self) -> usize {
        match *self {
            Rig::Lateral { count, .. } | Rig::Ring { count, .. } => count,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub depth_min: f64,
    pub depth_max: f64,
    pub background: f64,
    pub rects: Vec<Rect>,
    pub texture_seed: u64,
    /// Texture feature size in world units.
    pub texture_cell: f64,
    pub rig: Rig,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.width < 1 || self.height < 1 {
            return bad("image size must be positive".into());
        }
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return bad(format!("focal length {} must be positive", self.focal));
        }
        if !(self.depth_min > 0.0 && self.depth_min < self.depth_max && self.depth_max.is_finite()) {
            return bad(format!("bad depth range [{}, {}]", self.depth_min, self.depth_max));
        }
        let in_range = |d: f64| (self.depth_min..=self.depth_max).contains(&d);
        if !in_range(self.background) {
            return bad(format!("background {} outside the depth range", self.background));
        }
        for r in &self.rects {
            if !(r.x0 < r.x1 && r.y0 < r.y1) {
                return bad(format!("empty rectangle {r:?}"));
            }
            if !(r.depth < self.background) {
                return bad(format!("rectangle depth {} must be in front of the background", r.depth));
            }
            if !in_range(r.depth) {
                return bad(format!("rectangle depth {} outside the depth range", r.depth));
            }
        }
        if !(self.texture_cell > 0.0) {
            return bad("texture cell must be positive".into());
        }
        match self.rig {
            Rig::Lateral { count, baseline } => {
                if count < 2 || !(baseline > 0.0) {
                    return bad("lateral rig needs ≥ 2 views and a positive baseline".into());
                }
            }
            Rig::Ring { count, radius, look_at } => {
                if count < 2 || !(radius > 0.0) {
                    return bad("ring rig needs ≥ 2 views and a positive radius".into());
                }
                if look_at.is_some_and(|z| !(z > 0.0)) {
                    return bad("ring look-at depth must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut size = None;
        let mut focal = None;
        let mut range = None;
        let mut background = None;
        let mut rects = Vec::new();
        let mut texture = (0u64, 10.0);
        let mut rig = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: &str| SynthError::Parse { line: i + 1, message: m.to_string() };
            let t: Vec<&str> = line.split_whitespace().collect();
            let num = |k: usize| -> Result<f64, SynthError> {
                t.get(k)
                    .ok_or_else(|| err("missing value"))?
                    .parse::<f64>()
                    .map_err(|_| err(&format!("bad number {:?}", t[k])))
            };
            let int = |k: usize| -> Result<usize, SynthError> {
                t.get(k)
                    .ok_or_else(|| err("missing value"))?
                    .parse::<usize>()
                    .map_err(|_| err(&format!("bad integer {:?}", t[k])))
            };
            let arity = |n: usize| if t.len() == n { Ok(()) } else { Err(err(&format!("{} expects {} values", t[0], n - 1))) };
            match t[0] {
                "size" => {
                    arity(3)?;
                    size = Some((int(1)?, int(2)?));
                }
                "focal" => {
                    arity(2)?;
                    focal = Some(num(1)?);
                }
                "range" => {
                    arity(3)?;
                    range = Some((num(1)?, num(2)?));
                }
                "background" => {
                    arity(2)?;
                    background = Some(num(1)?);
                }
                "rect" => {
                    arity(6)?;
                    rects.push(Rect {
                        x0: num(1)?,
                        y0: num(2)?,
                        x1: num(3)?,
                        y1: num(4)?,
                        depth: num(5)?,
                    });
                }
                "texture" => {
                    arity(3)?;
                    let seed = t[1].parse::<u64>().map_err(|_| err("bad texture seed"))?;
                    texture = (seed, num(2)?);
                }
                "views" => match t.get(1).copied() {
                    Some("lateral") => {
                        arity(4)?;
                        rig = Some(Rig::Lateral { count: int(2)?, baseline: num(3)? });
                    }
                    Some("ring") => {
                        if t.len() != 4 && t.len() != 5 {
                            return Err(err("views ring expects <n> <radius> [<look_at_z>]"));
                        }
                        let look_at = if t.len() == 5 { Some(num(4)?) } else { None };
                        rig = Some(Rig::Ring { count: int(2)?, radius: num(3)?, look_at });
                    }
                    _ => return Err(err("views must be lateral or ring")),
                },
                other => return Err(err(&format!("unknown directive {other:?}"))),
            }
        }
        let need = |what: &str| SynthError::InvalidSpec(format!("missing {what}"));
        let (width, height) = size.ok_or_else(|| need("size"))?;
        let (depth_min, depth_max) = range.ok_or_else(|| need("range"))?;
        let spec = SceneSpec {
            width,
            height,
            focal: focal.ok_or_else(|| need("focal"))?,
            depth_min,
            depth_max,
            background: background.ok_or_else(|| need("background"))?,
            rects,
            texture_seed: texture.0,
            texture_cell: texture.1,
            rig: rig.ok_or_else(|| need("views"))?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "size {} {}\nfocal {}\nrange {} {}\nbackground {}\n",
            self.width, self.height, self.focal, self.depth_min, self.depth_max, self.background
        );
        for r in &self.rects {
            s.push_str(&format!("rect {} {} {} {} {}\n", r.x0, r.y0, r.x1, r.y1, r.depth));
        }
        s.push_str(&format!("texture {} {}\n", self.texture_seed, self.texture_cell));
        match self.rig {
            Rig::Lateral { count, baseline } => s.push_str(&format!("views lateral {count} {baseline}\n")),
            Rig::Ring { count, radius, look_at: None } => s.push_str(&format!("views ring {count} {radius}\n")),
            Rig::Ring { count, radius, look_at: Some(z) } => s.push_str(&format!("views ring {count} {radius} {z}\n")),
        }
        s
    }

    pub fn intrinsics(&self) -> Result<Intrinsics, GeometryError> {
        Intrinsics::new(
            self.focal,
            self.focal,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
            self.width,
            self.height,
        )
    }

    pub fn poses(&self) -> Result<Vec<Pose>, GeometryError> {
        match self.rig {
            Rig::Lateral { count, baseline } => (0..count)
                .map(|i| {
                    let cx = (i as f64 - (count as f64 - 1.0) / 2.0) * baseline;
                    Pose::new(Matrix3::identity(), Vector3::new(-cx, 0.0, 0.0))
                })
                .collect(),
            Rig::Ring { count, radius, look_at } => (0..count)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / count as f64;
                    let c = Vector3::new(radius * a.cos(), radius * a.sin(), 0.0);
                    match look_at {
                        None => Pose::new(Matrix3::identity(), -c),
                        Some(z) => Pose::look_at(c, Vector3::new(0.0, 0.0, z), Vector3::new(0.0, -1.0, 0.0)),
                    }
                })
                .collect(),
        }
    }

    /// Surface hit by the ray from `center` along world direction `dir`:
    /// `(surface id, ray parameter)`, where id 0 is the background and
    /// `k ≥ 1` is rectangle `k − 1`.
    pub fn cast(&self, center: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(usize, f64)> {
        if !(dir.z > 0.0) {
            return None;
        }
        let s_bg = (self.background - center.z) / dir.z;
        let mut best = (s_bg > 0.0).then_some((0usize, s_bg));
        for (k, r) in self.rects.iter().enumerate() {
            let s = (r.depth - center.z) / dir.z;
            if !(s > 0.0) || best.is_some_and(|(_, b)| s >= b) {
                continue;
            }
            let p = center + dir * s;
            if r.contains(p.x, p.y) {
                best = Some((k + 1, s));
            }
        }
        best
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, surface: usize, channel: usize, ix: i64, iy: i64) -> f64 {
    let mut h = splitmix64(seed);
    for v in [surface as u64, channel as u64, ix as u64, iy as u64] {
        h = splitmix64(h ^ v);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, surface: usize, channel: usize, u: f64, v: f64) -> f64 {
    let (fu, fv) = (u.floor(), v.floor());
    let (iu, iv) = (fu as i64, fv as i64);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (su, sv) = (smooth(u - fu), smooth(v - fv));
    let l = |dx: i64, dy: i64| lattice(seed, surface, channel, iu + dx, iv + dy);
    let top = l(0, 0) * (1.0 - su) + l(1, 0) * su;
    let bottom = l(0, 1) * (1.0 - su) + l(1, 1) * su;
    top * (1.0 - sv) + bottom * sv
}

/// Color of surface `surface` at world plane coordinates `(x, y)`.
pub fn texture(seed: u64, cell: f64, surface: usize, x: f64, y: f64) -> [f64; 3] {
    let (u, v) = (x / cell, y / cell);
    let checker = 0.5 + 0.5 * (PI * u).sin() * (PI * v).sin();
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let noise = 0.5 * value_noise(seed, surface, c, u, v)
            + 0.3 * value_noise(seed, surface, c + 3, u / 2.0, v / 2.0)
            + 0.2 * value_noise(seed, surface, c + 6, u / 4.0, v / 4.0);
        let tint = 0.75 + 0.25 * lattice(seed, surface, 9 + c, 0, 0);
        *o = (0.1 + 0.8 * (0.6 * noise + 0.4 * checker) * tint).clamp(0.0, 1.0);
    }
    out
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub views: Vec<CalibratedView>,
    pub gt_depths: Vec<GroundTruth>,
    /// Pixels whose visible surface differs from a 4-neighbor's.
    pub gt_boundaries: Vec<BoundaryMask>,
    pub surface_ids: Vec<Grid<usize>>,
    /// Every view's ground-truth pixels unprojected at their exact depth.
    pub gt_cloud: PointCloud,
}

fn boundary_from_ids(ids: &Grid<usize>) -> BoundaryMask {
    let (w, h) = ids.dims();
    Grid::from_fn(w, h, |x, y| {
        let id = *ids.get(x, y);
        (x > 0 && *ids.get(x - 1, y) != id)
            || (x + 1 < w && *ids.get(x + 1, y) != id)
            || (y > 0 && *ids.get(x, y - 1) != id)
            || (y + 1 < h && *ids.get(x, y + 1) != id)
    })
}

pub fn render_scene(spec: &SceneSpec) -> Result<SyntheticScene, SynthError> {
    spec.validate()?;
    let k = spec.intrinsics()?;
    let k_inv = k.inverse_matrix();
    let (w, h) = (spec.width, spec.height);
    let mut scene = SyntheticScene {
        spec: spec.clone(),
        views: Vec::new(),
        gt_depths: Vec::new(),
        gt_boundaries: Vec::new(),
        surface_ids: Vec::new(),
        gt_cloud: PointCloud::default(),
    };
    for (vi, pose) in spec.poses()?.into_iter().enumerate() {
        let center = pose.center();
        let hits = Grid::par_from_fn(w, h, |x, y| {
            let ray_cam = k_inv * Vector3::new(x as f64, y as f64, 1.0);
            let dir = pose.rotation().transpose() * ray_cam;
            spec.cast(&center, &dir).map(|(id, s)| {
                let p = center + dir * s;
                // Camera depth is s because the camera-frame ray has unit z.
                (id, s, texture(spec.texture_seed, spec.texture_cell, id, p.x, p.y))
            })
        });
        let ids = hits.map(|h| h.map_or(usize::MAX, |(id, _, _)| id));
        let depth = hits.map(|h| h.map_or(0.0, |(_, s, _)| s));
        let image = Image::from_rgb_fn(w, h, |x, y| hits.get(x, y).map_or([0.0; 3], |(_, _, c)| c));
        let gt = GroundTruth::from_depth(depth);
        let view = CalibratedView::new(image, k, pose, spec.depth_min, spec.depth_max)?;
        for y in 0..h {
            for x in 0..w {
                if *gt.valid.get(x, y) {
                    let p = unproject(&Vector2::new(x as f64, y as f64), *gt.depth.get(x, y), &view)?;
                    scene.gt_cloud.push(p, view.image.rgb(x, y), vi, 0);
                }
            }
        }
        scene.gt_boundaries.push(boundary_from_ids(&ids));
        scene.surface_ids.push(ids);
        scene.gt_depths.push(gt);
        scene.views.push(view);
    }
    Ok(scene)
}

/// Smallest standard deviation of any fully interior `window × window`
/// patch of `grid`.
pub fn min_window_std(grid: &Grid<f64>, window: usize) -> f64 {
    let (w, h) = grid.dims();
    let mut best = f64::INFINITY;
    for y0 in 0..=h.saturating_sub(window) {
        for x0 in 0..=w.saturating_sub(window) {
            let vals: Vec<f64> = (0..window * window).map(|i| *grid.get(x0 + i % window, y0 + i / window)).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
            best = best.min(var.sqrt());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn background_only(rig: Rig) -> SceneSpec {
        SceneSpec {
            width: 24,
            height: 16,
            focal: 30.0,
            depth_min: 5.0,
            depth_max: 20.0,
            background: 12.0,
            rects: vec![],
            texture_seed: 1,
            texture_cell: 0.5,
            rig,
        }
    }

    #[test]
    fn bundled_specs_parse_and_round_trip() {
        for text in [TWO_PLANE_SCENE, STEP_SCENE, PLANE_SCENE] {
            let s = SceneSpec::parse(text).unwrap();
            assert_eq!(SceneSpec::parse(&s.to_text()).unwrap(), s);
        }
    }

    #[test]
    fn invalid_specs() {
        let base = SceneSpec::parse(TWO_PLANE_SCENE).unwrap();
        let mut s = base.clone();
        s.rects[0].depth = s.background + 1.0;
        assert!(matches!(s.validate(), Err(SynthError::InvalidSpec(_))));
        let mut s = base.clone();
        s.rig = Rig::Lateral { count: 1, baseline: 1.0 };
        assert!(s.validate().is_err());
        let mut s = base;
        s.background = s.depth_max + 1.0;
        assert!(s.validate().is_err());
        assert!(matches!(SceneSpec::parse("size 4\n"), Err(SynthError::Parse { line: 1, .. })));
        assert!(matches!(SceneSpec::parse("bogus 1\n"), Err(SynthError::Parse { .. })));
        assert!(matches!(SceneSpec::parse("size 4 4\n"), Err(SynthError::InvalidSpec(_))));
    }

    #[test]
    fn background_plane_depth_is_analytic() {
        let lateral = render_scene(&background_only(Rig::Lateral { count: 2, baseline: 1.0 })).unwrap();
        let ring = render_scene(&background_only(Rig::Ring { count: 3, radius: 1.0, look_at: None })).unwrap();
        for s in [&lateral, &ring] {
            for gt in &s.gt_depths {
                assert!(gt.depth.iter().all(|d| (d - 12.0).abs() < 1e-9));
                assert!(gt.valid.iter().all(|v| *v));
            }
            assert!(s.gt_boundaries.iter().all(|b| b.iter().all(|v| !v)));
        }
        // Converging cameras see the plane tilted: depth along the optical
        // axis of the ray through the principal point is the distance to the
        // look-at target.
        let conv = render_scene(&background_only(Rig::Ring { count: 4, radius: 3.0, look_at: Some(12.0) })).unwrap();
        let spec = &conv.spec;
        for (v, gt) in conv.views.iter().zip(&conv.gt_depths) {
            let k_inv = v.intrinsics.inverse_matrix();
            for y in 0..spec.height {
                for x in 0..spec.width {
                    let dir = v.pose.rotation().transpose() * (k_inv * Vector3::new(x as f64, y as f64, 1.0));
                    let s = (12.0 - v.pose.center().z) / dir.z;
                    assert!((gt.depth.get(x, y) - s).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rectangle_outline_matches_projection() {
        let mut spec = background_only(Rig::Lateral { count: 2, baseline: 1.0 });
        spec.rects.push(Rect { x0: -1.03, y0: -0.91, x1: 1.52, y1: 1.13, depth: 8.0 });
        let scene = render_scene(&spec).unwrap();
        let k = spec.intrinsics().unwrap();
        for (v, mask) in scene.views.iter().zip(&scene.gt_boundaries) {
            let c = v.pose.center();
            // Pixel (x, y) sees the rectangle iff its ray at z = 8 lands inside.
            let inside = |x: i64, y: i64| {
                if x < 0 || y < 0 || x >= spec.width as i64 || y >= spec.height as i64 {
                    return None;
                }
                let wx = c.x + (x as f64 - k.cx) / k.fx * 8.0;
                let wy = c.y + (y as f64 - k.cy) / k.fy * 8.0;
                Some((-1.03..1.52).contains(&wx) && (-0.91..1.13).contains(&wy))
            };
            for y in 0..spec.height as i64 {
                for x in 0..spec.width as i64 {
                    let me = inside(x, y).unwrap();
                    let edge = [(-1, 0), (1, 0), (0, -1), (0, 1)]
                        .iter()
                        .any(|(dx, dy)| inside(x + dx, y + dy).is_some_and(|n| n != me));
                    assert_eq!(*mask.get(x as usize, y as usize), edge, "({x},{y})");
                }
            }
            assert!(mask.iter().any(|b| *b));
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let spec = SceneSpec::parse(STEP_SCENE).unwrap();
        let (a, b) = (render_scene(&spec).unwrap(), render_scene(&spec).unwrap());
        for (va, vb) in a.views.iter().zip(&b.views) {
            assert_eq!(va.image, vb.image);
        }
        assert_eq!(a.gt_cloud, b.gt_cloud);
    }

    #[test]
    fn texture_is_never_flat_in_5x5_windows() {
        for text in [TWO_PLANE_SCENE, STEP_SCENE, PLANE_SCENE] {
            let scene = render_scene(&SceneSpec::parse(text).unwrap()).unwrap();
            for v in &scene.views {
                let s = min_window_std(&v.intensity, 5);
                assert!(s > 0.01, "minimum window std {s}");
            }
        }
    }

    #[test]
    fn gt_cloud_lies_on_scene_planes() {
        let scene = render_scene(&SceneSpec::parse(TWO_PLANE_SCENE).unwrap()).unwrap();
        let depths: Vec<f64> = std::iter::once(scene.spec.background).chain(scene.spec.rects.iter().map(|r| r.depth)).collect();
        assert_eq!(scene.gt_cloud.len(), scene.views.len() * scene.spec.width * scene.spec.height);
        for p in &scene.gt_cloud.points {
            assert!(depths.iter().any(|d| (p.z - d).abs() < 1e-9));
        }
    }
}
