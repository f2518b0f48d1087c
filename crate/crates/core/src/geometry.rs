//! Pinhole cameras, projection, and fronto-parallel plane homographies.
//!
//! Pixel centers sit at integer coordinates with `(0, 0)` the center of the
//! top-left pixel. Poses map world points into the camera frame,
//! `X_cam = R · X_world + t`, and the camera looks down `+z`.

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3};
use thiserror::Error;

use crate::grid::{DepthRange, Grid};
use crate::image::{box_downsample, Image};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point lies behind the camera (camera-frame z = {0})")]
    BehindCamera(f64),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid view: {0}")]
    InvalidView(String),
}

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!("focal lengths must be positive (fx={fx}, fy={fy})")));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn from_matrix(k: &Matrix3<f64>, width: usize, height: usize) -> Result<Self, GeometryError> {
        Self::new(k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)], width, height)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Intrinsics of the 2×2 box-downsampled image. Coarse pixel `i` covers
    /// fine pixels `2i, 2i+1`, so its center is at fine coordinate `2i + 0.5`.
    pub fn half(&self) -> Intrinsics {
        Intrinsics {
            fx: self.fx / 2.0,
            fy: self.fy / 2.0,
            cx: (self.cx - 0.5) / 2.0,
            cy: (self.cy - 0.5) / 2.0,
            width: self.width / 2,
            height: self.height / 2,
        }
    }

    #[inline]
    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= -0.5 && pixel.y >= -0.5 && pixel.x < self.width as f64 - 0.5 && pixel.y < self.height as f64 - 0.5
    }
}

/// World-to-camera rigid transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(err <= ORTHONORMAL_TOL) {
            return Err(GeometryError::InvalidPose(format!("rotation not orthonormal (max |RᵀR − I| = {err:e})")));
        }
        let det = rotation.determinant();
        if !((det - 1.0).abs() <= ORTHONORMAL_TOL) {
            return Err(GeometryError::InvalidPose(format!("rotation determinant {det} ≠ 1")));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidPose("non-finite translation".into()));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Pose from a 4×4 world→camera matrix (last row ignored).
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        let r = m.fixed_view::<3, 3>(0, 0).into_owned();
        let t = m.fixed_view::<3, 1>(0, 3).into_owned();
        Self::new(r, t)
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Camera at world position `center` looking at `target`, with image `y`
    /// pointing along world `-up` projected off the viewing axis.
    pub fn look_at(center: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self, GeometryError> {
        let z = (target - center).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let rot = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let t = -(rot * center);
        Self::new(rot, t)
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    #[inline]
    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * world + self.translation
    }

    #[inline]
    pub fn to_world(&self, cam: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (cam - self.translation)
    }
}

/// Image, calibration and depth range of one input view.
#[derive(Clone, Debug)]
pub struct CalibratedView {
    pub image: Image,
    /// Matching intensity; defaults to the channel mean of `image`.
    pub intensity: Grid<f64>,
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub depth_min: f64,
    pub depth_max: f64,
}

impl CalibratedView {
    pub fn new(image: Image, intrinsics: Intrinsics, pose: Pose, depth_min: f64, depth_max: f64) -> Result<Self, GeometryError> {
        if image.width() != intrinsics.width || image.height() != intrinsics.height {
            return Err(GeometryError::InvalidView(format!(
                "image is {}x{} but intrinsics declare {}x{}",
                image.width(),
                image.height(),
                intrinsics.width,
                intrinsics.height
            )));
        }
        if !(depth_min > 0.0 && depth_max >= depth_min) {
            return Err(GeometryError::InvalidView(format!("bad depth range [{depth_min}, {depth_max}]")));
        }
        let intensity = image.to_gray();
        Ok(Self {
            image,
            intensity,
            intrinsics,
            pose,
            depth_min,
            depth_max,
        })
    }

    /// Replaces the matching intensity, e.g. with a lossless copy of the image.
    pub fn with_intensity(mut self, intensity: Grid<f64>) -> Result<Self, GeometryError> {
        if intensity.dims() != (self.intrinsics.width, self.intrinsics.height) {
            return Err(GeometryError::InvalidView("intensity dimensions differ from image".into()));
        }
        self.intensity = intensity;
        Ok(self)
    }

    #[inline]
    pub fn range(&self) -> DepthRange {
        DepthRange::new(self.depth_min, self.depth_max)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    /// The view at half resolution: box-filtered image and halved intrinsics.
    pub fn downsampled(&self) -> CalibratedView {
        CalibratedView {
            image: self.image.box_downsample(),
            intensity: box_downsample(&self.intensity),
            intrinsics: self.intrinsics.half(),
            pose: self.pose,
            depth_min: self.depth_min,
            depth_max: self.depth_max,
        }
    }

    /// Halves the view until it is `width × height`.
    pub fn at_resolution(&self, width: usize, height: usize) -> Result<CalibratedView, GeometryError> {
        let mut v = self.clone();
        while v.width() > width && v.height() > height {
            v = v.downsampled();
        }
        if v.width() != width || v.height() != height {
            return Err(GeometryError::InvalidView(format!(
                "cannot reach {width}x{height} from {}x{} by halving",
                self.width(),
                self.height()
            )));
        }
        Ok(v)
    }
}

/// Projects a world point; returns the pixel and the camera-frame depth.
pub fn project(point: &Vector3<f64>, view: &CalibratedView) -> Result<(Vector2<f64>, f64), GeometryError> {
    project_with(point, &view.intrinsics, &view.pose)
}

pub fn project_with(point: &Vector3<f64>, k: &Intrinsics, pose: &Pose) -> Result<(Vector2<f64>, f64), GeometryError> {
    let c = pose.to_camera(point);
    if !(c.z > 0.0) {
        return Err(GeometryError::BehindCamera(c.z));
    }
    let px = Vector2::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy);
    Ok((px, c.z))
}

/// Back-projects a pixel at camera-frame depth `depth` into world coordinates.
pub fn unproject(pixel: &Vector2<f64>, depth: f64, view: &CalibratedView) -> Result<Vector3<f64>, GeometryError> {
    unproject_with(pixel, depth, &view.intrinsics, &view.pose)
}

pub fn unproject_with(pixel: &Vector2<f64>, depth: f64, k: &Intrinsics, pose: &Pose) -> Result<Vector3<f64>, GeometryError> {
    if !(depth > 0.0) {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    let cam = Vector3::new((pixel.x - k.cx) / k.fx * depth, (pixel.y - k.cy) / k.fy * depth, depth);
    Ok(pose.to_world(&cam))
}

/// Result of warping a reference pixel into a source view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Warp {
    pub pixel: Vector2<f64>,
    /// Whether `pixel` falls inside the source image footprint.
    pub in_bounds: bool,
}

/// Homography induced by fronto-parallel planes of the reference camera,
/// split as `H(d) = A + B / d` so that one instance serves every depth.
///
/// With the plane `nᵀX = d`, `n = (0, 0, 1)` in the reference frame and the
/// relative motion `X_src = R X_ref + t`, the induced map is
/// `H = K_src (R + t nᵀ / d) K_ref⁻¹`.
#[derive(Clone, Copy, Debug)]
pub struct PlaneHomography {
    a: Matrix3<f64>,
    b: Matrix3<f64>,
    src_width: usize,
    src_height: usize,
}

impl PlaneHomography {
    pub fn new(reference: &Intrinsics, ref_pose: &Pose, source: &Intrinsics, src_pose: &Pose) -> Self {
        let r_rel = src_pose.rotation() * ref_pose.rotation().transpose();
        let t_rel = src_pose.translation() - r_rel * ref_pose.translation();
        let k_src = source.matrix();
        let k_ref_inv = reference.inverse_matrix();
        let n = Vector3::new(0.0, 0.0, 1.0);
        Self {
            a: k_src * r_rel * k_ref_inv,
            b: k_src * (t_rel * n.transpose()) * k_ref_inv,
            src_width: source.width,
            src_height: source.height,
        }
    }

    pub fn between(reference: &CalibratedView, source: &CalibratedView) -> Self {
        Self::new(&reference.intrinsics, &reference.pose, &source.intrinsics, &source.pose)
    }

    #[inline]
    pub fn at_depth(&self, depth: f64) -> Matrix3<f64> {
        self.a + self.b / depth
    }

    /// Applies a homography returned by [`Self::at_depth`]; `None` when the
    /// warped point is behind the source camera.
    #[inline]
    pub fn apply(h: &Matrix3<f64>, x: f64, y: f64) -> Option<Vector2<f64>> {
        let w = h[(2, 0)] * x + h[(2, 1)] * y + h[(2, 2)];
        if !(w > 0.0) {
            return None;
        }
        let u = (h[(0, 0)] * x + h[(0, 1)] * y + h[(0, 2)]) / w;
        let v = (h[(1, 0)] * x + h[(1, 1)] * y + h[(1, 2)]) / w;
        Some(Vector2::new(u, v))
    }

    pub fn warp(&self, pixel: &Vector2<f64>, depth: f64) -> Result<Warp, GeometryError> {
        let h = self.at_depth(depth);
        let w = h[(2, 0)] * pixel.x + h[(2, 1)] * pixel.y + h[(2, 2)];
        let p = Self::apply(&h, pixel.x, pixel.y).ok_or(GeometryError::BehindCamera(w * depth))?;
        let in_bounds = p.x >= -0.5 && p.y >= -0.5 && p.x < self.src_width as f64 - 0.5 && p.y < self.src_height as f64 - 0.5;
        Ok(Warp { pixel: p, in_bounds })
    }
}

/// Warps a reference pixel hypothesized at `depth` into `src` through the
/// plane-induced homography.
pub fn homography_warp(pixel: &Vector2<f64>, depth: f64, reference: &CalibratedView, src: &CalibratedView) -> Result<Warp, GeometryError> {
    if !(depth > 0.0) {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    PlaneHomography::between(reference, src).warp(pixel, depth)
}
