//! Camera text files:
//!
//! ```text
//! extrinsic
//! <4x4 world-to-camera, row-major>
//!
//! intrinsic
//! <3x3 K, row-major>
//!
//! depth_min depth_interval depth_sample_count depth_max
//! ```

use std::path::Path;

use nalgebra::{Matrix3, Matrix4};

use super::{read_bytes, write_bytes, IoError};
use crate::geometry::{CalibratedView, GeometryError, Intrinsics, Pose};
use crate::image::Image;

#[derive(Clone, Debug, PartialEq)]
pub struct CamFile {
    pub extrinsic: Matrix4<f64>,
    pub intrinsic: Matrix3<f64>,
    pub depth_min: f64,
    pub depth_interval: f64,
    pub depth_samples: f64,
    pub depth_max: f64,
}

/// Sample count written when a view carries no depth sampling of its own.
pub const DEFAULT_DEPTH_SAMPLES: usize = 192;
/// Largest `|RᵀR − I|` entry accepted for snapping.
pub const SNAP_TOL: f64 = 1e-3;

impl CamFile {
    pub fn from_view(view: &CalibratedView) -> Self {
        let n = DEFAULT_DEPTH_SAMPLES as f64;
        Self {
            extrinsic: view.pose.matrix(),
            intrinsic: view.intrinsics.matrix(),
            depth_min: view.depth_min,
            depth_interval: (view.depth_max - view.depth_min) / (n - 1.0),
            depth_samples: n,
            depth_max: view.depth_max,
        }
    }

    pub fn intrinsics(&self, width: usize, height: usize) -> Result<Intrinsics, GeometryError> {
        Intrinsics::from_matrix(&self.intrinsic, width, height)
    }

    /// Rotations printed with few digits are snapped to the nearest
    /// orthonormal matrix when they are within [`SNAP_TOL`] of one.
    pub fn pose(&self) -> Result<Pose, GeometryError> {
        let exact = Pose::from_matrix(&self.extrinsic);
        if exact.is_ok() {
            return exact;
        }
        let r = self.extrinsic.fixed_view::<3, 3>(0, 0).into_owned();
        let t = self.extrinsic.fixed_view::<3, 1>(0, 3).into_owned();
        if (r.transpose() * r - Matrix3::identity()).abs().max() > SNAP_TOL {
            return exact;
        }
        let svd = r.svd(true, true);
        match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => Pose::new(u * v_t, t),
            _ => exact,
        }
    }

    pub fn to_view(&self, image: Image) -> Result<CalibratedView, GeometryError> {
        let k = self.intrinsics(image.width(), image.height())?;
        CalibratedView::new(image, k, self.pose()?, self.depth_min, self.depth_max)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("extrinsic\n");
        for r in 0..4 {
            let row: Vec<String> = (0..4).map(|c| format!("{}", self.extrinsic[(r, c)])).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s.push_str("\nintrinsic\n");
        for r in 0..3 {
            let row: Vec<String> = (0..3).map(|c| format!("{}", self.intrinsic[(r, c)])).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s.push_str(&format!(
            "\n{} {} {} {}\n",
            self.depth_min, self.depth_interval, self.depth_samples, self.depth_max
        ));
        s
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let bad = |m: &str| IoError::MalformedCamFile(m.to_string());
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let numbers = |line: &str| -> Result<Vec<f64>, IoError> {
            line.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| IoError::MalformedCamFile(format!("bad number {t:?}"))))
                .collect()
        };
        if lines.next() != Some("extrinsic") {
            return Err(bad("expected \"extrinsic\""));
        }
        let mut e = Vec::with_capacity(16);
        for _ in 0..4 {
            let row = numbers(lines.next().ok_or_else(|| bad("truncated extrinsic"))?)?;
            if row.len() != 4 {
                return Err(bad("extrinsic rows need 4 values"));
            }
            e.extend(row);
        }
        if lines.next() != Some("intrinsic") {
            return Err(bad("expected \"intrinsic\""));
        }
        let mut k = Vec::with_capacity(9);
        for _ in 0..3 {
            let row = numbers(lines.next().ok_or_else(|| bad("truncated intrinsic"))?)?;
            if row.len() != 3 {
                return Err(bad("intrinsic rows need 3 values"));
            }
            k.extend(row);
        }
        let depth = numbers(lines.next().ok_or_else(|| bad("missing depth line"))?)?;
        if depth.len() != 4 {
            return Err(bad("depth line needs depth_min depth_interval depth_sample_count depth_max"));
        }
        Ok(Self {
            extrinsic: Matrix4::from_row_slice(&e),
            intrinsic: Matrix3::from_row_slice(&k),
            depth_min: depth[0],
            depth_interval: depth[1],
            depth_samples: depth[2],
            depth_max: depth[3],
        })
    }
}

pub fn write_cam(path: &Path, cam: &CamFile) -> Result<(), IoError> {
    write_bytes(path, cam.to_text().as_bytes())
}

pub fn read_cam(path: &Path) -> Result<CamFile, IoError> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| IoError::MalformedCamFile("not UTF-8".into()))?;
    CamFile::parse(&text)
}
