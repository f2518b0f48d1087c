//! On-disk formats: PFM grids, camera text files, binary PLY clouds, 8-bit
//! PNG images, and planar bimodal parameter maps.

use std::path::PathBuf;

use thiserror::Error;

pub mod cam;
pub mod pfm;
pub mod ply;
pub mod png;

pub use cam::{read_cam, write_cam, CamFile};
pub use pfm::{read_depth_pfm, read_pfm, write_depth_pfm, write_pfm};
pub use ply::{read_ply, write_ply};
pub use png::{read_png, write_png, write_png_gray};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unexpected end of data")]
    UnexpectedEof,
    #[error("malformed camera file: {0}")]
    MalformedCamFile(String),
    #[error("malformed PLY: {0}")]
    MalformedPly(String),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub(crate) fn read_bytes(path: &std::path::Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

pub(crate) fn write_bytes(path: &std::path::Path, bytes: &[u8]) -> Result<(), IoError> {
    std::fs::write(path, bytes).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

pub mod bimodal_maps {
    //! Five planar PFM images per bimodal map: `<stem>.alpha.pfm`,
    //! `<stem>.mu1.pfm`, `<stem>.sigma1.pfm`, `<stem>.mu2.pfm`, `<stem>.sigma2.pfm`.

    use std::path::{Path, PathBuf};

    use super::{pfm, IoError};
    use crate::bimodal::{BimodalDepthMap, BimodalLaplacian};
    use crate::grid::{DepthRange, Grid};

    pub const PLANES: [&str; 5] = ["alpha", "mu1", "sigma1", "mu2", "sigma2"];

    pub fn plane_path(dir: &Path, stem: &str, plane: &str) -> PathBuf {
        dir.join(format!("{stem}.{plane}.pfm"))
    }

    pub fn write(dir: &Path, stem: &str, map: &BimodalDepthMap) -> Result<(), IoError> {
        for (name, grid) in PLANES.iter().zip(map.planes()) {
            pfm::write_pfm(&plane_path(dir, stem, name), &grid)?;
        }
        Ok(())
    }

    /// Reads the five planes back. Cells whose stored parameters fail
    /// validation after the f32 round trip are marked invalid.
    pub fn read(dir: &Path, stem: &str, valid: Grid<bool>, range: DepthRange) -> Result<BimodalDepthMap, IoError> {
        let planes = PLANES
            .iter()
            .map(|name| pfm::read_pfm(&plane_path(dir, stem, name)))
            .collect::<Result<Vec<_>, _>>()?;
        let dims = planes[0].dims();
        if planes.iter().any(|p| p.dims() != dims) || valid.dims() != dims {
            return Err(IoError::DimensionMismatch(format!("bimodal planes for {stem} differ in size")));
        }
        let mut valid = valid;
        let cells = Grid::from_fn(dims.0, dims.1, |x, y| {
            let v = |i: usize| *planes[i].get(x, y);
            match BimodalLaplacian::new(v(0), v(1), v(2), v(3), v(4)) {
                Ok(c) => c,
                Err(_) => {
                    valid.set(x, y, false);
                    BimodalLaplacian::new(1.0, range.min, 1.0, range.min, 1.0).expect("fallback cell is valid")
                }
            }
        });
        BimodalDepthMap::new(cells, valid, range).map_err(|e| IoError::DimensionMismatch(e.to_string()))
    }
}
