//! Grayscale PFM ("Pf") with 32-bit float samples stored bottom row first.

use std::path::Path;

use super::{read_bytes, write_bytes, IoError};
use crate::grid::{DepthMap, DepthRange, Grid};

/// Little-endian encoding with scale −1.
pub fn encode_pfm(grid: &Grid<f64>) -> Vec<u8> {
    let (w, h) = grid.dims();
    let mut out = format!("Pf\n{w} {h}\n-1\n").into_bytes();
    out.reserve(4 * w * h);
    for y in (0..h).rev() {
        for v in grid.row(y) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<String, IoError> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(IoError::UnexpectedEof);
    }
    String::from_utf8(bytes[start..*pos].to_vec()).map_err(|_| IoError::MalformedHeader("non-ASCII header".into()))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Grid<f64>, IoError> {
    let mut pos = 0;
    match header_token(bytes, &mut pos)?.as_str() {
        "Pf" => {}
        "PF" => return Err(IoError::MalformedHeader("color PFM (PF) is not supported".into())),
        other => return Err(IoError::MalformedHeader(format!("unknown magic {other:?}"))),
    }
    let parse_dim = |s: String| s.parse::<usize>().map_err(|_| IoError::MalformedHeader(format!("bad dimension {s:?}")));
    let w = parse_dim(header_token(bytes, &mut pos)?)?;
    let h = parse_dim(header_token(bytes, &mut pos)?)?;
    let scale_tok = header_token(bytes, &mut pos)?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| IoError::MalformedHeader(format!("bad scale {scale_tok:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(IoError::MalformedHeader(format!("bad scale {scale_tok:?}")));
    }
    // Exactly one whitespace byte separates the header from the samples.
    if pos >= bytes.len() {
        return Err(IoError::UnexpectedEof);
    }
    pos += 1;
    let n = w.checked_mul(h).ok_or_else(|| IoError::MalformedHeader("dimensions overflow".into()))?;
    let data = &bytes[pos..];
    if data.len() < 4 * n {
        return Err(IoError::UnexpectedEof);
    }
    let little = scale < 0.0;
    let mut out = vec![0.0; n];
    for (i, chunk) in data[..4 * n].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (x, row_from_bottom) = (i % w, i / w);
        out[(h - 1 - row_from_bottom) * w + x] = v as f64;
    }
    Ok(Grid::from_vec(w, h, out))
}

pub fn write_pfm(path: &Path, grid: &Grid<f64>) -> Result<(), IoError> {
    write_bytes(path, &encode_pfm(grid))
}

pub fn read_pfm(path: &Path) -> Result<Grid<f64>, IoError> {
    decode_pfm(&read_bytes(path)?)
}

/// Invalid pixels are written as 0.
pub fn write_depth_pfm(path: &Path, depth: &DepthMap) -> Result<(), IoError> {
    let g = Grid::from_fn(depth.width(), depth.height(), |x, y| depth.at(x, y).unwrap_or(0.0));
    write_pfm(path, &g)
}

/// Pixels with positive finite depth are valid.
pub fn read_depth_pfm(path: &Path, range: DepthRange) -> Result<DepthMap, IoError> {
    let g = read_pfm(path)?;
    let valid = g.map(|d| *d > 0.0 && d.is_finite());
    let depth = g.map(|d| if *d > 0.0 && d.is_finite() { *d } else { 0.0 });
    Ok(DepthMap::new(depth, valid, range))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(g: &Grid<f64>) -> Vec<u64> {
        g.iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn single_value_round_trip() {
        let g = Grid::from_vec(1, 1, vec![42.0]);
        assert_eq!(bits(&decode_pfm(&encode_pfm(&g)).unwrap()), bits(&g));
    }

    #[test]
    fn rectangular_round_trip_and_row_order() {
        let g = Grid::from_vec(3, 2, vec![1.5, -2.25, 3.0, 1e-3f32 as f64, 7.0, 0.0]);
        let bytes = encode_pfm(&g);
        assert_eq!(bits(&decode_pfm(&bytes).unwrap()), bits(&g));
        let header = b"Pf\n3 2\n-1\n".len();
        // First stored sample is the bottom-left pixel.
        assert_eq!(f32::from_le_bytes(bytes[header..header + 4].try_into().unwrap()), 1e-3);
    }

    #[test]
    fn big_endian_is_read() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&5.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-1.0f32).to_be_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().as_slice(), &[5.5, -1.0]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(decode_pfm(b"PF\n1 1\n-1\n\0\0\0\0\0\0\0\0\0\0\0\0"), Err(IoError::MalformedHeader(_))));
        assert!(matches!(decode_pfm(b"P6\n1 1\n-1\n"), Err(IoError::MalformedHeader(_))));
        assert!(matches!(decode_pfm(b"Pf\n2 2\n-1\n\0\0\0\0"), Err(IoError::UnexpectedEof)));
        assert!(matches!(decode_pfm(b"Pf\n2"), Err(IoError::UnexpectedEof)));
        assert!(matches!(decode_pfm(b"Pf\nx 2\n-1\n"), Err(IoError::MalformedHeader(_))));
    }

    #[test]
    fn depth_files_mark_invalid_as_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        let r = DepthRange::new(1.0, 9.0);
        let mut m = DepthMap::constant(3, 3, 4.0, r);
        m.valid.set(1, 2, false);
        write_depth_pfm(&p, &m).unwrap();
        assert_eq!(read_depth_pfm(&p, r).unwrap(), {
            let mut e = m.clone();
            e.depth.set(1, 2, 0.0);
            e
        });
    }
}
