//! Binary little-endian PLY point clouds: `double x y z`, `uchar red green blue`.

use std::path::Path;

use nalgebra::Vector3;

use super::{read_bytes, write_bytes, IoError};
use crate::fusion::PointCloud;

const HEADER: &str = "property double x
property double y
property double z
property uchar red
property uchar green
property uchar blue
end_header
";

#[inline]
fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ply(cloud: &PointCloud) -> Vec<u8> {
    let mut out = format!("ply\nformat binary_little_endian 1.0\nelement vertex {}\n{HEADER}", cloud.len()).into_bytes();
    out.reserve(27 * cloud.len());
    for (p, c) in cloud.points.iter().zip(&cloud.colors) {
        for v in p.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend(c.iter().map(|v| to_u8(*v)));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, Scalar)>,
}

/// Reads the vertex element of a binary little-endian PLY. Integer colors
/// are scaled by 1/255; missing colors default to black.
pub fn decode_ply(bytes: &[u8]) -> Result<PointCloud, IoError> {
    let bad = |m: String| IoError::MalformedPly(m);
    let end = b"end_header\n";
    let header_end = bytes
        .windows(end.len())
        .position(|w| w == end)
        .ok_or_else(|| bad("missing end_header".into()))?
        + end.len();
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| bad("header is not UTF-8".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(bad("missing ply magic".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_ok = false;
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["format", "binary_little_endian", _] => format_ok = true,
            ["format", other, ..] => return Err(bad(format!("unsupported format {other}"))),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad(format!("bad element count {count:?}")))?,
                props: Vec::new(),
            }),
            ["property", "list", ..] => return Err(bad("list properties are not supported".into())),
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element".into()))?;
                let s = Scalar::parse(ty).ok_or_else(|| bad(format!("unknown property type {ty}")))?;
                el.props.push((name.to_string(), s));
            }
            ["comment", ..] | ["obj_info", ..] | ["end_header"] | [] => {}
            _ => return Err(bad(format!("unrecognized header line {line:?}"))),
        }
    }
    if !format_ok {
        return Err(bad("missing format line".into()));
    }
    let mut pos = header_end;
    let mut cloud = PointCloud::default();
    for el in &elements {
        let stride: usize = el.props.iter().map(|p| p.1.size()).sum();
        let total = stride.checked_mul(el.count).ok_or_else(|| bad("element size overflow".into()))?;
        if bytes.len() < pos + total {
            return Err(IoError::UnexpectedEof);
        }
        if el.name == "vertex" {
            let find = |n: &str| el.props.iter().position(|p| p.0 == n);
            let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => return Err(bad("vertex lacks x/y/z".into())),
            };
            let colors = [find("red"), find("green"), find("blue")];
            let mut offsets = Vec::with_capacity(el.props.len());
            let mut o = 0;
            for p in &el.props {
                offsets.push(o);
                o += p.1.size();
            }
            for i in 0..el.count {
                let rec = &bytes[pos + i * stride..pos + (i + 1) * stride];
                let val = |k: usize| el.props[k].1.read(&rec[offsets[k]..]);
                let color_scale = |k: usize| match el.props[k].1 {
                    Scalar::F32 | Scalar::F64 => 1.0,
                    Scalar::U16 => 65535.0,
                    _ => 255.0,
                };
                let c = colors.map(|k| k.map_or(0.0, |k| val(k) / color_scale(k)));
                cloud.push(Vector3::new(val(ix), val(iy), val(iz)), c, 0, 0);
            }
        }
        pos += total;
    }
    Ok(cloud)
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    write_bytes(path, &encode_ply(cloud))
}

pub fn read_ply(path: &Path) -> Result<PointCloud, IoError> {
    decode_ply(&read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PointCloud {
        let mut c = PointCloud::default();
        c.push(Vector3::new(1.0, -2.5, 1e-300), [0.0, 128.0 / 255.0, 1.0], 0, 3);
        c.push(Vector3::new(0.1 + 0.2, f64::MAX, -0.0), [10.0 / 255.0, 1.0, 0.0], 1, 4);
        c
    }

    #[test]
    fn round_trip_is_exact_for_payload() {
        let c = sample();
        let back = decode_ply(&encode_ply(&c)).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back.points.iter().zip(&c.points) {
            assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        }
        assert_eq!(back.colors, c.colors);
    }

    #[test]
    fn header_is_standard() {
        let bytes = encode_ply(&sample());
        let text = String::from_utf8_lossy(&bytes[..200]);
        assert!(text.starts_with("ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double x\n"));
        assert_eq!(bytes.len(), text.find("end_header\n").unwrap() + 11 + 2 * 27);
    }

    #[test]
    fn generic_scalar_properties() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\ncomment x\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nend_header\n".to_vec();
        for v in [1.5f32, 2.0, -3.0, 9.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let c = decode_ply(&bytes).unwrap();
        assert_eq!(c.points[0], Vector3::new(1.5, 2.0, -3.0));
        assert_eq!(c.colors[0], [0.0; 3]);
    }

    #[test]
    fn malformed() {
        assert!(decode_ply(b"ply\nformat ascii 1.0\nend_header\n").is_err());
        assert!(decode_ply(b"nope").is_err());
        let mut truncated = encode_ply(&sample());
        truncated.truncate(truncated.len() - 1);
        assert!(matches!(decode_ply(&truncated), Err(IoError::UnexpectedEof)));
    }
}
