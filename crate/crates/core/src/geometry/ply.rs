//! Minimal PLY point-cloud I/O: ASCII and binary little-endian, float or
//! double x/y/z properties, optional nx/ny/nz normals. Unknown properties
//! are skipped.

use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::Vector3;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyFormat {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy)]
enum PropType {
    F32,
    F64,
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
}

impl PropType {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "float" | "float32" => PropType::F32,
            "double" | "float64" => PropType::F64,
            "char" | "int8" => PropType::I8,
            "uchar" | "uint8" => PropType::U8,
            "short" | "int16" => PropType::I16,
            "ushort" | "uint16" => PropType::U16,
            "int" | "int32" => PropType::I32,
            "uint" | "uint32" => PropType::U32,
            other => return Err(Error::Parse(format!("unsupported ply property type {other}"))),
        })
    }

    fn size(&self) -> usize {
        match self {
            PropType::I8 | PropType::U8 => 1,
            PropType::I16 | PropType::U16 => 2,
            PropType::F32 | PropType::I32 | PropType::U32 => 4,
            PropType::F64 => 8,
        }
    }

    fn read_le(&self, buf: &[u8]) -> f64 {
        match self {
            PropType::F32 => f32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            PropType::F64 => f64::from_le_bytes(buf[..8].try_into().unwrap()),
            PropType::I8 => buf[0] as i8 as f64,
            PropType::U8 => buf[0] as f64,
            PropType::I16 => i16::from_le_bytes(buf[..2].try_into().unwrap()) as f64,
            PropType::U16 => u16::from_le_bytes(buf[..2].try_into().unwrap()) as f64,
            PropType::I32 => i32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
            PropType::U32 => u32::from_le_bytes(buf[..4].try_into().unwrap()) as f64,
        }
    }
}

/// Points plus optional per-point normals as loaded from disk.
#[derive(Debug, Clone)]
pub struct PlyCloud<T: Real> {
    pub points: Vec<Vector3<T>>,
    pub normals: Option<Vec<Vector3<T>>>,
}

/// Loads vertices (and normals when present) from an ASCII or
/// binary-little-endian PLY file.
pub fn load_ply<T: Real>(path: &Path) -> Result<PlyCloud<T>> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);

    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim() != "ply" {
        return Err(Error::Parse("missing ply magic".into()));
    }

    let mut format = None;
    let mut vertex_count = 0usize;
    let mut props: Vec<(String, PropType)> = Vec::new();
    let mut in_vertex_element = false;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::Parse("unexpected EOF in ply header".into()));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLe),
            ["format", other, _] => {
                return Err(Error::Parse(format!("unsupported ply format {other}")))
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                vertex_count = n
                    .parse()
                    .map_err(|_| Error::Parse("bad vertex count".into()))?;
                in_vertex_element = true;
            }
            ["element", ..] => in_vertex_element = false,
            ["property", "list", ..] => {
                if in_vertex_element {
                    return Err(Error::Parse("list property on vertex element".into()));
                }
            }
            ["property", ty, name] => {
                if in_vertex_element {
                    props.push((name.to_string(), PropType::parse(ty)?));
                }
            }
            ["end_header"] => break,
            _ => return Err(Error::Parse(format!("bad ply header line: {}", line.trim()))),
        }
    }
    let format = format.ok_or_else(|| Error::Parse("ply header missing format".into()))?;

    let index_of = |name: &str| props.iter().position(|(n, _)| n == name);
    let (xi, yi, zi) = match (index_of("x"), index_of("y"), index_of("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::Parse("ply vertex element lacks x/y/z".into())),
    };
    let normal_idx = match (index_of("nx"), index_of("ny"), index_of("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };

    let mut points = Vec::with_capacity(vertex_count);
    let mut normals = normal_idx.map(|_| Vec::with_capacity(vertex_count));

    let mut push = |vals: &[f64]| -> Result<()> {
        let p = Vector3::new(T::of(vals[xi]), T::of(vals[yi]), T::of(vals[zi]));
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("ply vertex".into()));
        }
        points.push(p);
        if let (Some((a, b, c)), Some(ns)) = (normal_idx, normals.as_mut()) {
            ns.push(Vector3::new(T::of(vals[a]), T::of(vals[b]), T::of(vals[c])));
        }
        Ok(())
    };

    match format {
        PlyFormat::Ascii => {
            let mut vals = vec![0f64; props.len()];
            for _ in 0..vertex_count {
                line.clear();
                if reader.read_line(&mut line)? == 0 {
                    return Err(Error::Parse("truncated ply body".into()));
                }
                let mut it = line.split_whitespace();
                for v in vals.iter_mut() {
                    *v = it
                        .next()
                        .ok_or_else(|| Error::Parse("short ply vertex line".into()))?
                        .parse()
                        .map_err(|_| Error::Parse("bad ply number".into()))?;
                }
                push(&vals)?;
            }
        }
        PlyFormat::BinaryLe => {
            let stride: usize = props.iter().map(|(_, t)| t.size()).sum();
            let mut row = vec![0u8; stride];
            let mut vals = vec![0f64; props.len()];
            for _ in 0..vertex_count {
                reader.read_exact(&mut row)?;
                let mut off = 0;
                for (i, (_, ty)) in props.iter().enumerate() {
                    vals[i] = ty.read_le(&row[off..]);
                    off += ty.size();
                }
                push(&vals)?;
            }
        }
    }

    Ok(PlyCloud { points, normals })
}

/// Writes points (and normals when given) as binary-little-endian float32.
pub fn save_ply_binary<T: Real>(
    path: &Path,
    points: &[Vector3<T>],
    normals: Option<&[Vector3<T>]>,
) -> Result<()> {
    if let Some(ns) = normals {
        if ns.len() != points.len() {
            return Err(Error::Config("normal count != point count".into()));
        }
    }
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", points.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    if normals.is_some() {
        writeln!(w, "property float nx")?;
        writeln!(w, "property float ny")?;
        writeln!(w, "property float nz")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in points.iter().enumerate() {
        for c in p.iter() {
            w.write_all(&(c.to_f64_lossy() as f32).to_le_bytes())?;
        }
        if let Some(ns) = normals {
            for c in ns[i].iter() {
                w.write_all(&(c.to_f64_lossy() as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_round_trip() {
        let dir = std::env::temp_dir().join("scanctl_ply_ascii");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\ncomment test\nelement vertex 2\n\
             property float x\nproperty float y\nproperty float z\n\
             property uchar red\nend_header\n1 2 3 255\n-4.5 0 9 0\n",
        )
        .unwrap();
        let c: PlyCloud<f64> = load_ply(&path).unwrap();
        assert_eq!(c.points.len(), 2);
        assert!((c.points[1] - Vector3::new(-4.5, 0.0, 9.0)).norm() < 1e-6);
        assert!(c.normals.is_none());
    }

    #[test]
    fn binary_round_trip_with_normals() {
        let dir = std::env::temp_dir().join("scanctl_ply_bin");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("b.ply");
        let pts = vec![Vector3::new(1.0f64, 2.0, 3.0), Vector3::new(0.25, -1.0, 8.0)];
        let ns = vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(1.0, 0.0, 0.0)];
        save_ply_binary(&path, &pts, Some(&ns)).unwrap();
        let c: PlyCloud<f64> = load_ply(&path).unwrap();
        assert_eq!(c.points.len(), 2);
        assert!((c.points[0] - pts[0]).norm() < 1e-6);
        assert!((c.normals.unwrap()[1] - ns[1]).norm() < 1e-6);
    }

    #[test]
    fn rejects_missing_xyz() {
        let dir = std::env::temp_dir().join("scanctl_ply_bad");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n",
        )
        .unwrap();
        assert!(load_ply::<f64>(&path).is_err());
    }
}
