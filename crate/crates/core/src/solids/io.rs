use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use super::{Polygon2, Solid, TriangleMesh};
use crate::error::SolidError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolidFormat {
    Obj,
    Stl,
    PolyJson,
}

impl SolidFormat {
    /// Guesses the format from the file extension (`.obj`, `.stl`, `.json`).
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "obj" => Some(Self::Obj),
            "stl" => Some(Self::Stl),
            "json" => Some(Self::PolyJson),
            _ => None,
        }
    }
}

impl FromStr for SolidFormat {
    type Err = SolidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "obj" => Ok(Self::Obj),
            "stl" => Ok(Self::Stl),
            "poly-json" | "json" => Ok(Self::PolyJson),
            other => Err(SolidError::UnknownFormat(other.into())),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PolyJson {
    loops: Vec<Vec<[f64; 2]>>,
}

pub fn load_solid(path: &Path, format: SolidFormat) -> Result<Solid, SolidError> {
    match format {
        SolidFormat::Obj => {
            let text = fs::read_to_string(path)?;
            let (v, f) = parse_obj(&text, path)?;
            Ok(Solid::from_mesh(TriangleMesh::new(v, f)?))
        }
        SolidFormat::Stl => {
            let bytes = fs::read(path)?;
            let (v, f) = parse_binary_stl(&bytes, path)?;
            Ok(Solid::from_mesh(TriangleMesh::new(v, f)?))
        }
        SolidFormat::PolyJson => {
            let text = fs::read_to_string(path)?;
            let doc: PolyJson = serde_json::from_str(&text).map_err(|e| SolidError::Parse {
                path: path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?;
            let loops = doc
                .loops
                .into_iter()
                .map(|l| l.into_iter().map(|[x, y]| Point2::new(x, y)).collect())
                .collect();
            Ok(Solid::from_polygon(Polygon2::new(loops)?))
        }
    }
}

fn parse_obj(text: &str, path: &Path) -> Result<(Vec<Point3<f64>>, Vec<[u32; 3]>), SolidError> {
    let err = |line: usize, message: String| SolidError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut it = raw.split_whitespace();
        match it.next() {
            Some("v") => {
                let coords: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| err(line, format!("bad vertex: {e}")))?;
                if coords.len() != 3 {
                    return Err(err(line, "vertex needs 3 coordinates".into()));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|e| err(line, format!("bad face index {tok:?}: {e}")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        return Err(err(line, "face index 0".into()));
                    };
                    if resolved < 0 {
                        return Err(err(line, format!("face index {i} out of range")));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(err(line, "face needs at least 3 vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

fn parse_binary_stl(
    bytes: &[u8],
    path: &Path,
) -> Result<(Vec<Point3<f64>>, Vec<[u32; 3]>), SolidError> {
    let err = |message: String| SolidError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message,
    };
    if bytes.len() < 84 {
        return Err(err("truncated STL header".into()));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    if bytes.len() < 84 + 50 * count {
        return Err(err(format!("STL declares {count} triangles but file is truncated")));
    }
    let mut vertices = Vec::new();
    let mut lookup: HashMap<[u32; 3], u32> = HashMap::new();
    let mut faces = Vec::with_capacity(count);
    for t in 0..count {
        let rec = &bytes[84 + 50 * t..84 + 50 * (t + 1)];
        let mut face = [0u32; 3];
        for (k, slot) in face.iter_mut().enumerate() {
            let off = 12 + 12 * k;
            let mut key = [0u32; 3];
            let mut p = [0f64; 3];
            for c in 0..3 {
                let b: [u8; 4] = rec[off + 4 * c..off + 4 * c + 4].try_into().unwrap();
                key[c] = u32::from_le_bytes(b);
                p[c] = f32::from_le_bytes(b) as f64;
            }
            *slot = *lookup.entry(key).or_insert_with(|| {
                vertices.push(Point3::new(p[0], p[1], p[2]));
                (vertices.len() - 1) as u32
            });
        }
        faces.push(face);
    }
    Ok((vertices, faces))
}

pub fn save_obj(mesh: &TriangleMesh, path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for v in mesh.vertices() {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    out.flush()
}

pub fn save_stl(mesh: &TriangleMesh, path: &Path) -> std::io::Result<()> {
    let mut buf = vec![0u8; 80];
    buf.extend_from_slice(&(mesh.faces().len() as u32).to_le_bytes());
    for (i, _) in mesh.faces().iter().enumerate() {
        let n = mesh.face_normal(i);
        for c in 0..3 {
            buf.extend_from_slice(&(n[c] as f32).to_le_bytes());
        }
        for p in mesh.triangle(i) {
            for c in 0..3 {
                buf.extend_from_slice(&(p[c] as f32).to_le_bytes());
            }
        }
        buf.extend_from_slice(&[0, 0]);
    }
    fs::write(path, buf)
}

pub fn save_poly_json(polygon: &Polygon2, path: &Path) -> std::io::Result<()> {
    let doc = PolyJson {
        loops: polygon
            .loops()
            .iter()
            .map(|l| l.iter().map(|p| [p.x, p.y]).collect())
            .collect(),
    };
    fs::write(path, serde_json::to_string(&doc)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn cube_obj_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.obj");
        save_obj(&shapes::unit_cube(), &path).unwrap();
        let s = load_solid(&path, SolidFormat::Obj).unwrap();
        assert_eq!(s.dimension(), 3);
        assert!((s.measure() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn icosphere_stl_volume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sphere.stl");
        save_stl(&shapes::icosphere(1.0, 3), &path).unwrap();
        let s = load_solid(&path, SolidFormat::Stl).unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((s.measure() - exact).abs() / exact < 0.02);
    }

    #[test]
    fn square_poly_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sq.json");
        fs::write(&path, r#"{"loops": [[[0,0],[1,0],[1,1],[0,1]]]}"#).unwrap();
        let s = load_solid(&path, SolidFormat::PolyJson).unwrap();
        assert_eq!(s.dimension(), 2);
        assert!((s.measure() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn malformed_obj_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.obj");
        fs::write(&path, "v 0 0 0\nv 1 0 x\n").unwrap();
        match load_solid(&path, SolidFormat::Obj).unwrap_err() {
            SolidError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn open_obj_reports_face() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("open.obj");
        fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 2 3 4\n").unwrap();
        let e = load_solid(&path, SolidFormat::Obj).unwrap_err();
        assert!(matches!(e, SolidError::OpenEdge { .. }), "{e}");
    }

    #[test]
    fn format_from_name() {
        assert_eq!("poly-json".parse::<SolidFormat>().unwrap(), SolidFormat::PolyJson);
        assert!("step".parse::<SolidFormat>().is_err());
        assert_eq!(SolidFormat::from_path(Path::new("a/b.STL")), Some(SolidFormat::Stl));
    }
}
