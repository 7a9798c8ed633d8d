//! Minimal Wavefront OBJ with one texture coordinate per vertex.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjMesh {
    pub vertices: Vec<Vec3>,
    pub uvs: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
}

pub fn format_obj(mesh: &ObjMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
    }
    for t in &mesh.uvs {
        let _ = writeln!(s, "vt {} {}", t[0], t[1]);
    }
    for f in &mesh.triangles {
        let _ = writeln!(s, "f {0}/{0} {1}/{1} {2}/{2}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn parse_obj(text: &str, origin: &Path) -> Result<ObjMesh> {
    let bad = |line: usize, m: &str| Error::format(origin, format!("line {}: {m}", line + 1));
    let mut mesh = ObjMesh {
        vertices: Vec::new(),
        uvs: Vec::new(),
        triangles: Vec::new(),
    };
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let nums = |parts: std::str::SplitWhitespace<'_>| -> Result<Vec<f64>> {
            parts.map(|p| p.parse::<f64>().map_err(|_| bad(ln, "bad number"))).collect()
        };
        match tag {
            "v" => {
                let n = nums(parts)?;
                if n.len() < 3 {
                    return Err(bad(ln, "vertex needs 3 coordinates"));
                }
                mesh.vertices.push([n[0], n[1], n[2]]);
            }
            "vt" => {
                let n = nums(parts)?;
                if n.len() < 2 {
                    return Err(bad(ln, "texture coordinate needs 2 values"));
                }
                mesh.uvs.push([n[0], n[1]]);
            }
            "f" => {
                let mut idx = Vec::new();
                for p in parts {
                    let mut fields = p.split('/');
                    let v: usize = fields
                        .next()
                        .and_then(|s| s.parse().ok())
                        .filter(|&i| i >= 1)
                        .ok_or_else(|| bad(ln, "bad face index"))?;
                    if let Some(t) = fields.next().filter(|s| !s.is_empty()) {
                        if t.parse::<usize>().ok() != Some(v) {
                            return Err(bad(ln, "texture index must equal the vertex index"));
                        }
                    }
                    idx.push(v - 1);
                }
                if idx.len() != 3 {
                    return Err(bad(ln, "only triangles are supported"));
                }
                mesh.triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    if !mesh.uvs.is_empty() && mesh.uvs.len() != mesh.vertices.len() {
        return Err(Error::format(origin, "need exactly one texture coordinate per vertex"));
    }
    if mesh.triangles.iter().flatten().any(|&i| i >= mesh.vertices.len()) {
        return Err(Error::format(origin, "face references a missing vertex"));
    }
    Ok(mesh)
}

pub fn write_obj(path: impl AsRef<Path>, mesh: &ObjMesh) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_obj(mesh)).map_err(|e| Error::io(path, e))
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<ObjMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mesh = ObjMesh {
            vertices: vec![[0.0, 0.1, -0.3], [1.0, 1e-7, 2.5], [0.2, 0.3, 0.4]],
            uvs: vec![[0.0, 1.0], [0.5, 0.25], [1.0, 0.0]],
            triangles: vec![[0, 1, 2]],
        };
        assert_eq!(parse_obj(&format_obj(&mesh), Path::new("m")).unwrap(), mesh);
    }

    #[test]
    fn accepts_plain_faces_and_comments() {
        let m = parse_obj("# hi\nv 0 0 0\nv 1 0 0\nv 0 1 0 # c\nf 1 2 3\nf 1//1 2//2 3//3\n", Path::new("m")).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 1, 2]]);
    }

    #[test]
    fn rejects_bad_faces() {
        assert!(parse_obj("v 0 0 0\nf 1 2 3\n", Path::new("m")).is_err());
        assert!(parse_obj("v 0 0 0\nv 0 0 0\nv 0 0 0\nv 0 0 0\nf 1 2 3 4\n", Path::new("m")).is_err());
    }
}
