//! Triangle meshes and the ASCII OBJ subset used for geometry files.
//!
//! Supported records: `v x y z`, `f i j k` (1-based, `i/...` suffixes ignored,
//! negative indices relative to the end), `usemtl name` (material override for
//! the faces that follow) and `#` comments. Everything else is rejected.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vec3;

const MIN_AREA: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    normals: Vec<Vec3>,
    /// Per-face material override (`usemtl`), `None` means the owner's material.
    face_materials: Vec<Option<String>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = faces.len();
        Self::with_materials(vertices, faces, vec![None; n])
    }

    pub fn with_materials(
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        face_materials: Vec<Option<String>>,
    ) -> Result<Self> {
        if face_materials.len() != faces.len() {
            return Err(Error::invalid("faces", "material list length differs from face count"));
        }
        if let Some((i, v)) = vertices.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid("vertices", format!("vertex {i} is not finite: {v:?}")));
        }
        let mut normals = Vec::with_capacity(faces.len());
        for (i, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&k| k >= vertices.len()) {
                return Err(Error::invalid(
                    "faces",
                    format!("face {i} references vertex {bad} but only {} exist", vertices.len()),
                ));
            }
            let [v1, v2, v3] = f.map(|k| vertices[k]);
            let c = (v2 - v1).cross(v3 - v2);
            let area = 0.5 * c.norm();
            if area <= MIN_AREA {
                return Err(Error::invalid("faces", format!("face {i} is degenerate (area {area:e})")));
            }
            normals.push(c.normalized());
        }
        Ok(Self { vertices, faces, normals, face_materials })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn face_materials(&self) -> &[Option<String>] {
        &self.face_materials
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        self.faces[face].map(|k| self.vertices[k])
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::from_array([f64::INFINITY; 3]);
        let mut hi = Vec3::from_array([f64::NEG_INFINITY; 3]);
        for v in &self.vertices {
            lo = Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
            hi = Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
        }
        (lo, hi)
    }

    pub fn parse_obj(text: &str, path: &Path) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let mut mats = Vec::new();
        let mut current: Option<String> = None;
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let mut it = body.split_whitespace();
            match it.next() {
                Some("v") => {
                    let xs: Vec<f64> = it
                        .map(|t| t.parse::<f64>().map_err(|e| perr(line, format!("bad coordinate `{t}`: {e}"))))
                        .collect::<Result<_>>()?;
                    if xs.len() != 3 {
                        return Err(perr(line, format!("vertex needs 3 coordinates, got {}", xs.len())));
                    }
                    vertices.push(Vec3::new(xs[0], xs[1], xs[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = it
                        .map(|t| {
                            let head = t.split('/').next().unwrap_or(t);
                            let i: i64 =
                                head.parse().map_err(|e| perr(line, format!("bad face index `{t}`: {e}")))?;
                            let n = vertices.len() as i64;
                            let k = if i < 0 { n + i } else { i - 1 };
                            if k < 0 || k >= n {
                                return Err(perr(line, format!("face index {i} out of range (have {n} vertices)")));
                            }
                            Ok(k as usize)
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() != 3 {
                        return Err(perr(line, format!("only triangles are supported, got {} indices", idx.len())));
                    }
                    faces.push([idx[0], idx[1], idx[2]]);
                    mats.push(current.clone());
                }
                Some("usemtl") => {
                    let name = it.next().ok_or_else(|| perr(line, "usemtl without a name".into()))?;
                    current = Some(name.to_string());
                }
                Some("o") | Some("g") | Some("s") => {}
                Some(other) => return Err(perr(line, format!("unsupported record `{other}`"))),
                None => {}
            }
        }
        Self::with_materials(vertices, faces, mats).map_err(|e| match e {
            Error::Invalid { field, message } => perr(0, format!("{field}: {message}")),
            e => e,
        })
    }

    pub fn load_obj(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_obj(&text, path)
    }

    /// OBJ text with round-trip exact coordinates.
    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        }
        let mut current: Option<&str> = None;
        for (f, m) in self.faces.iter().zip(&self.face_materials) {
            if m.as_deref() != current {
                if let Some(name) = m {
                    let _ = writeln!(s, "usemtl {name}");
                }
                current = m.as_deref();
            }
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }

    /// Axis-aligned box with outward normals, `min`/`max` corners.
    pub fn cuboid(min: Vec3, max: Vec3) -> Result<Self> {
        let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
        let (a, b) = (min, max);
        let vertices = vec![
            v(a.x, a.y, a.z),
            v(b.x, a.y, a.z),
            v(b.x, b.y, a.z),
            v(a.x, b.y, a.z),
            v(a.x, a.y, b.z),
            v(b.x, a.y, b.z),
            v(b.x, b.y, b.z),
            v(a.x, b.y, b.z),
        ];
        let faces = vec![
            [0, 3, 2],
            [0, 2, 1],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [2, 3, 7],
            [2, 7, 6],
            [0, 4, 7],
            [0, 7, 3],
            [1, 2, 6],
            [1, 6, 5],
        ];
        Self::new(vertices, faces)
    }

    /// Closed room with inward-facing walls; floor, ceiling and walls carry the
    /// given material names as per-face overrides.
    pub fn shoebox(size: Vec3, floor: &str, ceiling: &str, walls: &str) -> Result<Self> {
        let outward = Self::cuboid(Vec3::ZERO, size)?;
        let faces: Vec<[usize; 3]> = outward.faces.iter().map(|f| [f[0], f[2], f[1]]).collect();
        let mats = (0..12)
            .map(|i| {
                Some(match i / 2 {
                    0 => floor.to_string(),
                    1 => ceiling.to_string(),
                    _ => walls.to_string(),
                })
            })
            .collect();
        Self::with_materials(outward.vertices, faces, mats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normals_follow_winding() {
        let m = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let n = m.normals()[0];
        assert!((n.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_and_dangling() {
        let pts = vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        assert!(TriMesh::new(pts.clone(), vec![[0, 1, 2]]).is_err());
        assert!(TriMesh::new(pts, vec![[0, 1, 3]]).is_err());
    }

    #[test]
    fn shoebox_normals_point_inward() {
        let size = Vec3::new(4.0, 3.0, 2.5);
        let m = TriMesh::shoebox(size, "floor", "ceil", "wall").unwrap();
        assert_eq!(m.face_count(), 12);
        let centre = Vec3::new(2.0, 1.5, 1.25);
        for f in 0..12 {
            let [a, _, _] = m.triangle(f);
            assert!((centre - a).dot(m.normals()[f]) > 0.0, "face {f}");
        }
        assert_eq!(m.face_materials()[0].as_deref(), Some("floor"));
        assert_eq!(m.face_materials()[2].as_deref(), Some("ceil"));
        assert_eq!(m.face_materials()[11].as_deref(), Some("wall"));
    }

    #[test]
    fn obj_round_trip_is_exact() {
        let m = TriMesh::shoebox(Vec3::new(4.1, 3.3, 2.7), "a", "b", "c").unwrap();
        let back = TriMesh::parse_obj(&m.to_obj(), Path::new("mem.obj")).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn obj_errors_carry_line_numbers() {
        let err = TriMesh::parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n", Path::new("x.obj")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
        assert!(TriMesh::parse_obj("vt 0 0\n", Path::new("x.obj")).is_err());
    }
}
