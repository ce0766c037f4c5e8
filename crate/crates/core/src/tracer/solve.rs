//! Exact specular geometry for a fixed face sequence, and its soft visibility.
//!
//! The endpoint is mirrored through each face plane in turn; tracing back from
//! the receiver toward the images is a ray/plane solve per face, so the
//! interaction points are smooth functions of the transceiver positions and
//! object offsets for as long as the face sequence is kept.

use super::geom::EPS_GEO;
use crate::math::{sigmoid, Scalar, V3};
use crate::vars::WorldFaces;

/// Paths whose visibility falls below this are dropped.
pub const PRUNE_VISIBILITY: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct SolvedPath<S> {
    /// `Q_0` (transmitter element) through `Q_{K+1}` (receiver element).
    pub points: Vec<V3<S>>,
    /// Smallest signed clearance over all reflection and occlusion tests;
    /// `None` when nothing constrains the path.
    pub margin: Option<S>,
    pub visibility: S,
    pub length: S,
}

impl<S: Scalar> SolvedPath<S> {
    pub fn segment_dirs(&self) -> Vec<V3<S>> {
        self.points.windows(2).map(|w| (w[1] - w[0]).normalized()).collect()
    }
}

fn mirror<S: Scalar>(p: V3<S>, faces: &WorldFaces<S>, f: usize) -> V3<S> {
    let face = &faces.faces[f];
    let d = face.plane_distance(p);
    p - V3::from_f64(face.n).scale(d * 2.0)
}

/// Specular path `tx -> faces[key[0]] -> ... -> rx`, or `None` when the face
/// sequence admits no geometrically valid reflection chain.
pub fn solve_path<S: Scalar>(
    key: &[u32],
    tx: V3<S>,
    rx: V3<S>,
    faces: &WorldFaces<S>,
    soft_width: f64,
) -> Option<SolvedPath<S>> {
    let k = key.len();
    let mut images = Vec::with_capacity(k + 1);
    images.push(tx);
    for &f in key {
        let last = *images.last().expect("non-empty");
        images.push(mirror(last, faces, f as usize));
    }

    let mut rev = Vec::with_capacity(k);
    let mut p = rx;
    for i in (0..k).rev() {
        let face = &faces.faces[key[i] as usize];
        let dir = images[i + 1] - p;
        let denom = dir.dot_f(face.n);
        if denom.val().abs() < 1e-12 {
            return None;
        }
        let t = (face.v[0] - p).dot_f(face.n) / denom;
        if !(t.val() > 0.0 && t.val() < 1.0) {
            return None;
        }
        p = p + dir.scale(t);
        rev.push(p);
    }

    let mut points = Vec::with_capacity(k + 2);
    points.push(tx);
    points.extend(rev.into_iter().rev());
    points.push(rx);

    let mut length = S::zero();
    for w in points.windows(2) {
        let l = (w[1] - w[0]).norm();
        if l.val() <= EPS_GEO {
            return None;
        }
        length += l;
    }

    let mut margin: Option<S> = None;
    let mut push = |m: S| {
        margin = Some(match margin {
            None => m,
            Some(cur) => cur.min_s(m),
        });
    };

    // Reflection points must sit on their triangles, with both neighbours in
    // front of the same side of the plane.
    for i in 0..k {
        let face = &faces.faces[key[i] as usize];
        let before = face.plane_distance(points[i]).val();
        let after = face.plane_distance(points[i + 2]).val();
        if before * after <= 0.0 || before.abs() <= EPS_GEO || after.abs() <= EPS_GEO {
            return None;
        }
        push(face.edge_margin(points[i + 1]));
    }

    // Occlusion: every face plane strictly crossed by a segment contributes
    // minus the in-triangle depth of the crossing point.
    for (s, w) in points.windows(2).enumerate() {
        let skip_a = if s > 0 { Some(key[s - 1] as usize) } else { None };
        let skip_b = if s < k { Some(key[s] as usize) } else { None };
        for (fi, face) in faces.faces.iter().enumerate() {
            if Some(fi) == skip_a || Some(fi) == skip_b {
                continue;
            }
            let s0 = face.plane_distance(w[0]);
            let s1 = face.plane_distance(w[1]);
            let (a, b) = (s0.val(), s1.val());
            if a * b >= 0.0 || a.abs() <= EPS_GEO || b.abs() <= EPS_GEO {
                continue;
            }
            let c = w[0] + (w[1] - w[0]).scale(s0 / (s0 - s1));
            push(-face.edge_margin(c));
        }
    }

    let visibility = match margin {
        Some(m) => sigmoid(m / soft_width),
        None => S::one(),
    };
    Some(SolvedPath { points, margin, visibility, length })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::vars::Face;

    /// Two triangles forming the square [-10,10]^2 at height z.
    fn plane(z: f64, n: f64) -> Vec<Face<f64>> {
        let p = |x: f64, y: f64| Vec3::new(x, y, z);
        vec![
            Face { v: [p(-10.0, -10.0), p(10.0, -10.0), p(10.0, 10.0)], n: Vec3::new(0.0, 0.0, n), object: 0, material: 0 },
            Face { v: [p(-10.0, -10.0), p(10.0, 10.0), p(-10.0, 10.0)], n: Vec3::new(0.0, 0.0, n), object: 0, material: 0 },
        ]
    }

    fn world(faces: Vec<Face<f64>>) -> WorldFaces<f64> {
        let n = faces.len();
        WorldFaces { faces, ranges: vec![(0, n)] }
    }

    #[test]
    fn floor_bounce_matches_image_geometry() {
        let w = world(plane(0.0, 1.0));
        let tx = Vec3::new(0.0, 1.0, 1.2);
        let rx = Vec3::new(4.0, 1.0, 1.2);
        // The specular point (2, 1, 0) lies in face 0 (x >= y).
        let p = solve_path(&[0], tx, rx, &w, 0.02).unwrap();
        assert!((p.points[1] - Vec3::new(2.0, 1.0, 0.0)).norm() < 1e-12);
        assert!((p.length - (16.0f64 + 2.4 * 2.4).sqrt()).abs() < 1e-12);
        assert!(p.visibility > 0.999_999);
        // Same plane, other triangle: specular point outside, heavily suppressed.
        let q = solve_path(&[1], tx, rx, &w, 0.02).unwrap();
        assert!(q.visibility < 1e-3);
    }

    #[test]
    fn blocked_line_of_sight_is_suppressed() {
        // Wall x = 2 spanning y,z in [-10, 10].
        let p = |y: f64, z: f64| Vec3::new(2.0, y, z);
        let faces = vec![
            Face { v: [p(-10.0, -10.0), p(10.0, -10.0), p(10.0, 10.0)], n: Vec3::new(1.0, 0.0, 0.0), object: 0, material: 0 },
            Face { v: [p(-10.0, -10.0), p(10.0, 10.0), p(-10.0, 10.0)], n: Vec3::new(1.0, 0.0, 0.0), object: 0, material: 0 },
        ];
        let w = world(faces);
        let los = solve_path(&[], Vec3::new(0.0, 0.0, 1.0), Vec3::new(4.0, 0.0, 1.0), &w, 0.02).unwrap();
        assert!(los.visibility < 1e-3);
        assert!(los.margin.unwrap() < 0.0);
    }

    #[test]
    fn wrong_side_is_rejected() {
        let w = world(plane(0.0, 1.0));
        assert!(solve_path(&[0], Vec3::new(0.0, 1.0, 1.0), Vec3::new(4.0, 1.0, -1.0), &w, 0.02).is_none());
    }

    #[test]
    fn free_space_has_no_constraints() {
        let w = world(Vec::new());
        let p = solve_path(&[], Vec3::ZERO, Vec3::new(4.0, 0.0, 0.0), &w, 0.02).unwrap();
        assert!(p.margin.is_none());
        assert_eq!(p.visibility, 1.0);
        assert_eq!(p.length, 4.0);
    }
}
