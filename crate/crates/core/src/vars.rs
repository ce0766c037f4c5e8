//! Differentiable view of a [`Scene`]: the continuous parameters (object
//! offsets, array origins, material constants) lifted into a [`Scalar`], and
//! the world-space face table derived from them.

use crate::math::{Scalar, Vec3, V3};
use crate::scene::Scene;

/// Continuous scene parameters in scalar type `S`.
#[derive(Clone, Debug)]
pub struct SceneVars<S> {
    /// Per object, aligned with `Scene::objects`.
    pub offsets: Vec<V3<S>>,
    pub tx_origin: V3<S>,
    pub rx_origin: V3<S>,
    /// Per material, in `Scene::materials` key order.
    pub eps_r: Vec<S>,
    pub sigma: Vec<S>,
}

impl<S: Scalar> SceneVars<S> {
    /// All parameters as constants.
    pub fn constant(scene: &Scene) -> Self {
        Self {
            offsets: scene.objects.iter().map(|o| V3::from_f64(o.position)).collect(),
            tx_origin: V3::from_f64(scene.tx.array.origin),
            rx_origin: V3::from_f64(scene.rx.array.origin),
            eps_r: scene.materials.values().map(|m| S::cst(m.eps_r)).collect(),
            sigma: scene.materials.values().map(|m| S::cst(m.sigma)).collect(),
        }
    }
}

/// One world-space triangle.
#[derive(Clone, Copy, Debug)]
pub struct Face<S> {
    pub v: [V3<S>; 3],
    /// Unit normal; translations never change it.
    pub n: Vec3,
    pub object: usize,
    pub material: usize,
}

impl<S: Scalar> Face<S> {
    /// Signed distance from the face plane (positive on the normal side).
    #[inline]
    pub fn plane_distance(&self, p: V3<S>) -> S {
        (p - self.v[0]).dot_f(self.n)
    }

    /// In-plane signed distance to the triangle boundary for a point on (or
    /// projected onto) the face plane: positive inside, negative outside.
    pub fn edge_margin(&self, p: V3<S>) -> S {
        let mut m: Option<S> = None;
        for i in 0..3 {
            let a = self.v[i];
            let b = self.v[(i + 1) % 3];
            let e = b - a;
            let inward = V3::<S>::from_f64(self.n).cross(e);
            let d = (p - a).dot(inward) / e.norm();
            m = Some(match m {
                None => d,
                Some(cur) => cur.min_s(d),
            });
        }
        m.expect("three edges")
    }
}

/// World-space faces of every object, in global face order.
#[derive(Clone, Debug)]
pub struct WorldFaces<S> {
    pub faces: Vec<Face<S>>,
    /// Per object: `(first face, face count)`.
    pub ranges: Vec<(usize, usize)>,
}

impl<S: Scalar> WorldFaces<S> {
    pub fn build(scene: &Scene, vars: &SceneVars<S>) -> Self {
        let mut faces = Vec::with_capacity(scene.face_count());
        let mut ranges = Vec::with_capacity(scene.objects.len());
        let mat_index = |name: &str| {
            scene.materials.keys().position(|k| k == name).expect("scene validated: material exists")
        };
        for (oi, obj) in scene.objects.iter().enumerate() {
            let start = faces.len();
            let off = vars.offsets[oi];
            let default_mat = mat_index(&obj.material);
            for (fi, f) in obj.mesh.faces().iter().enumerate() {
                let v = f.map(|k| V3::<S>::from_f64(obj.mesh.vertices()[k]) + off);
                let material = match &obj.mesh.face_materials()[fi] {
                    Some(name) => mat_index(name),
                    None => default_mat,
                };
                faces.push(Face { v, n: obj.mesh.normals()[fi], object: oi, material });
            }
            ranges.push((start, faces.len() - start));
        }
        Self { faces, ranges }
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }
}

impl WorldFaces<f64> {
    /// Axis-aligned bounds per object.
    pub fn object_bounds(&self) -> Vec<(Vec3, Vec3)> {
        self.ranges
            .iter()
            .map(|&(s, n)| {
                let mut lo = Vec3::from_array([f64::INFINITY; 3]);
                let mut hi = Vec3::from_array([f64::NEG_INFINITY; 3]);
                for f in &self.faces[s..s + n] {
                    for p in f.v {
                        lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
                        hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
                    }
                }
                (lo, hi)
            })
            .collect()
    }
}
