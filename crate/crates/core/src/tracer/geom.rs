//! Ray primitives: ray/triangle intersection, specular reflection and the
//! launch lattice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{Mat3, Vec3};
use crate::vars::{Face, WorldFaces};

/// Self-intersection guard in meters.
pub const EPS_GEO: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub dir: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Self { origin, dir: dir.normalized() }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir.scale(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub face: usize,
    pub t: f64,
    pub point: Vec3,
    /// Weights of the first two vertices: `Q = (1 - m1 - m2) v3 + m1 v1 + m2 v2`.
    pub m1: f64,
    pub m2: f64,
    pub normal: Vec3,
}

/// Solves `origin + t d = (1 - m1 - m2) v3 + m1 v1 + m2 v2` for one face.
/// Returns `(t, m1, m2)` when the ray hits the closed triangle with `t > EPS_GEO`.
pub fn intersect_face(ray: &Ray, face: &Face<f64>) -> Option<(f64, f64, f64)> {
    let [v1, v2, v3] = face.v;
    let e1 = v1 - v3;
    let e2 = v2 - v3;
    let p = ray.dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - v3;
    let m1 = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&m1) {
        return None;
    }
    let q = s.cross(e1);
    let m2 = ray.dir.dot(q) * inv;
    if m2 < 0.0 || m1 + m2 > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > EPS_GEO).then_some((t, m1, m2))
}

fn slab_hit(ray: &Ray, lo: Vec3, hi: Vec3, t_best: f64) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = t_best;
    for a in 0..3 {
        let o = ray.origin.get(a);
        let d = ray.dir.get(a);
        let (l, h) = (lo.get(a) - EPS_GEO, hi.get(a) + EPS_GEO);
        if d.abs() < 1e-300 {
            if o < l || o > h {
                return false;
            }
            continue;
        }
        let (mut ta, mut tb) = ((l - o) / d, (h - o) / d);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Nearest hit over a face set, with per-object bounding-box culling.
#[derive(Clone, Debug)]
pub struct FaceSet {
    pub world: WorldFaces<f64>,
    bounds: Vec<(Vec3, Vec3)>,
}

impl FaceSet {
    pub fn new(world: WorldFaces<f64>) -> Self {
        let bounds = world.object_bounds();
        Self { world, bounds }
    }

    pub fn faces(&self) -> &[Face<f64>] {
        &self.world.faces
    }
}

/// Nearest intersection of `ray` with any face, ties broken by lowest face id.
pub fn intersect(ray: &Ray, set: &FaceSet) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (oi, &(start, count)) in set.world.ranges.iter().enumerate() {
        let (lo, hi) = set.bounds[oi];
        let t_best = best.map_or(f64::INFINITY, |h| h.t);
        if !slab_hit(ray, lo, hi, t_best) {
            continue;
        }
        for fi in start..start + count {
            let face = &set.world.faces[fi];
            if let Some((t, m1, m2)) = intersect_face(ray, face) {
                if best.is_none_or(|b| t < b.t) {
                    best = Some(Hit { face: fi, t, point: ray.at(t), m1, m2, normal: face.n });
                }
            }
        }
    }
    best
}

/// Specular reflection `d - 2 (d.n) n`.
#[inline]
pub fn reflect(d: Vec3, n: Vec3) -> Vec3 {
    d - n.scale(2.0 * d.dot(n))
}

const PLASTIC: f64 = 1.324_717_957_244_746;

/// Point `i` of the nested golden-ratio (R2) lattice on the unit sphere.
/// The first `n` points of any longer lattice are exactly the `n`-point lattice.
pub fn lattice_point(i: usize) -> Vec3 {
    let a1 = 1.0 / PLASTIC;
    let a2 = 1.0 / (PLASTIC * PLASTIC);
    let u = (0.5 + a1 * i as f64).fract();
    let v = (0.5 + a2 * i as f64).fract();
    let z = 1.0 - 2.0 * u;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = std::f64::consts::TAU * v;
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Uniformly random rotation derived from `seed`.
pub fn seed_rotation(seed: u64) -> Mat3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (t2, t3) = (std::f64::consts::TAU * u2, std::f64::consts::TAU * u3);
    let (w, x, y, z) = (b * t3.cos(), a * t2.sin(), a * t2.cos(), b * t3.sin());
    Mat3([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])
}
