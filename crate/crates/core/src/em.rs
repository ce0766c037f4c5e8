//! Polarized field transport along a specular path: antenna launch field,
//! per-bounce basis change and Fresnel reflection, spherical spreading.
//!
//! The field is carried as two components in a transverse basis
//! `(e_s, e_p)` with `e_s x e_p = d`. At a bounce the components are rotated
//! into `(e_perp, e_par)` with `e_perp = d_in x n / |d_in x n|` and
//! `e_par = d x e_perp`, scaled by `(r_perp, r_par)`, and carried on in the
//! outgoing basis `(e_perp, d_out x e_perp)`.

use num_complex::{Complex, Complex64};

use crate::error::{Error, Result};
use crate::math::{cscale, csqrt, cx, Mat3, Scalar, Vec3, EPSILON_0, SPEED_OF_LIGHT, V3};
use crate::scene::{AntennaPattern, Scene, Transceiver};
use crate::tracer::PathRecord;

/// `eps_r - j sigma / (2 pi f eps_0)` without range checks.
pub fn permittivity<S: Scalar>(eps_r: S, sigma: S, f: f64) -> Complex<S> {
    Complex::new(eps_r, -(sigma / (std::f64::consts::TAU * f * EPSILON_0)))
}

/// Complex relative permittivity of a material at frequency `f` (Hz).
pub fn complex_permittivity(eps_r: f64, sigma: f64, f: f64) -> Result<Complex64> {
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::invalid("f", format!("frequency must be positive, got {f}")));
    }
    if !(eps_r >= 1.0) || !(sigma >= 0.0) {
        return Err(Error::invalid("material", format!("need eps_r >= 1 and sigma >= 0, got {eps_r}, {sigma}")));
    }
    Ok(permittivity(eps_r, sigma, f))
}

/// `(r_perp, r_par)` for incidence cosine `cos` without range checks.
pub fn fresnel_coeffs<S: Scalar>(cos: S, eta: Complex<S>) -> (Complex<S>, Complex<S>) {
    let sin2 = S::one() - cos * cos;
    let root = csqrt(eta - cx(sin2));
    let c = cx(cos);
    let ec = eta * c;
    let ratio = |a: Complex<S>, b: Complex<S>| {
        // Only reachable at grazing incidence on an index-matched surface.
        if (a + b).norm_sqr().val() == 0.0 {
            cx(S::zero())
        } else {
            (a - b) / (a + b)
        }
    };
    (ratio(c, root), ratio(ec, root))
}

/// Fresnel reflection coefficients `(r_perp, r_par)`.
pub fn fresnel(cos: f64, eta: Complex64) -> Result<(Complex64, Complex64)> {
    if !(0.0..=1.0).contains(&cos) {
        return Err(Error::invalid("cos", format!("incidence cosine must be in [0, 1], got {cos}")));
    }
    if !(eta.re.is_finite() && eta.im.is_finite()) {
        return Err(Error::invalid("eta", "permittivity must be finite"));
    }
    Ok(fresnel_coeffs(cos, eta))
}

/// 2x2 complex matrix acting on `(E_s, E_p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jones2<S>(pub [[Complex<S>; 2]; 2]);

impl<S: Scalar> Jones2<S> {
    pub fn identity() -> Self {
        let (o, z) = (cx(S::one()), cx(S::zero()));
        Self([[o, z], [z, o]])
    }

    pub fn real(m: [[S; 2]; 2]) -> Self {
        Self([[cx(m[0][0]), cx(m[0][1])], [cx(m[1][0]), cx(m[1][1])]])
    }

    pub fn diag(a: Complex<S>, b: Complex<S>) -> Self {
        let z = cx(S::zero());
        Self([[a, z], [z, b]])
    }

    /// `self * o`: apply `o` first.
    pub fn mul(&self, o: &Self) -> Self {
        let (a, b) = (&self.0, &o.0);
        let e = |i: usize, j: usize| a[i][0] * b[0][j] + a[i][1] * b[1][j];
        Self([[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]])
    }

    pub fn apply(&self, v: [Complex<S>; 2]) -> [Complex<S>; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }
}

/// Perpendicular axis of the plane of incidence. At normal incidence the
/// fallback axis is projected orthogonally to `d_in` instead.
pub fn perpendicular_axis<S: Scalar>(d_in: V3<S>, n: Vec3, fallback: Vec3) -> V3<S> {
    let c = d_in.cross(V3::from_f64(n));
    if c.norm().val() >= 1e-9 {
        return c.normalized();
    }
    let mut axis = fallback;
    if d_in.val().cross(axis).norm() < 1e-6 {
        axis = Vec3::new(axis.z, axis.x, axis.y);
    }
    let a = V3::<S>::from_f64(axis);
    (a - d_in.scale(d_in.dot(a))).normalized()
}

fn rotation<S: Scalar>(e_perp: V3<S>, e_par: V3<S>, e_s: V3<S>, e_p: V3<S>) -> [[S; 2]; 2] {
    [[e_perp.dot(e_s), e_perp.dot(e_p)], [e_par.dot(e_s), e_par.dot(e_p)]]
}

/// Real rotation taking components in `(e_s, e_p)` into the incidence frame
/// `(e_perp, e_par)` of a ray travelling along `d_in` onto a surface with
/// normal `n`. `fallback` is the horizontal axis used at normal incidence.
pub fn basis_rotation(d_in: Vec3, n: Vec3, e_s: Vec3, e_p: Vec3, fallback: Vec3) -> Jones2<f64> {
    let e_perp = perpendicular_axis(d_in, n, fallback);
    Jones2::real(rotation(e_perp, d_in.cross(e_perp), e_s, e_p))
}

/// Polar unit vectors `(theta_hat, phi_hat)` of direction `d` (world frame)
/// with respect to `frame`, returned in world coordinates, and `sin(theta)`.
pub fn polar_basis<S: Scalar>(frame: &Mat3, d: V3<S>) -> (V3<S>, V3<S>, S) {
    let l = frame.transpose().apply(d);
    let rho = (l.x * l.x + l.y * l.y).sqrt();
    let (th, ph) = if rho.val() > 1e-12 {
        (
            V3::new(l.z * l.x / rho, l.z * l.y / rho, -rho),
            V3::new(-(l.y / rho), l.x / rho, S::zero()),
        )
    } else {
        let s = if l.z.val() >= 0.0 { 1.0 } else { -1.0 };
        (V3::from_f64(Vec3::new(s, 0.0, 0.0)), V3::from_f64(Vec3::new(0.0, 1.0, 0.0)))
    };
    (frame.apply(th), frame.apply(ph), rho)
}

/// Field gain of a pattern on the `theta_hat` component.
pub fn pattern_gain<S: Scalar>(pattern: AntennaPattern, sin_theta: S) -> S {
    match pattern {
        AntennaPattern::IsotropicVertical => S::one(),
        AntennaPattern::ShortDipole => sin_theta,
    }
}

/// Frequency-independent part of a path's transfer: geometry, bases and
/// antenna projections. Fresnel terms are evaluated per frequency.
#[derive(Clone, Debug)]
pub struct PathOptics<S> {
    /// Per bounce: incidence cosine, basis rotation, material index.
    pub bounces: Vec<(S, [[S; 2]; 2], usize)>,
    /// Launch components in the departure basis.
    pub launch: [S; 2],
    /// Receiver projection of the final-basis components.
    pub projection: [S; 2],
    pub length: S,
    pub visibility: S,
}

impl<S: Scalar> PathOptics<S> {
    /// `points` are `Q_0..Q_{K+1}`; `normals` and `materials` are per bounce.
    pub fn new(
        points: &[V3<S>],
        normals: &[Vec3],
        materials: &[usize],
        tx: &Transceiver,
        rx: &Transceiver,
        visibility: S,
    ) -> Self {
        let mut length = S::zero();
        let dirs: Vec<V3<S>> = points
            .windows(2)
            .map(|w| {
                let v = w[1] - w[0];
                let l = v.norm();
                length += l;
                v.scale(S::one() / l)
            })
            .collect();
        let fallback = tx.orientation().column(0);
        let (mut e_s, mut e_p, st) = polar_basis(tx.orientation(), dirs[0]);
        let launch = [pattern_gain(tx.pattern, st), S::zero()];
        let mut bounces = Vec::with_capacity(normals.len());
        for (k, &n) in normals.iter().enumerate() {
            let (d_in, d_out) = (dirs[k], dirs[k + 1]);
            let e_perp = perpendicular_axis(d_in, n, fallback);
            let rot = rotation(e_perp, d_in.cross(e_perp), e_s, e_p);
            let cos = d_in.dot_f(n).abs();
            bounces.push((cos, rot, materials[k]));
            e_s = e_perp;
            e_p = d_out.cross(e_perp);
        }
        let u = -*dirs.last().expect("at least one segment");
        let (th, _, sr) = polar_basis(rx.orientation(), u);
        let g = pattern_gain(rx.pattern, sr);
        let projection = [th.dot(e_s) * g, th.dot(e_p) * g];
        Self { bounces, launch, projection, length, visibility }
    }

    /// Field at the receiver in the final basis, including spreading and
    /// visibility. `etas` holds the permittivity of each material at `f`.
    pub fn field(&self, f: f64, etas: &[Complex<S>]) -> [Complex<S>; 2] {
        let mut c = [cx(self.launch[0]), cx(self.launch[1])];
        for (cos, rot, m) in &self.bounces {
            let (rs, rp) = fresnel_coeffs(*cos, etas[*m]);
            let d = Jones2::real(*rot);
            c = Jones2::diag(rs, rp).mul(&d).apply(c);
        }
        let lambda = SPEED_OF_LIGHT / f;
        let a = self.visibility * lambda / (self.length * (4.0 * std::f64::consts::PI));
        [cscale(c[0], a), cscale(c[1], a)]
    }

    /// Received complex amplitude (no delay phase).
    pub fn amplitude(&self, f: f64, etas: &[Complex<S>]) -> Complex<S> {
        let c = self.field(f, etas);
        cscale(c[0], self.projection[0]) + cscale(c[1], self.projection[1])
    }
}

fn record_optics(path: &PathRecord, scene: &Scene) -> PathOptics<f64> {
    PathOptics::new(&path.points, &path.normals, &path.materials, &scene.tx, &scene.rx, path.visibility)
}

fn material_etas(scene: &Scene, f: f64) -> Result<Vec<Complex64>> {
    scene.materials.values().map(|m| complex_permittivity(m.eps_r, m.sigma, f)).collect()
}

/// Field of a path at the receiver in its final transverse basis, including
/// spreading `lambda / (4 pi L)` and visibility; the delay phase is not applied.
pub fn path_transfer(path: &PathRecord, scene: &Scene, f: f64) -> Result<[Complex64; 2]> {
    if path.materials.iter().any(|&m| m >= scene.materials.len()) {
        return Err(Error::invalid("path.materials", "material index out of range"));
    }
    Ok(record_optics(path, scene).field(f, &material_etas(scene, f)?))
}

/// Received complex amplitude of a path after receiver-pattern projection.
pub fn path_coefficient(path: &PathRecord, scene: &Scene, f: f64) -> Result<Complex64> {
    if path.materials.iter().any(|&m| m >= scene.materials.len()) {
        return Err(Error::invalid("path.materials", "material index out of range"));
    }
    Ok(record_optics(path, scene).amplitude(f, &material_etas(scene, f)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Dual;
    use crate::scene::{Material, SceneObject, TriMesh};
    use crate::tracer::trace_paths;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn permittivity_examples() {
        assert_eq!(complex_permittivity(5.24, 0.0, 5e9).unwrap(), c(5.24));
        assert!(complex_permittivity(5.0, 0.1, 5e9).unwrap().im < 0.0);
        let a = complex_permittivity(5.0, 0.1, 1e9).unwrap().im;
        let b = complex_permittivity(5.0, 0.1, 1e10).unwrap().im;
        assert!(a < b && b < 0.0);
        assert!(complex_permittivity(5.0, 0.0, 0.0).is_err());
        assert!(complex_permittivity(0.5, 0.0, 1e9).is_err());
    }

    #[test]
    fn fresnel_examples() {
        let (rs, rp) = fresnel(1.0, c(4.0)).unwrap();
        assert!((rs - c(-1.0 / 3.0)).norm() < 1e-12);
        assert!((rp - c(1.0 / 3.0)).norm() < 1e-12);
        let (rs, rp) = fresnel(0.0, Complex64::new(5.24, -0.3)).unwrap();
        assert!((rs - c(-1.0)).norm() < 1e-12 && (rp - c(-1.0)).norm() < 1e-12);
        for cos in [0.0, 0.3, 0.7, 1.0] {
            let (rs, rp) = fresnel(cos, c(1.0)).unwrap();
            assert!(rs.norm() < 1e-12 && rp.norm() < 1e-12);
        }
        assert!(fresnel(1.1, c(4.0)).is_err());
        assert!(fresnel(-0.1, c(4.0)).is_err());
    }

    #[test]
    fn fresnel_derivative_in_eps() {
        let eta = Complex::new(Dual::variable(5.0, 0), Dual::constant(-0.2));
        let (rs, _) = fresnel_coeffs(Dual::constant(0.6), eta);
        let h = 1e-6;
        let f = |e: f64| fresnel(0.6, Complex64::new(e, -0.2)).unwrap().0;
        let fd = (f(5.0 + h) - f(5.0 - h)) / (2.0 * h);
        assert!((rs.re.d[0] - fd.re).abs() < 1e-8 && (rs.im.d[0] - fd.im).abs() < 1e-8);
    }

    #[test]
    fn rotation_examples() {
        let d = Vec3::new(1.0, 0.0, 0.0);
        let n = Vec3::new(0.0, 0.0, 1.0);
        let e_perp = d.cross(n).normalized();
        let e_par = d.cross(e_perp);
        let id = basis_rotation(d, n, e_perp, e_par, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(id, Jones2::identity());
        // Basis rotated a quarter turn about d: e_s = -e_par, e_p = e_perp.
        let q = basis_rotation(d, n, -e_par, e_perp, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(q, Jones2::real([[0.0, 1.0], [-1.0, 0.0]]));
    }

    #[test]
    fn normal_incidence_uses_fallback() {
        let d = Vec3::new(0.0, 0.0, -1.0);
        let e = perpendicular_axis(d, Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 0.0));
        assert!((e - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    fn unit(v: [f64; 3]) -> Vec3 {
        Vec3::from_array(v).normalized()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn rotation_is_orthogonal(
            a in prop::array::uniform3(-1.0f64..1.0),
            b in prop::array::uniform3(-1.0f64..1.0),
            turn in 0.0f64..std::f64::consts::TAU,
        ) {
            let d = unit(a);
            let n = unit(b);
            prop_assume!(d.norm() > 0.5 && n.norm() > 0.5 && d.cross(n).norm() > 1e-3);
            let (th, ph, _) = polar_basis(&Mat3::IDENTITY, d);
            let (s, cth) = turn.sin_cos();
            let e_s = th.scale(cth) + ph.scale(s);
            let e_p = d.cross(e_s);
            let m = basis_rotation(d, n, e_s, e_p, Vec3::new(1.0, 0.0, 0.0)).0;
            let r = [[m[0][0].re, m[0][1].re], [m[1][0].re, m[1][1].re]];
            for i in 0..2 {
                for j in 0..2 {
                    let dot = r[0][i] * r[0][j] + r[1][i] * r[1][j];
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot - want).abs() < 1e-12);
                }
            }
            prop_assert!((r[0][0] * r[1][1] - r[0][1] * r[1][0] - 1.0).abs() < 1e-12);
        }

        #[test]
        fn fresnel_is_passive(cos in 0.0f64..=1.0, er in 1.0f64..20.0, im in -50.0f64..=0.0) {
            let (rs, rp) = fresnel(cos, Complex64::new(er, im)).unwrap();
            prop_assert!(rs.norm() <= 1.0 + 1e-12 && rp.norm() <= 1.0 + 1e-12);
        }
    }

    fn floor_scene(tx: Vec3, rx: Vec3, eps: f64) -> Scene {
        let mut s = Scene::free_space(tx, rx);
        s.tx.array.count = 1;
        s.sim.max_depth = 1;
        s.sim.n_rays = 2000;
        s.add_material(Material::new("floor", eps, 0.0).unwrap());
        let m = TriMesh::cuboid(Vec3::new(-50.0, -50.0, -1.0), Vec3::new(50.0, 50.0, 0.0)).unwrap();
        s.add_object(SceneObject {
            id: "floor".into(),
            mesh: Arc::new(m),
            material: "floor".into(),
            position: Vec3::ZERO,
            movable: false,
            z_locked: true,
        })
        .unwrap();
        s
    }

    #[test]
    fn friis_los() {
        let s = Scene::free_space(Vec3::new(0.0, 0.0, 1.0), Vec3::new(4.0, 0.0, 1.0));
        let p = trace_paths(&s, 0, 0);
        let g = path_coefficient(&p[0], &s, 5e9).unwrap();
        let want = SPEED_OF_LIGHT / 5e9 / (4.0 * std::f64::consts::PI * 4.0);
        assert!((g.norm() - want).abs() < 1e-12 * want);
        assert!((want - 1.193e-3).abs() < 1e-6);
        let t = path_transfer(&p[0], &s, 5e9).unwrap();
        assert!((t[0].norm() - want).abs() < 1e-12 * want && t[1].norm() == 0.0);
    }

    #[test]
    fn normal_incidence_bounce_is_a_third() {
        // Receiver directly above the transmitter: the floor path hits at normal incidence.
        let s = floor_scene(Vec3::new(2.0, -1.0, 1.0), Vec3::new(2.0, -1.0, 3.0), 4.0);
        let p = trace_paths(&s, 0, 0);
        let bounce = p.iter().find(|r| r.depth() == 1).unwrap();
        assert!((bounce.cosines[0] - 1.0).abs() < 1e-12);
        let f = 5e9;
        let t = path_transfer(bounce, &s, f).unwrap();
        let a = SPEED_OF_LIGHT / f / (4.0 * std::f64::consts::PI * 4.0);
        // Launch field -x, incidence frame +x: (-1) * (-1/3).
        assert!((t[0] - c(a / 3.0)).norm() < 1e-12 * a, "{t:?}");
        assert!(t[1].norm() < 1e-15);
    }

    #[test]
    fn reciprocity_of_magnitudes() {
        let a = Vec3::new(0.3, -0.4, 1.1);
        let b = Vec3::new(3.6, 1.2, 1.7);
        let fwd = floor_scene(a, b, 5.24);
        let rev = floor_scene(b, a, 5.24);
        let pf = trace_paths(&fwd, 0, 0);
        let pr = trace_paths(&rev, 0, 0);
        assert_eq!(pf.len(), pr.len());
        for (x, y) in pf.iter().zip(&pr) {
            assert_eq!(x.key, y.key);
            let gx = path_coefficient(x, &fwd, 5e9).unwrap().norm();
            let gy = path_coefficient(y, &rev, 5e9).unwrap().norm();
            assert!((gx - gy).abs() <= 1e-9 * gx, "{} {gx} {gy}", x.key);
        }
    }

    #[test]
    fn zero_visibility_gives_zero() {
        let s = Scene::free_space(Vec3::new(0.0, 0.0, 1.0), Vec3::new(4.0, 0.0, 1.0));
        let mut p = trace_paths(&s, 0, 0).remove(0);
        p.visibility = 0.0;
        assert_eq!(path_coefficient(&p, &s, 5e9).unwrap().norm(), 0.0);
    }
}
