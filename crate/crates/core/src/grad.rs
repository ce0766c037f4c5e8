//! Derivatives of CSI losses with respect to selected scene parameters.
//!
//! Forward mode: each pass seeds up to [`LANES`] parameters as dual
//! tangents and re-synthesizes the CSI along the path keys found for the
//! primal scene, so every derivative is exact for that frozen key set.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;

use crate::channel::{synthesize, CsiTensor, SynthStats};
use crate::error::{Error, Result};
use crate::math::{Dual, Scalar, LANES};
use crate::scene::Scene;
use crate::tracer::Tracer;
use crate::vars::SceneVars;

/// A scalar loss of the simulated CSI, evaluated in any scalar type.
pub trait CsiLoss: Sync {
    fn eval<S: Scalar>(&self, h: &CsiTensor<S>) -> S;
}

/// `sum |h - h_ref|^2 / sum |h_ref|^2` against a fixed reference.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiMse {
    pub reference: CsiTensor,
    scale: f64,
}

impl CsiMse {
    pub fn new(reference: CsiTensor) -> Self {
        let p: f64 = reference.data.iter().map(|z| z.norm_sqr()).sum();
        Self { scale: if p > 0.0 { 1.0 / p } else { 1.0 }, reference }
    }
}

impl CsiLoss for CsiMse {
    fn eval<S: Scalar>(&self, h: &CsiTensor<S>) -> S {
        let mut acc = S::zero();
        for (z, r) in h.data.iter().zip(&self.reference.data) {
            let d = *z - Complex::new(S::cst(r.re), S::cst(r.im));
            acc += d.norm_sqr();
        }
        acc * self.scale
    }
}

/// Kind of a selectable continuous parameter; axes are 0, 1, 2 for x, y, z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamKind {
    ObjectTranslation(usize),
    TxPosition(usize),
    RxPosition(usize),
    MaterialEps,
    MaterialSigma,
}

/// One parameter: kind plus object id or material name (empty for TX/RX).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Param {
    pub kind: ParamKind,
    pub target: String,
}

const AXES: [&str; 3] = ["x", "y", "z"];

fn axis(s: &str) -> Result<usize> {
    AXES.iter().position(|a| *a == s).ok_or_else(|| Error::Config(format!("bad axis `{s}`, expected x, y or z")))
}

impl Param {
    pub fn object(id: &str, axis: usize) -> Self {
        Self { kind: ParamKind::ObjectTranslation(axis), target: id.into() }
    }

    pub fn tx(axis: usize) -> Self {
        Self { kind: ParamKind::TxPosition(axis), target: String::new() }
    }

    pub fn rx(axis: usize) -> Self {
        Self { kind: ParamKind::RxPosition(axis), target: String::new() }
    }

    pub fn eps(material: &str) -> Self {
        Self { kind: ParamKind::MaterialEps, target: material.into() }
    }

    pub fn sigma(material: &str) -> Self {
        Self { kind: ParamKind::MaterialSigma, target: material.into() }
    }
}

/// `object:<id>:<axis>`, `tx:<axis>`, `rx:<axis>`, `eps:<material>`, `sigma:<material>`.
impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["object", id, a] => Ok(Param::object(id, axis(a)?)),
            ["tx", a] => Ok(Param::tx(axis(a)?)),
            ["rx", a] => Ok(Param::rx(axis(a)?)),
            ["eps", m] => Ok(Param::eps(m)),
            ["sigma", m] => Ok(Param::sigma(m)),
            _ => Err(Error::Config(format!(
                "bad parameter `{s}`; expected object:<id>:<axis>, tx:<axis>, rx:<axis>, eps:<material> or sigma:<material>"
            ))),
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ParamKind::ObjectTranslation(a) => write!(f, "object:{}:{}", self.target, AXES[a]),
            ParamKind::TxPosition(a) => write!(f, "tx:{}", AXES[a]),
            ParamKind::RxPosition(a) => write!(f, "rx:{}", AXES[a]),
            ParamKind::MaterialEps => write!(f, "eps:{}", self.target),
            ParamKind::MaterialSigma => write!(f, "sigma:{}", self.target),
        }
    }
}

/// Ordered list of parameters to differentiate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSelector {
    pub params: Vec<Param>,
}

impl ParamSelector {
    pub fn new(params: Vec<Param>) -> Self {
        Self { params }
    }

    pub fn parse_list(items: &[&str]) -> Result<Self> {
        Ok(Self { params: items.iter().map(|s| s.parse()).collect::<Result<_>>()? })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Targets exist; objects are movable and z is never selected on a
    /// height-locked object.
    pub fn validate(&self, scene: &Scene) -> Result<()> {
        for p in &self.params {
            match p.kind {
                ParamKind::ObjectTranslation(a) => {
                    let o = scene.object(&p.target)?;
                    if !o.movable {
                        return Err(Error::Config(format!("object `{}` is not movable", p.target)));
                    }
                    if a == 2 && o.z_locked {
                        return Err(Error::HeightLocked(p.target.clone()));
                    }
                }
                ParamKind::MaterialEps | ParamKind::MaterialSigma => {
                    scene.material(&p.target)?;
                }
                ParamKind::TxPosition(_) | ParamKind::RxPosition(_) => {}
            }
        }
        Ok(())
    }

    /// Current values in `scene`.
    pub fn values(&self, scene: &Scene) -> Result<Vec<f64>> {
        self.params
            .iter()
            .map(|p| {
                Ok(match p.kind {
                    ParamKind::ObjectTranslation(a) => scene.object(&p.target)?.position.get(a),
                    ParamKind::TxPosition(a) => scene.tx.array.origin.get(a),
                    ParamKind::RxPosition(a) => scene.rx.array.origin.get(a),
                    ParamKind::MaterialEps => scene.material(&p.target)?.eps_r,
                    ParamKind::MaterialSigma => scene.material(&p.target)?.sigma,
                })
            })
            .collect()
    }

    /// Writes `values` into `scene` (range-checked by the scene setters).
    pub fn apply(&self, scene: &mut Scene, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::Shape(format!("{} values for {} parameters", values.len(), self.len())));
        }
        for (p, &v) in self.params.iter().zip(values) {
            match p.kind {
                ParamKind::ObjectTranslation(a) => {
                    let mut pos = scene.object(&p.target)?.position;
                    pos.set(a, v);
                    scene.set_object_position(&p.target, pos)?;
                }
                ParamKind::TxPosition(a) => scene.tx.array.origin.set(a, v),
                ParamKind::RxPosition(a) => scene.rx.array.origin.set(a, v),
                ParamKind::MaterialEps => {
                    let s = scene.material(&p.target)?.sigma;
                    scene.set_material(&p.target, v, s)?;
                }
                ParamKind::MaterialSigma => {
                    let e = scene.material(&p.target)?.eps_r;
                    scene.set_material(&p.target, e, v)?;
                }
            }
        }
        Ok(())
    }

    /// Scene variables with the selected parameters replaced by `values`.
    pub fn vars<S: Scalar>(&self, scene: &Scene, values: &[S]) -> Result<SceneVars<S>> {
        let mut vars = SceneVars::<S>::constant(scene);
        let mat = |name: &str| {
            scene.materials.keys().position(|k| k == name).ok_or_else(|| Error::UnknownMaterial(name.into()))
        };
        for (p, &v) in self.params.iter().zip(values) {
            match p.kind {
                ParamKind::ObjectTranslation(a) => vars.offsets[scene.object_index(&p.target)?].set(a, v),
                ParamKind::TxPosition(a) => vars.tx_origin.set(a, v),
                ParamKind::RxPosition(a) => vars.rx_origin.set(a, v),
                ParamKind::MaterialEps => vars.eps_r[mat(&p.target)?] = v,
                ParamKind::MaterialSigma => vars.sigma[mat(&p.target)?] = v,
            }
        }
        Ok(vars)
    }
}

/// Loss value and gradient aligned with the selector.
#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub paths: usize,
    pub pruned: usize,
    /// Largest relative gap between the primal loss and the loss recomputed
    /// in the derivative passes.
    pub primal_gap: f64,
}

/// Loss at the selector values `values` along the keys of `tracer`.
pub fn loss_at<L: CsiLoss>(
    scene: &Scene,
    tracer: &Tracer,
    selector: &ParamSelector,
    values: &[f64],
    loss: &L,
) -> Result<(f64, SynthStats)> {
    let (h, stats) = synthesize(scene, tracer, &selector.vars(scene, values)?)?;
    Ok((loss.eval(&h), stats))
}

/// Loss and exact gradient along the path keys of `tracer` (which should be
/// discovered for `scene`).
pub fn loss_and_grad_with<L: CsiLoss>(
    scene: &Scene,
    tracer: &Tracer,
    selector: &ParamSelector,
    loss: &L,
) -> Result<GradReport> {
    selector.validate(scene)?;
    let x0 = selector.values(scene)?;
    let (l0, stats) = loss_at(scene, tracer, selector, &x0, loss)?;
    if !l0.is_finite() {
        return Err(Error::NonFinite { key: "loss".into(), what: "primal loss".into() });
    }
    let mut gradient = Vec::with_capacity(selector.len());
    let mut primal_gap = 0.0f64;
    for start in (0..selector.len()).step_by(LANES) {
        let end = (start + LANES).min(selector.len());
        let values: Vec<Dual> = x0
            .iter()
            .enumerate()
            .map(|(i, &v)| if (start..end).contains(&i) { Dual::variable(v, i - start) } else { Dual::constant(v) })
            .collect();
        let (h, _) = synthesize(scene, tracer, &selector.vars(scene, &values)?)?;
        let l = loss.eval(&h);
        primal_gap = primal_gap.max((l.v - l0).abs() / l0.abs().max(f64::MIN_POSITIVE));
        for k in 0..end - start {
            let g = l.d[k];
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    key: "loss".into(),
                    what: format!("derivative with respect to {}", selector.params[start + k]),
                });
            }
            gradient.push(g);
        }
    }
    Ok(GradReport { loss: l0, gradient, paths: stats.paths, pruned: stats.pruned, primal_gap })
}

/// Loss and gradient with path discovery on `scene`.
pub fn loss_and_grad<L: CsiLoss>(scene: &Scene, selector: &ParamSelector, loss: &L) -> Result<GradReport> {
    loss_and_grad_with(scene, &Tracer::new(scene), selector, loss)
}

/// Several losses computed from the same CSI.
pub trait CsiLosses: Sync {
    fn eval<S: Scalar>(&self, h: &CsiTensor<S>) -> Vec<S>;
}

/// Values of several losses and their gradients `[loss][param]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiReport {
    pub values: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
    pub stats: SynthStats,
}

/// Evaluates `losses` with the selected parameters set to `x`, differentiating
/// all of them in shared forward passes along the keys of `tracer`.
pub fn multi_loss_and_grad<L: CsiLosses>(
    scene: &Scene,
    tracer: &Tracer,
    selector: &ParamSelector,
    x: &[f64],
    losses: &L,
) -> Result<MultiReport> {
    if selector.is_empty() {
        let (h, stats) = synthesize(scene, tracer, &SceneVars::<f64>::constant(scene))?;
        let values = losses.eval(&h);
        let gradients = vec![Vec::new(); values.len()];
        return Ok(MultiReport { values, gradients, stats });
    }
    let mut values = Vec::new();
    let mut gradients: Vec<Vec<f64>> = Vec::new();
    let mut stats = SynthStats::default();
    for start in (0..selector.len()).step_by(LANES) {
        let end = (start + LANES).min(selector.len());
        let seeded: Vec<Dual> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| if (start..end).contains(&i) { Dual::variable(v, i - start) } else { Dual::constant(v) })
            .collect();
        let (h, st) = synthesize(scene, tracer, &selector.vars(scene, &seeded)?)?;
        let ls = losses.eval(&h);
        if start == 0 {
            values = ls.iter().map(|l| l.v).collect();
            gradients = vec![Vec::with_capacity(selector.len()); ls.len()];
            stats = st;
        }
        for (g, l) in gradients.iter_mut().zip(&ls) {
            g.extend_from_slice(&l.d[..end - start]);
        }
    }
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() || gradients[i].iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { key: "loss".into(), what: format!("loss {i} or its gradient") });
        }
    }
    Ok(MultiReport { values, gradients, stats })
}

/// Central-difference comparison against [`loss_and_grad`].
#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `|a - n| / max(|a|, |n|)`, 0 when both vanish.
    pub rel_error: Vec<f64>,
    pub max_rel_error: f64,
    /// Step too small for the parameter scale: differences are dominated by
    /// rounding and the numbers above are not meaningful.
    pub unreliable: bool,
}

impl FdReport {
    /// Every entry within `rel` relative error, or `abs` absolute error where
    /// both estimates are below `small` in magnitude.
    pub fn passes(&self, rel: f64, abs: f64, small: f64) -> bool {
        !self.unreliable
            && self.analytic.iter().zip(&self.numeric).zip(&self.rel_error).all(|((a, n), e)| {
                if a.abs() < small && n.abs() < small {
                    (a - n).abs() <= abs
                } else {
                    *e <= rel
                }
            })
    }
}

/// Smallest step, relative to `max(1, |theta|)`, for which a central
/// difference is considered meaningful in double precision.
pub const FD_MIN_RELATIVE_STEP: f64 = 1e-8;

pub fn fd_check<L: CsiLoss>(scene: &Scene, selector: &ParamSelector, loss: &L, step: f64) -> Result<FdReport> {
    if !(step > 0.0) {
        return Err(Error::invalid("step", "must be positive"));
    }
    let tracer = Tracer::new(scene);
    let report = loss_and_grad_with(scene, &tracer, selector, loss)?;
    let x0 = selector.values(scene)?;
    let mut numeric = Vec::with_capacity(selector.len());
    let mut unreliable = false;
    for i in 0..selector.len() {
        unreliable |= step < FD_MIN_RELATIVE_STEP * x0[i].abs().max(1.0);
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[i] += step;
        xm[i] -= step;
        let lp = loss_at(scene, &tracer, selector, &xp, loss)?.0;
        let lm = loss_at(scene, &tracer, selector, &xm, loss)?.0;
        numeric.push((lp - lm) / (xp[i] - xm[i]));
    }
    let rel_error: Vec<f64> = report
        .gradient
        .iter()
        .zip(&numeric)
        .map(|(a, n)| {
            let m = a.abs().max(n.abs());
            if m == 0.0 {
                0.0
            } else {
                (a - n).abs() / m
            }
        })
        .collect();
    let max_rel_error = rel_error.iter().copied().fold(0.0, f64::max);
    Ok(FdReport { analytic: report.gradient, numeric, rel_error, max_rel_error, unreliable })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{cabs, Vec3};
    use crate::scene::{Material, SceneObject, TriMesh};
    use std::sync::Arc;

    struct CenterPower;
    impl CsiLoss for CenterPower {
        fn eval<S: Scalar>(&self, h: &CsiTensor<S>) -> S {
            let z = h.get(0, 0, h.ns() / 2);
            z.norm_sqr()
        }
    }

    struct Constant;
    impl CsiLoss for Constant {
        fn eval<S: Scalar>(&self, _: &CsiTensor<S>) -> S {
            S::cst(2.5)
        }
    }

    /// Sum of amplitudes over all entries, scaled to order one.
    struct AmpSum;
    impl CsiLoss for AmpSum {
        fn eval<S: Scalar>(&self, h: &CsiTensor<S>) -> S {
            let mut acc = S::zero();
            for z in &h.data {
                acc += cabs(*z);
            }
            acc * 1e3
        }
    }

    fn los_scene() -> Scene {
        let mut s = Scene::free_space(Vec3::new(0.0, 0.0, 1.0), Vec3::new(4.0, 0.3, 1.1));
        s.tx.array.count = 1;
        s
    }

    fn shoebox() -> Scene {
        let mut s = Scene::free_space(Vec3::new(1.0, 1.3, 1.2), Vec3::new(4.6, 2.1, 1.0));
        s.add_material(Material::new("concrete", 5.24, 0.05).unwrap());
        s.add_material(Material::new("wood", 2.0, 0.01).unwrap());
        s.add_material(Material::new("unused", 3.0, 0.0).unwrap());
        let room = TriMesh::shoebox(Vec3::new(6.0, 4.0, 3.0), "concrete", "concrete", "concrete").unwrap();
        s.add_object(SceneObject {
            id: "room".into(),
            mesh: Arc::new(room),
            material: "concrete".into(),
            position: Vec3::ZERO,
            movable: false,
            z_locked: true,
        })
        .unwrap();
        let boxm = TriMesh::cuboid(Vec3::new(-0.3, -0.2, 0.0), Vec3::new(0.3, 0.2, 0.5)).unwrap();
        s.add_object(SceneObject {
            id: "box".into(),
            mesh: Arc::new(boxm),
            material: "wood".into(),
            position: Vec3::new(2.7, 3.0, 0.0),
            movable: true,
            z_locked: false,
        })
        .unwrap();
        s.sim.max_depth = 2;
        s.sim.n_rays = 3000;
        s
    }

    #[test]
    fn los_rx_gradient_matches_fd() {
        let s = los_scene();
        let sel = ParamSelector::parse_list(&["rx:x"]).unwrap();
        let r = fd_check(&s, &sel, &CenterPower, 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-3, "{r:?}");
        assert!(!r.unreliable);
    }

    #[test]
    fn dead_and_constant_gradients_are_zero() {
        let s = shoebox();
        let sel = ParamSelector::parse_list(&["eps:unused", "sigma:unused"]).unwrap();
        let g = loss_and_grad(&s, &sel, &AmpSum).unwrap();
        assert_eq!(g.gradient, vec![0.0, 0.0]);
        let sel = ParamSelector::parse_list(&["object:box:x", "rx:y", "eps:wood"]).unwrap();
        let g = loss_and_grad(&s, &sel, &Constant).unwrap();
        assert_eq!(g.gradient, vec![0.0; 3]);
    }

    #[test]
    fn shoebox_all_kinds_match_fd() {
        let s = shoebox();
        let sel = ParamSelector::parse_list(&[
            "object:box:x",
            "object:box:y",
            "object:box:z",
            "tx:x",
            "tx:z",
            "rx:y",
            "eps:concrete",
            "sigma:concrete",
            "eps:wood",
            "sigma:wood",
        ])
        .unwrap();
        let r = fd_check(&s, &sel, &AmpSum, 1e-4).unwrap();
        assert!(r.passes(1e-3, 1e-8, 1e-5), "{r:?}");
        let g = loss_and_grad(&s, &sel, &AmpSum).unwrap();
        assert_eq!(g.primal_gap, 0.0);
        assert!(g.paths > 3);
    }

    #[test]
    fn tiny_step_is_flagged_and_empty_selector_is_empty() {
        let s = los_scene();
        let sel = ParamSelector::parse_list(&["rx:x"]).unwrap();
        assert!(fd_check(&s, &sel, &CenterPower, 1e-12).unwrap().unreliable);
        let r = fd_check(&s, &ParamSelector::default(), &CenterPower, 1e-4).unwrap();
        assert!(r.analytic.is_empty() && r.numeric.is_empty());
    }

    #[test]
    fn selector_validation() {
        let s = shoebox();
        assert!(ParamSelector::parse_list(&["object:room:x"]).unwrap().validate(&s).is_err());
        assert!(ParamSelector::parse_list(&["object:nope:x"]).unwrap().validate(&s).is_err());
        assert!(ParamSelector::parse_list(&["eps:glass2"]).unwrap().validate(&s).is_err());
        assert!("object:box:w".parse::<Param>().is_err());
        let mut locked = s.clone();
        locked.objects[0].z_locked = true;
        let box_idx = locked.object_index("box").unwrap();
        locked.objects[box_idx].z_locked = true;
        assert!(matches!(
            ParamSelector::parse_list(&["object:box:z"]).unwrap().validate(&locked),
            Err(Error::HeightLocked(_))
        ));
        for p in ["object:box:y", "tx:z", "rx:x", "eps:wood", "sigma:concrete"] {
            assert_eq!(p.parse::<Param>().unwrap().to_string(), p);
        }
    }

    #[test]
    fn translation_equivariance_in_free_space() {
        // A free-floating box: moving it equals moving everything else the other way.
        let mut s = los_scene();
        s.add_material(Material::new("wood", 2.0, 0.0).unwrap());
        let boxm = TriMesh::cuboid(Vec3::new(-0.3, -0.2, -0.2), Vec3::new(0.3, 0.2, 0.2)).unwrap();
        s.add_object(SceneObject {
            id: "box".into(),
            mesh: Arc::new(boxm),
            material: "wood".into(),
            position: Vec3::new(2.0, 1.2, 1.0),
            movable: true,
            z_locked: false,
        })
        .unwrap();
        s.sim.max_depth = 1;
        s.sim.n_rays = 4000;
        let tracer = Tracer::new(&s);
        for a in 0..3 {
            let obj = ParamSelector::new(vec![Param::object("box", a)]);
            let g_obj = loss_and_grad_with(&s, &tracer, &obj, &AmpSum).unwrap().gradient[0];
            let both = ParamSelector::new(vec![Param::tx(a), Param::rx(a)]);
            let g = loss_and_grad_with(&s, &tracer, &both, &AmpSum).unwrap().gradient;
            assert!((g_obj + g[0] + g[1]).abs() < 1e-6 * g_obj.abs().max(1.0), "{a}: {g_obj} {g:?}");
        }
    }
}
