//! Gradient-enhanced localization of a target object (device-free) or
//! transceiver (device-based) against reference CSI, using a bias-weighted
//! Gaussian-smoothed loss and a variance schedule driven by sample biases.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::calib::{ratio_amplitudes, Smoothing};
use crate::channel::{delay_feature, synthesize, CsiTensor, SavGol};
use crate::error::{Error, Result};
use crate::grad::{multi_loss_and_grad, CsiLosses, Param, ParamSelector};
use crate::math::Scalar;
use crate::optim::RmsProp;
use crate::scene::Scene;
use crate::tracer::Tracer;
use crate::vars::SceneVars;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    DeviceFree,
    DeviceBased,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::DeviceFree => "device-free",
            Mode::DeviceBased => "device-based",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "device-free" => Ok(Mode::DeviceFree),
            "device-based" => Ok(Mode::DeviceBased),
            _ => Err(Error::Config(format!("unknown mode `{s}`, expected device-free or device-based"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What moves: a transceiver array origin or an object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Tx,
    Rx,
    Object(String),
}

impl FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tx" => Target::Tx,
            "rx" => Target::Rx,
            "" => return Err(Error::Config("empty target".into())),
            id => Target::Object(id.into()),
        })
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Tx => f.write_str("tx"),
            Target::Rx => f.write_str("rx"),
            Target::Object(id) => f.write_str(id),
        }
    }
}

/// Axis-aligned 2D search box (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Region {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Region {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        if !(min[0] < max[0] && min[1] < max[1]) || min.iter().chain(&max).any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("empty search region {min:?}..{max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1])]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn clip(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0].clamp(self.min[0], self.max[0]), p[1].clamp(self.min[1], self.max[1])]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocConfig {
    pub mode: Mode,
    pub target: Target,
    /// Delay-term weight.
    pub gamma1: f64,
    /// Anchor-regularization weight.
    pub gamma2: f64,
    /// Bias sharpness in `exp(-alpha L)`.
    pub alpha: f64,
    pub sigma0: f64,
    pub sigma_min: f64,
    pub samples: usize,
    pub iterations: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub region: Region,
    pub smoothing: Smoothing,
    /// Use `u_j = 0` for every sample instead of drawing offsets.
    pub zero_offsets: bool,
    /// Abort when the loss at the estimate exceeds this multiple of the
    /// largest loss evaluated in the first iteration.
    pub divergence_factor: f64,
}

impl LocConfig {
    /// Per-mode defaults.
    pub fn new(mode: Mode, target: Target, region: Region) -> Self {
        let (gamma, sigma0, alpha) = match mode {
            Mode::DeviceFree => (2.0, 0.1, 1.0),
            Mode::DeviceBased => (0.05, 1.0, 0.2),
        };
        Self {
            mode,
            target,
            gamma1: gamma,
            gamma2: 0.01 * gamma,
            alpha,
            sigma0,
            sigma_min: 0.01,
            samples: 5,
            iterations: 100,
            lr: 0.03,
            momentum: 0.6,
            seed: 0,
            region,
            smoothing: Smoothing::default(),
            zero_offsets: false,
            divergence_factor: 10.0,
        }
    }

    /// Ablation: one sample at the minimum kernel width, no bias weighting.
    pub fn without_smoothing(mut self) -> Self {
        self.sigma0 = self.sigma_min;
        self.alpha = 0.0;
        self.samples = 1;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma0 >= self.sigma_min) {
            return Err(Error::Config("need sigma0 >= sigma_min > 0".into()));
        }
        if self.samples == 0 || self.iterations == 0 {
            return Err(Error::Config("samples and iterations must be >= 1".into()));
        }
        if !(self.gamma1 >= 0.0 && self.gamma2 >= 0.0 && self.alpha >= 0.0) {
            return Err(Error::Config("gamma1, gamma2 and alpha must be >= 0".into()));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("need lr > 0 and momentum in [0, 1)".into()));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::Config("divergence_factor must be > 1".into()));
        }
        Ok(())
    }

    fn selector(&self) -> ParamSelector {
        ParamSelector::new(match &self.target {
            Target::Tx => vec![Param::tx(0), Param::tx(1)],
            Target::Rx => vec![Param::rx(0), Param::rx(1)],
            Target::Object(id) => vec![Param::object(id, 0), Param::object(id, 1)],
        })
    }
}

struct Reference {
    amps: Vec<f64>,
    delays_ns: Vec<f64>,
    flagged: Vec<bool>,
}

struct CsiMismatch<'a> {
    reference: &'a Reference,
    sg: &'a SavGol,
    gamma1: f64,
}

impl CsiLosses for CsiMismatch<'_> {
    fn eval<S: Scalar>(&self, h: &CsiTensor<S>) -> Vec<S> {
        let amps = ratio_amplitudes(h, Some(self.sg)).expect("shape checked");
        let mut amp = S::zero();
        for (a, &r) in amps.iter().zip(&self.reference.amps) {
            let d = *a - r;
            amp += d * d;
        }
        amp = amp / amps.len() as f64;
        let f = delay_feature(h);
        let mut del = S::zero();
        let mut n = 0usize;
        for (i, v) in f.values.iter().enumerate() {
            if f.flagged[i] || self.reference.flagged[i] {
                continue;
            }
            let d = *v * 1e9 - self.reference.delays_ns[i];
            del += d * d;
            n += 1;
        }
        if n > 0 {
            del = del / n as f64;
        }
        vec![amp + del * self.gamma1]
    }
}

/// A reference measurement and configuration bound to a scene; evaluates the
/// localization loss with the target moved to arbitrary 2D positions.
pub struct LocProblem<'a> {
    pub scene: &'a Scene,
    pub cfg: &'a LocConfig,
    selector: ParamSelector,
    reference: Reference,
    sg: SavGol,
    anchor: [f64; 2],
    /// Path keys do not depend on the receiver, so RX targets share one set.
    shared: Option<Tracer>,
}

impl<'a> LocProblem<'a> {
    pub fn new(scene: &'a Scene, reference: &CsiTensor, cfg: &'a LocConfig) -> Result<Self> {
        cfg.validate()?;
        match (&cfg.mode, &cfg.target) {
            (Mode::DeviceFree, Target::Object(id)) => {
                let o = scene.object(id)?;
                if !o.movable || !o.z_locked {
                    return Err(Error::Config(format!("device-free target `{id}` must be movable and height-locked")));
                }
            }
            (Mode::DeviceBased, Target::Tx | Target::Rx) => {}
            (m, t) => return Err(Error::Config(format!("target `{t}` is not valid in {m} mode"))),
        }
        if reference.nt != scene.tx.element_count() || reference.nr != scene.rx.element_count() || reference.freq != scene.freq {
            return Err(Error::Shape("reference CSI does not match the scene's arrays and grid".into()));
        }
        if reference.nt < 2 {
            return Err(Error::Shape("localization needs at least 2 transmit antennas".into()));
        }
        let sg = SavGol::new(scene.freq.ns, cfg.smoothing.window, cfg.smoothing.order)?;
        let f = delay_feature(reference);
        let reference = Reference {
            amps: ratio_amplitudes(reference, Some(&sg))?,
            delays_ns: f.values.iter().map(|v| v * 1e9).collect(),
            flagged: f.flagged,
        };
        let shared = (cfg.target == Target::Rx).then(|| Tracer::new(scene));
        Ok(Self { scene, cfg, selector: cfg.selector(), reference, sg, anchor: cfg.region.center(), shared })
    }

    /// Current 2D target position in the scene.
    pub fn position(&self) -> Result<[f64; 2]> {
        let v = self.selector.values(self.scene)?;
        Ok([v[0], v[1]])
    }

    pub fn anchor(&self) -> [f64; 2] {
        self.anchor
    }

    /// The scene with the target moved to `p`.
    pub fn scene_at(&self, p: [f64; 2]) -> Result<Scene> {
        let mut s = self.scene.clone();
        self.selector.apply(&mut s, &p)?;
        Ok(s)
    }

    fn regularizer(&self, p: [f64; 2]) -> (f64, [f64; 2]) {
        let d = [p[0] - self.anchor[0], p[1] - self.anchor[1]];
        let g = self.cfg.gamma2;
        (g * (d[0] * d[0] + d[1] * d[1]), [2.0 * g * d[0], 2.0 * g * d[1]])
    }

    fn losses(&self) -> CsiMismatch<'_> {
        CsiMismatch { reference: &self.reference, sg: &self.sg, gamma1: self.cfg.gamma1 }
    }

    pub fn loss(&self, p: [f64; 2]) -> Result<f64> {
        let s = self.scene_at(p)?;
        let own;
        let tracer = match &self.shared {
            Some(t) => t,
            None => {
                own = Tracer::new(&s);
                &own
            }
        };
        let (h, _) = synthesize(&s, tracer, &SceneVars::<f64>::constant(&s))?;
        Ok(self.losses().eval(&h)[0] + self.regularizer(p).0)
    }

    pub fn loss_and_grad(&self, p: [f64; 2]) -> Result<(f64, [f64; 2])> {
        let s = self.scene_at(p)?;
        let own;
        let tracer = match &self.shared {
            Some(t) => t,
            None => {
                own = Tracer::new(&s);
                &own
            }
        };
        let r = multi_loss_and_grad(&s, tracer, &self.selector, &p, &self.losses())?;
        let (rl, rg) = self.regularizer(p);
        let g = &r.gradients[0];
        Ok((r.values[0] + rl, [g[0] + rg[0], g[1] + rg[1]]))
    }
}

/// Localization loss at the target's current position in `scene`.
pub fn loc_loss(scene: &Scene, reference: &CsiTensor, cfg: &LocConfig) -> Result<f64> {
    let p = LocProblem::new(scene, reference, cfg)?;
    p.loss(p.position()?)
}

/// One evaluated sample of the smoothed estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub position: [f64; 2],
    pub loss: f64,
    pub weight: f64,
    pub grad: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Smoothed {
    pub loss: f64,
    pub grad: [f64; 2],
    pub samples: Vec<Sample>,
}

impl Smoothed {
    /// Bias values `B_j = w_j`.
    pub fn biases(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.weight).collect()
    }
}

/// `N_p` Gaussian offsets of standard deviation `sigma` (all zero when the
/// config forces zero offsets).
pub fn draw_offsets(cfg: &LocConfig, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    (0..cfg.samples)
        .map(|_| {
            let u: [f64; 2] = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
            if cfg.zero_offsets {
                [0.0, 0.0]
            } else {
                [sigma * u[0], sigma * u[1]]
            }
        })
        .collect()
}

/// Bias-weighted estimate at `p` from precomputed offsets; weights
/// `exp(-alpha L_j)` are constants in the gradient.
pub fn smoothed_at(problem: &LocProblem<'_>, p: [f64; 2], offsets: &[[f64; 2]], with_grad: bool) -> Result<Smoothed> {
    let region = problem.cfg.region;
    let alpha = problem.cfg.alpha;
    let samples: Vec<Result<Sample>> = offsets
        .par_iter()
        .map(|u| {
            let q = region.clip([p[0] + u[0], p[1] + u[1]]);
            let (loss, grad) = if with_grad { problem.loss_and_grad(q)? } else { (problem.loss(q)?, [0.0; 2]) };
            Ok(Sample { position: q, loss, weight: (-alpha * loss).exp(), grad })
        })
        .collect();
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    let n = samples.len() as f64;
    let mut loss = 0.0;
    let mut grad = [0.0; 2];
    for s in &samples {
        loss += s.weight * s.loss;
        grad[0] += s.weight * s.grad[0];
        grad[1] += s.weight * s.grad[1];
    }
    Ok(Smoothed { loss: loss / n, grad: [grad[0] / n, grad[1] / n], samples })
}

/// Smoothed loss and gradient at `p` with kernel width `sigma`.
pub fn smoothed_loss_and_grad(problem: &LocProblem<'_>, p: [f64; 2], sigma: f64, rng: &mut ChaCha8Rng) -> Result<Smoothed> {
    let offsets = draw_offsets(problem.cfg, sigma, rng);
    smoothed_at(problem, p, &offsets, true)
}

/// `2 / (1 + exp(softmax_c))`, the softmax taken over the sample biases and
/// the current-position bias `b_c`, keeping `b_c`'s component.
pub fn beta(biases: &[f64], b_c: f64) -> f64 {
    let m = biases.iter().copied().fold(b_c, f64::max);
    let den: f64 = biases.iter().map(|b| (b - m).exp()).sum::<f64>() + (b_c - m).exp();
    let soft = (b_c - m).exp() / den;
    2.0 / (1.0 + soft.exp())
}

/// Kernel width for iteration `t + 1`.
pub fn variance_step(t: usize, iterations: usize, sigma0: f64, sigma_min: f64, beta: f64) -> f64 {
    let frac = t as f64 / iterations as f64;
    (sigma0 - beta * frac * (sigma0 - sigma_min)).clamp(sigma_min, sigma0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocRow {
    pub t: usize,
    pub x: f64,
    pub y: f64,
    /// Loss at the estimate, including regularization.
    pub loss: f64,
    pub smoothed_loss: f64,
    pub sigma: f64,
    pub beta: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocTrace {
    pub rows: Vec<LocRow>,
    pub init: [f64; 2],
    pub estimate: [f64; 2],
    pub error: Option<f64>,
}

/// Coarse-to-fine localization from `init`; the scene's own target position
/// is ignored.
pub fn localize(
    scene: &Scene,
    reference: &CsiTensor,
    cfg: &LocConfig,
    init: [f64; 2],
    ground_truth: Option<[f64; 2]>,
) -> Result<LocTrace> {
    let problem = LocProblem::new(scene, reference, cfg)?;
    if !cfg.region.contains(init) {
        return Err(Error::Config(format!("initial position {init:?} is outside the search region")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = RmsProp::new(2, cfg.lr, cfg.momentum);
    let mut p = init;
    let mut sigma = cfg.sigma0;
    let mut rows = Vec::with_capacity(cfg.iterations);
    let mut scale = None;
    for t in 0..cfg.iterations {
        let offsets = draw_offsets(cfg, sigma, &mut rng);
        let (sm, raw) = rayon::join(|| smoothed_at(&problem, p, &offsets, true), || problem.loss(p));
        let (sm, raw) = (sm?, raw?);
        let first = sm.samples.iter().map(|s| s.loss).fold(raw, f64::max);
        let limit = *scale.get_or_insert(cfg.divergence_factor * first);
        if !raw.is_finite() || !sm.loss.is_finite() || raw > limit {
            log::error!("localization diverged at t = {t}: position {p:?}, loss {raw}, limit {limit}");
            return Err(Error::Diverged { loss: raw, initial: limit / cfg.divergence_factor });
        }
        let b = beta(&sm.biases(), (-cfg.alpha * raw).exp());
        rows.push(LocRow {
            t,
            x: p[0],
            y: p[1],
            loss: raw,
            smoothed_loss: sm.loss,
            sigma,
            beta: b,
            grad_norm: sm.grad[0].hypot(sm.grad[1]),
        });
        let mut x = p;
        opt.step(&mut x, &sm.grad);
        p = cfg.region.clip(x);
        sigma = variance_step(t, cfg.iterations, cfg.sigma0, cfg.sigma_min, b);
    }
    let error = ground_truth.map(|g| (p[0] - g[0]).hypot(p[1] - g[1]));
    Ok(LocTrace { rows, init, estimate: p, error })
}

/// Plain RMSprop on the unsmoothed loss, for comparison with [`localize`].
pub fn descend(scene: &Scene, reference: &CsiTensor, cfg: &LocConfig, init: [f64; 2]) -> Result<Vec<[f64; 2]>> {
    let problem = LocProblem::new(scene, reference, cfg)?;
    let mut opt = RmsProp::new(2, cfg.lr, cfg.momentum);
    let mut p = init;
    let mut out = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        out.push(p);
        let (_, g) = problem.loss_and_grad(p)?;
        let mut x = p;
        opt.step(&mut x, &g);
        p = cfg.region.clip(x);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandscapePoint {
    pub x: f64,
    pub y: f64,
    pub loss: f64,
    pub smoothed_loss: f64,
}

/// Raw and smoothed loss over the grid `xs x ys` (row-major in `ys`). The
/// smoothed loss uses one set of offsets, drawn with kernel width `sigma0`,
/// shared by every grid point.
pub fn loss_landscape(scene: &Scene, reference: &CsiTensor, cfg: &LocConfig, xs: &[f64], ys: &[f64]) -> Result<Vec<LandscapePoint>> {
    if xs.is_empty() || ys.is_empty() {
        return Ok(Vec::new());
    }
    let problem = LocProblem::new(scene, reference, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let offsets = draw_offsets(cfg, cfg.sigma0, &mut rng);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in ys {
        for &x in xs {
            let p = cfg.region.clip([x, y]);
            let loss = problem.loss(p)?;
            let sm = smoothed_at(&problem, p, &offsets, false)?;
            out.push(LandscapePoint { x, y, loss, smoothed_loss: sm.loss });
        }
    }
    Ok(out)
}

pub fn write_trace_csv<W: std::io::Write>(out: &mut W, trace: &LocTrace) -> std::io::Result<()> {
    writeln!(out, "t,x,y,loss,smoothed_loss,sigma,beta,grad_norm")?;
    for r in &trace.rows {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.x, r.y, r.loss, r.smoothed_loss, r.sigma, r.beta, r.grad_norm
        )?;
    }
    Ok(())
}

pub fn write_landscape_csv<W: std::io::Write>(out: &mut W, points: &[LandscapePoint]) -> std::io::Result<()> {
    writeln!(out, "x,y,loss,smoothed_loss")?;
    for p in points {
        writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", p.x, p.y, p.loss, p.smoothed_loss)?;
    }
    Ok(())
}

/// Final result record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocResult {
    pub mode: String,
    pub target: String,
    pub init: [f64; 2],
    pub estimate: [f64; 2],
    pub error_m: Option<f64>,
    pub iterations: usize,
    pub final_loss: Option<f64>,
    pub final_sigma: Option<f64>,
}

impl LocResult {
    pub fn new(cfg: &LocConfig, trace: &LocTrace) -> Self {
        Self {
            mode: cfg.mode.to_string(),
            target: cfg.target.to_string(),
            init: trace.init,
            estimate: trace.estimate,
            error_m: trace.error,
            iterations: trace.rows.len(),
            final_loss: trace.rows.last().map(|r| r.loss),
            final_sigma: trace.rows.last().map(|r| r.sigma),
        }
    }
}

/// Number of strict interior local minima of a sequence.
pub fn strict_local_minima(v: &[f64]) -> usize {
    v.windows(3).filter(|w| w[1] < w[0] && w[1] < w[2]).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::synthesize_csi;
    use crate::math::Vec3;
    use crate::scene::{presets, Role};

    fn region() -> Region {
        Region::new([1.0, 0.8], [5.0, 3.2]).unwrap()
    }

    fn based() -> (Scene, CsiTensor, LocConfig) {
        let mut s = presets::room();
        s.sim.n_rays = 4000;
        s.set_transceiver_origin(Role::Rx, Vec3::new(3.4, 1.9, 1.2)).unwrap();
        let h = synthesize_csi(&s).unwrap();
        let cfg = LocConfig::new(Mode::DeviceBased, Target::Rx, region());
        (s, h, cfg)
    }

    #[test]
    fn defaults_by_mode() {
        let f = LocConfig::new(Mode::DeviceFree, Target::Object("vase".into()), region());
        assert_eq!((f.gamma1, f.sigma0, f.alpha, f.sigma_min, f.samples, f.iterations), (2.0, 0.1, 1.0, 0.01, 5, 100));
        assert!((f.gamma2 - 0.02).abs() < 1e-15);
        let b = LocConfig::new(Mode::DeviceBased, Target::Rx, region());
        assert_eq!((b.gamma1, b.sigma0, b.alpha, b.lr, b.momentum), (0.05, 1.0, 0.2, 0.03, 0.6));
        let n = b.without_smoothing();
        assert_eq!((n.sigma0, n.alpha, n.samples), (0.01, 0.0, 1));
    }

    #[test]
    fn beta_for_equal_biases() {
        let b = beta(&[0.7; 5], 0.7);
        assert!((b - 2.0 / (1.0 + (1.0f64 / 6.0).exp())).abs() < 1e-15);
        assert!((b - 0.917).abs() < 1e-3);
    }

    #[test]
    fn variance_schedule() {
        assert_eq!(variance_step(0, 100, 1.0, 0.01, 0.9), 1.0);
        let s = variance_step(99, 100, 1.0, 0.01, 1.0);
        assert!((s - (0.01 + 0.99 / 100.0)).abs() < 1e-12);
        assert_eq!(variance_step(99, 100, 1.0, 0.01, 2.5), 0.01);
        let mut prev = 1.0;
        for t in 0..100 {
            let s = variance_step(t, 100, 1.0, 0.01, 0.8);
            assert!(s <= prev && s >= 0.01);
            prev = s;
        }
    }

    #[test]
    fn loss_is_zero_at_truth_and_anchor() {
        let (s, h, mut cfg) = based();
        cfg.region = Region::new([2.4, 0.9], [4.4, 2.9]).unwrap();
        assert!(loc_loss(&s, &h, &cfg).unwrap().abs() < 1e-9);
        cfg.gamma1 = 0.0;
        cfg.gamma2 = 0.0;
        let p = LocProblem::new(&s, &h, &cfg).unwrap();
        let q = [3.0, 1.5];
        let moved = p.scene_at(q).unwrap();
        let hm = synthesize_csi(&moved).unwrap();
        let sg = SavGol::new(128, 11, 3).unwrap();
        let a = ratio_amplitudes(&h, Some(&sg)).unwrap();
        let b = ratio_amplitudes(&hm, Some(&sg)).unwrap();
        let mse = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
        assert!((p.loss(q).unwrap() - mse).abs() < 1e-12 * mse.max(1.0));
    }

    #[test]
    fn degenerate_smoothing_is_the_plain_loss() {
        let (s, h, mut cfg) = based();
        cfg.alpha = 0.0;
        cfg.samples = 1;
        cfg.zero_offsets = true;
        let p = LocProblem::new(&s, &h, &cfg).unwrap();
        let q = [3.0, 1.5];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sm = smoothed_loss_and_grad(&p, q, 0.5, &mut rng).unwrap();
        let (l, g) = p.loss_and_grad(q).unwrap();
        assert_eq!(sm.loss, l);
        assert_eq!(sm.grad, g);
    }

    #[test]
    fn equal_sample_losses_scale_by_weight() {
        let (s, h, mut cfg) = based();
        cfg.samples = 4;
        cfg.zero_offsets = true;
        let p = LocProblem::new(&s, &h, &cfg).unwrap();
        let q = [3.0, 1.5];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sm = smoothed_loss_and_grad(&p, q, 0.5, &mut rng).unwrap();
        let (l, g) = p.loss_and_grad(q).unwrap();
        let w = (-cfg.alpha * l).exp();
        assert!((sm.loss - w * l).abs() < 1e-15);
        assert!((sm.grad[0] - w * g[0]).abs() < 1e-15 && (sm.grad[1] - w * g[1]).abs() < 1e-15);
        assert!(sm.samples.iter().all(|s| s.weight > 0.0 && s.weight <= 1.0));
    }

    #[test]
    fn zero_offset_mode_matches_plain_descent() {
        let (s, h, mut cfg) = based();
        cfg = cfg.without_smoothing();
        cfg.zero_offsets = true;
        cfg.iterations = 5;
        let init = [2.5, 1.2];
        let tr = localize(&s, &h, &cfg, init, None).unwrap();
        let plain = descend(&s, &h, &cfg, init).unwrap();
        for (r, p) in tr.rows.iter().zip(&plain) {
            assert_eq!([r.x, r.y], *p);
        }
    }

    #[test]
    fn trace_is_seed_deterministic_and_contained() {
        let (s, h, mut cfg) = based();
        cfg.iterations = 4;
        cfg.seed = 9;
        let a = localize(&s, &h, &cfg, [1.5, 1.0], Some([3.4, 1.9])).unwrap();
        let b = localize(&s, &h, &cfg, [1.5, 1.0], Some([3.4, 1.9])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 4);
        for r in &a.rows {
            assert!(cfg.region.contains([r.x, r.y]));
            assert!(r.sigma <= cfg.sigma0 && r.sigma >= cfg.sigma_min);
        }
        assert!(a.error.is_some());
    }

    #[test]
    fn config_errors() {
        let (s, h, cfg) = based();
        assert!(localize(&s, &h, &cfg, [0.0, 0.0], None).is_err());
        let bad = LocConfig::new(Mode::DeviceFree, Target::Rx, region());
        assert!(LocProblem::new(&s, &h, &bad).is_err());
        let room = LocConfig::new(Mode::DeviceFree, Target::Object("room".into()), region());
        assert!(LocProblem::new(&s, &h, &room).is_err());
        assert!(Region::new([1.0, 1.0], [1.0, 2.0]).is_err());
        assert!("sideways".parse::<Mode>().is_err());
        assert_eq!("rx".parse::<Target>().unwrap(), Target::Rx);
    }

    #[test]
    fn empty_landscape() {
        let (s, h, cfg) = based();
        assert!(loss_landscape(&s, &h, &cfg, &[], &[1.0]).unwrap().is_empty());
    }

    #[test]
    fn local_minima_count() {
        assert_eq!(strict_local_minima(&[3.0, 1.0, 2.0, 0.5, 0.5, 1.0]), 1);
        assert_eq!(strict_local_minima(&[1.0, 2.0]), 0);
    }
}
