//! Background-model calibration: alternate RMSprop phases on object positions
//! (delay loss `L_p`) and material constants (amplitude loss `L_m`) against a
//! dataset of reference CSI recorded at known receiver positions.

use num_complex::{Complex, Complex64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::channel::{csi_ratio, delay_feature, synthesize, CsiTensor, Dataset, SavGol};
use crate::error::{Error, Result};
use crate::grad::{multi_loss_and_grad, CsiLosses, ParamKind, ParamSelector};
use crate::math::{Scalar, Vec3};
use crate::optim::RmsProp;
use crate::scene::{Role, Scene};
use crate::tracer::Tracer;
use crate::vars::SceneVars;

pub type CalibDataset = Dataset;

/// Additive complex Gaussian noise at a per-record SNR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Noise {
    pub snr_db: f64,
    pub seed: u64,
}

/// `nx * ny` receiver positions on a regular grid spanning `[lo, hi]` at height `z`.
pub fn grid_positions(lo: (f64, f64), hi: (f64, f64), nx: usize, ny: usize, z: f64) -> Vec<Vec3> {
    let step = |a: f64, b: f64, n: usize, i: usize| if n > 1 { a + (b - a) * i as f64 / (n - 1) as f64 } else { 0.5 * (a + b) };
    (0..ny)
        .flat_map(|j| (0..nx).map(move |i| Vec3::new(step(lo.0, hi.0, nx, i), step(lo.1, hi.1, ny, j), z)))
        .collect()
}

/// Simulates CSI at every receiver position, optionally with noise whose
/// power is the record's mean signal power divided by the SNR.
pub fn generate_dataset(scene: &Scene, positions: &[Vec3], noise: Option<Noise>) -> Result<Dataset> {
    let tracer = Tracer::new(scene);
    let vars_scene = |p: Vec3| -> Result<Scene> {
        let mut s = scene.clone();
        s.set_transceiver_origin(Role::Rx, p)?;
        Ok(s)
    };
    let mut records: Vec<(Vec3, CsiTensor)> = positions
        .par_iter()
        .map(|&p| {
            let s = vars_scene(p)?;
            let (h, _) = synthesize(&s, &tracer, &SceneVars::<f64>::constant(&s))?;
            Ok((p, h))
        })
        .collect::<Result<_>>()?;
    if let Some(n) = noise {
        let mut rng = ChaCha8Rng::seed_from_u64(n.seed);
        for (_, h) in &mut records {
            let power = h.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / h.len() as f64;
            let std = (power / 10f64.powf(n.snr_db / 10.0) / 2.0).sqrt();
            let dist = Normal::new(0.0, std).map_err(|e| Error::Config(format!("noise: {e}")))?;
            for z in &mut h.data {
                *z += Complex64::new(dist.sample(&mut rng), dist.sample(&mut rng));
            }
        }
    }
    Ok(Dataset { records })
}

/// Sums below this make SMAPE undefined; it is reported as 0.
pub const SMAPE_FLOOR: f64 = 1e-15;

/// `|x - y| / (x + y)` for non-negative inputs; 0 when both vanish.
pub fn smape<S: Scalar>(x: S, y: S) -> S {
    let d = x + y;
    if d.val() < SMAPE_FLOOR {
        S::zero()
    } else {
        (x - y).abs() / d
    }
}

/// SMAPE plus a flag set when both inputs are effectively zero.
pub fn smape_flagged(x: f64, y: f64) -> (f64, bool) {
    (smape(x, y), x + y < SMAPE_FLOOR)
}

/// Savitzky-Golay settings for ratio smoothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Smoothing {
    pub window: usize,
    pub order: usize,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self { window: 11, order: 3 }
    }
}

/// Sum of delay features over antenna pairs, or `None` if any pair has no power.
pub fn delay_sum<S: Scalar>(h: &CsiTensor<S>) -> Option<S> {
    let f = delay_feature(h);
    if f.any_flagged() {
        return None;
    }
    let mut acc = S::zero();
    for v in f.values {
        acc += v;
    }
    Some(acc)
}

/// Smoothed CSI-ratio amplitudes `a_i` over all `N_t' = (N_t - 1) N_r N_s` entries.
pub fn ratio_amplitudes<S: Scalar>(h: &CsiTensor<S>, sg: Option<&SavGol>) -> Result<Vec<S>> {
    let r = csi_ratio(h)?;
    let mut out = Vec::with_capacity(r.len());
    for row in r.data.chunks(r.ns) {
        let smoothed;
        let row = match sg {
            Some(sg) => {
                smoothed = sg.apply(row);
                &smoothed[..]
            }
            None => row,
        };
        out.extend(row.iter().map(|z| modulus(*z)));
    }
    Ok(out)
}

/// `|z|` with a zero derivative at the origin.
pub fn modulus<S: Scalar>(z: Complex<S>) -> S {
    let n = z.norm_sqr();
    if n.val() > 0.0 {
        n.sqrt()
    } else {
        S::zero()
    }
}

/// Measured-side features of one record, computed once.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordFeatures {
    pub rx: Vec3,
    pub delay_sum: Option<f64>,
    pub amp_sum: f64,
}

struct RecordLosses<'a> {
    meas: &'a RecordFeatures,
    sg: &'a SavGol,
}

impl CsiLosses for RecordLosses<'_> {
    /// `[L_p term, L_m term, 1 if the delay term is usable else 0]`.
    fn eval<S: Scalar>(&self, h: &CsiTensor<S>) -> Vec<S> {
        let (lp, usable) = match (self.meas.delay_sum, delay_sum(h)) {
            (Some(m), Some(s)) => (smape(S::cst(m), s), 1.0),
            _ => (S::zero(), 0.0),
        };
        let mut amp = S::zero();
        for a in ratio_amplitudes(h, Some(self.sg)).expect("shape checked") {
            amp += a;
        }
        vec![lp, smape(S::cst(self.meas.amp_sum), amp), S::cst(usable)]
    }
}

/// Features and losses for a fixed dataset.
#[derive(Clone, Debug)]
pub struct Objective {
    pub records: Vec<RecordFeatures>,
    sg: SavGol,
}

/// Losses and gradients averaged over records.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub lp: f64,
    pub lm: f64,
    pub grad_lp: Vec<f64>,
    pub grad_lm: Vec<f64>,
    /// Records without a usable delay feature.
    pub skipped: usize,
}

impl Objective {
    pub fn new(scene: &Scene, dataset: &Dataset, smoothing: Smoothing) -> Result<Self> {
        dataset.validate()?;
        let (nt, nr) = (scene.tx.element_count(), scene.rx.element_count());
        if nt < 2 {
            return Err(Error::Shape("calibration needs at least 2 transmit antennas".into()));
        }
        let sg = SavGol::new(scene.freq.ns, smoothing.window, smoothing.order)?;
        let records = dataset
            .records
            .iter()
            .enumerate()
            .map(|(i, (p, h))| {
                if h.nt != nt || h.nr != nr || h.freq != scene.freq {
                    return Err(Error::Shape(format!("dataset record {i} does not match the scene's arrays and grid")));
                }
                let delay_sum = delay_sum(h);
                if delay_sum.is_none() {
                    log::warn!("dataset record {i} has an antenna pair with no power; skipped in the delay loss");
                }
                let amp_sum = ratio_amplitudes(h, Some(&sg))?.iter().sum();
                Ok(RecordFeatures { rx: *p, delay_sum, amp_sum })
            })
            .collect::<Result<_>>()?;
        Ok(Self { records, sg })
    }

    /// `L_p`, `L_m` and their gradients for the selector at its current
    /// values in `scene`, along the keys of `tracer`.
    pub fn evaluate(&self, scene: &Scene, tracer: &Tracer, selector: &ParamSelector) -> Result<Evaluation> {
        let x = selector.values(scene)?;
        let per: Vec<Result<(Vec<f64>, Vec<Vec<f64>>, bool)>> = self
            .records
            .par_iter()
            .map(|rec| {
                let mut s = scene.clone();
                s.set_transceiver_origin(Role::Rx, rec.rx)?;
                let losses = RecordLosses { meas: rec, sg: &self.sg };
                let r = multi_loss_and_grad(&s, tracer, selector, &x, &losses)?;
                let usable = r.values[2] > 0.5;
                Ok((r.values, r.gradients, usable))
            })
            .collect();
        let n = selector.len();
        let (mut lp, mut lm) = (0.0, 0.0);
        let (mut gp, mut gm) = (vec![0.0; n], vec![0.0; n]);
        let (mut np, mut skipped) = (0usize, 0usize);
        for r in per {
            let (v, g, usable) = r?;
            if usable {
                lp += v[0];
                for (a, b) in gp.iter_mut().zip(&g[0]) {
                    *a += b;
                }
                np += 1;
            } else {
                skipped += 1;
            }
            lm += v[1];
            for (a, b) in gm.iter_mut().zip(&g[1]) {
                *a += b;
            }
        }
        let nm = self.records.len() as f64;
        let np_f = np.max(1) as f64;
        Ok(Evaluation {
            lp: lp / np_f,
            lm: lm / nm,
            grad_lp: gp.iter().map(|g| g / np_f).collect(),
            grad_lm: gm.iter().map(|g| g / nm).collect(),
            skipped,
        })
    }

    /// `(L_p, L_m)` of a scene with fresh path discovery.
    pub fn losses(&self, scene: &Scene) -> Result<(f64, f64)> {
        let e = self.evaluate(scene, &Tracer::new(scene), &ParamSelector::default())?;
        Ok((e.lp, e.lm))
    }
}

/// Delay loss `L_p` of a scene against a dataset.
pub fn loss_positions(scene: &Scene, dataset: &Dataset) -> Result<f64> {
    Ok(Objective::new(scene, dataset, Smoothing::default())?.losses(scene)?.0)
}

/// Amplitude loss `L_m` of a scene against a dataset.
pub fn loss_materials(scene: &Scene, dataset: &Dataset) -> Result<f64> {
    Ok(Objective::new(scene, dataset, Smoothing::default())?.losses(scene)?.1)
}

/// Alternation schedule and optimizer settings.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibSchedule {
    pub rounds: usize,
    pub position_steps: usize,
    pub material_steps: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Stop when `L_p + L_m` is at or below this, or changes by less than
    /// this over a round.
    pub threshold: f64,
    /// A phase whose loss did not decrease has its learning rate multiplied
    /// by this factor for later rounds.
    pub lr_decay: f64,
    pub smoothing: Smoothing,
}

impl Default for CalibSchedule {
    fn default() -> Self {
        Self {
            rounds: 10,
            position_steps: 15,
            material_steps: 15,
            lr: 0.03,
            momentum: 0.6,
            threshold: 1e-9,
            lr_decay: 0.5,
            smoothing: Smoothing::default(),
        }
    }
}

impl CalibSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.position_steps == 0 || self.material_steps == 0 {
            return Err(Error::Config("phase step counts must be >= 1".into()));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("need lr > 0 and momentum in [0, 1)".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr_decay must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Position,
    Material,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Position => "position",
            Phase::Material => "material",
        }
    }
}

/// One optimizer step (or, with `step == steps`, the phase-end evaluation).
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub round: usize,
    pub phase: Phase,
    pub step: usize,
    pub lp: f64,
    pub lm: f64,
    /// Position selector values followed by material selector values.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CalibOutcome {
    /// The phase-end state with the lowest `L_p + L_m` (the input scene if
    /// nothing improved on it).
    pub scene: Scene,
    pub history: Vec<HistoryRow>,
    pub rounds_run: usize,
    pub converged: bool,
    pub initial: (f64, f64),
    /// Losses of the returned scene.
    pub best: (f64, f64),
    /// Losses at the end of the final phase.
    pub last: (f64, f64),
}

fn clamp_materials(sel: &ParamSelector, x: &mut [f64]) {
    for (p, v) in sel.params.iter().zip(x.iter_mut()) {
        match p.kind {
            ParamKind::MaterialEps => *v = v.max(1.0),
            ParamKind::MaterialSigma => *v = v.max(0.0),
            _ => {}
        }
    }
}

fn all_values(scene: &Scene, pos: &ParamSelector, mat: &ParamSelector) -> Result<Vec<f64>> {
    let mut v = pos.values(scene)?;
    v.extend(mat.values(scene)?);
    Ok(v)
}

/// Alternating calibration. Position selectors may only name object
/// translations; material selectors only material constants. Each phase
/// ends on the iterate with the lowest loss for that phase.
pub fn calibrate(
    scene: &Scene,
    dataset: &Dataset,
    pos: &ParamSelector,
    mat: &ParamSelector,
    schedule: &CalibSchedule,
) -> Result<CalibOutcome> {
    schedule.validate()?;
    pos.validate(scene)?;
    mat.validate(scene)?;
    if pos.params.iter().any(|p| !matches!(p.kind, ParamKind::ObjectTranslation(_))) {
        return Err(Error::Config("position selectors must be object translations".into()));
    }
    if mat.params.iter().any(|p| !matches!(p.kind, ParamKind::MaterialEps | ParamKind::MaterialSigma)) {
        return Err(Error::Config("material selectors must be eps or sigma".into()));
    }
    let obj = Objective::new(scene, dataset, schedule.smoothing)?;
    let mut scene = scene.clone();
    let mut history = Vec::new();
    let mut opt_pos = RmsProp::new(pos.len(), schedule.lr, schedule.momentum);
    let mut opt_mat = RmsProp::new(mat.len(), schedule.lr, schedule.momentum);

    let mut tracer = Tracer::new(&scene);
    let initial = obj.losses(&scene)?;
    let init_total = initial.0 + initial.1;
    let mut last = initial;
    let mut best = (initial, scene.clone());
    let mut converged = false;
    let mut rounds_run = 0;

    let guard = |l: (f64, f64), scene: &Scene| -> Result<()> {
        let total = l.0 + l.1;
        if !total.is_finite() || (init_total > 0.0 && total > 10.0 * init_total) {
            log::error!(
                "calibration diverged: L_p = {}, L_m = {}, initial total = {init_total}, parameters = {:?}",
                l.0,
                l.1,
                all_values(scene, pos, mat).unwrap_or_default()
            );
            return Err(Error::Diverged { loss: total, initial: init_total });
        }
        Ok(())
    };

    for round in 0..schedule.rounds {
        let start_total = last.0 + last.1;
        if start_total <= schedule.threshold {
            converged = true;
            break;
        }
        rounds_run += 1;
        for phase in [Phase::Position, Phase::Material] {
            let (sel, steps) = match phase {
                Phase::Position => (pos, schedule.position_steps),
                Phase::Material => (mat, schedule.material_steps),
            };
            if sel.is_empty() {
                continue;
            }
            let phase_start = match phase {
                Phase::Position => last.0,
                Phase::Material => last.1,
            };
            let phase_loss = |l: (f64, f64)| match phase {
                Phase::Position => l.0,
                Phase::Material => l.1,
            };
            let mut phase_best: Option<((f64, f64), Vec<f64>)> = None;
            for step in 0..steps {
                let e = obj.evaluate(&scene, &tracer, sel)?;
                guard((e.lp, e.lm), &scene)?;
                if phase_best.as_ref().is_none_or(|(l, _)| phase_loss((e.lp, e.lm)) < phase_loss(*l)) {
                    phase_best = Some(((e.lp, e.lm), sel.values(&scene)?));
                }
                history.push(HistoryRow {
                    round,
                    phase,
                    step,
                    lp: e.lp,
                    lm: e.lm,
                    values: all_values(&scene, pos, mat)?,
                });
                let mut x = sel.values(&scene)?;
                let (opt, g) = match phase {
                    Phase::Position => (&mut opt_pos, &e.grad_lp),
                    Phase::Material => (&mut opt_mat, &e.grad_lm),
                };
                opt.step(&mut x, g);
                clamp_materials(sel, &mut x);
                sel.apply(&mut scene, &x)?;
                if phase == Phase::Position {
                    tracer = Tracer::new(&scene);
                }
            }
            last = obj.evaluate(&scene, &tracer, &ParamSelector::default()).map(|e| (e.lp, e.lm))?;
            guard(last, &scene)?;
            if let Some((l, x)) = phase_best.filter(|(l, _)| phase_loss(*l) < phase_loss(last)) {
                sel.apply(&mut scene, &x)?;
                if phase == Phase::Position {
                    tracer = Tracer::new(&scene);
                }
                last = l;
            }
            if last.0 + last.1 < best.0 .0 + best.0 .1 {
                best = (last, scene.clone());
            }
            history.push(HistoryRow {
                round,
                phase,
                step: steps,
                lp: last.0,
                lm: last.1,
                values: all_values(&scene, pos, mat)?,
            });
            if phase_loss(last) >= phase_start {
                let opt = match phase {
                    Phase::Position => &mut opt_pos,
                    Phase::Material => &mut opt_mat,
                };
                opt.lr *= schedule.lr_decay;
            }
        }
        if ((last.0 + last.1) - start_total).abs() < schedule.threshold {
            converged = true;
            break;
        }
    }
    Ok(CalibOutcome { scene: best.1, history, rounds_run, converged, initial, best: best.0, last })
}

/// CSV: round, phase, step, L_p, L_m, then one column per parameter.
pub fn write_history_csv<W: std::io::Write>(
    out: &mut W,
    history: &[HistoryRow],
    pos: &ParamSelector,
    mat: &ParamSelector,
) -> std::io::Result<()> {
    let names: Vec<String> = pos.params.iter().chain(&mat.params).map(|p| p.to_string()).collect();
    write!(out, "round,phase,step,lp,lm")?;
    for n in &names {
        write!(out, ",{n}")?;
    }
    writeln!(out)?;
    for r in history {
        write!(out, "{},{},{},{:.16e},{:.16e}", r.round, r.phase.name(), r.step, r.lp, r.lm)?;
        for v in &r.values {
            write!(out, ",{v:.16e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
