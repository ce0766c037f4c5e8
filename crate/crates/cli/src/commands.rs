//! Subcommand implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use num_complex::Complex64;
use serde_json::json;

use diffrt::calib::{self, CalibSchedule, Noise, Smoothing};
use diffrt::channel::{self, power_delay_profile, CsiTensor, SavGol};
use diffrt::em::fresnel;
use diffrt::grad::{fd_check, CsiMse, ParamSelector};
use diffrt::loc::{self, LocConfig, LocResult, Mode, Region, Target};
use diffrt::math::{Vec3, SPEED_OF_LIGHT};
use diffrt::scene::{load_scene, presets, save_scene, Scene};
use diffrt::tracer::{trace_paths, write_paths_csv};

use crate::manifest::Recorder;
use crate::Failure;

type Outcome = Result<(), Failure>;

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn io_fail(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::usage(format!("{}: {e}", path.display()))
}

fn floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("expected {N} comma-separated numbers, got `{s}`"))
}

fn parse_xy(s: &str) -> Result<[f64; 2], String> {
    floats::<2>(s)
}

fn parse_rect(s: &str) -> Result<[f64; 4], String> {
    floats::<4>(s)
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected t,r, got `{s}`"))?;
    let p = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not an index"));
    Ok((p(a)?, p(b)?))
}

/// Grid values along one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis(pub Vec<f64>);

/// `a:b:step` (inclusive of `b` up to rounding) or a single value.
fn parse_axis(s: &str) -> Result<Axis, String> {
    axis_values(s).map(Axis)
}

fn axis_values(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number"));
    match parts.as_slice() {
        [v] => Ok(vec![num(v)?]),
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0 && step.is_finite() && a.is_finite() && b.is_finite()) {
                return Err(format!("bad range `{s}`: need finite bounds and step > 0"));
            }
            if b < a {
                return Ok(Vec::new());
            }
            let n = ((b - a) / step + 1e-9).floor() as usize + 1;
            Ok((0..n).map(|i| a + i as f64 * step).collect())
        }
        _ => Err(format!("expected a:b:step or a single value, got `{s}`")),
    }
}

fn load(rec: &mut Recorder, path: &Path) -> Result<Scene, Failure> {
    let s = load_scene(path)?;
    rec.input(path)?;
    Ok(s)
}

fn sidecar(out: &Path, ext: &str) -> PathBuf {
    out.with_extension(ext)
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scene file (JSON).
    pub scene: PathBuf,
    /// Output CSI file.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the power delay profile of antenna pair `t,r`.
    #[arg(long, value_parser = parse_pair)]
    pub pdp: Option<(usize, usize)>,
    /// Also write the path list of the first antenna pair (or the `--pdp` pair).
    #[arg(long)]
    pub paths: bool,
    /// Ray-launch seed; overrides the scene's.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn simulate(a: SimulateArgs) -> Outcome {
    let mut rec = Recorder::new("simulate");
    let mut scene = load(&mut rec, &a.scene)?;
    if let Some(s) = a.seed {
        scene.sim.seed = s;
    }
    let h = channel::synthesize_csi(&scene)?;
    channel::save_csi(&a.out, &h)?;
    rec.artifact(&a.out);
    let (t, r) = a.pdp.unwrap_or((0, 0));
    if a.pdp.is_some() {
        let (delays, power) = power_delay_profile(&h, t, r)?;
        let p = sidecar(&a.out, "pdp.csv");
        let mut w = create(&p)?;
        let mut body = || -> std::io::Result<()> {
            writeln!(w, "delay_s,power")?;
            for (d, q) in delays.iter().zip(&power) {
                writeln!(w, "{d:.16e},{q:.16e}")?;
            }
            w.flush()
        };
        body().map_err(io_fail(&p))?;
        rec.artifact(&p);
    }
    if a.paths {
        if t >= scene.tx.element_count() || r >= scene.rx.element_count() {
            return Err(Failure::usage(format!("antenna pair ({t}, {r}) does not exist")));
        }
        let p = sidecar(&a.out, "paths.csv");
        let mut w = create(&p)?;
        write_paths_csv(&mut w, &trace_paths(&scene, t, r)).and_then(|_| w.flush()).map_err(io_fail(&p))?;
        rec.artifact(&p);
    }
    let config = json!({
        "scene": a.scene,
        "seed": scene.sim.seed,
        "pdp": a.pdp.map(|(t, r)| [t, r]),
        "paths": a.paths,
        "shape": [h.nt, h.nr, h.ns()],
    });
    rec.finish(&a.out, config, Some(scene.sim.seed))
}

#[derive(Args)]
pub struct GenDatasetArgs {
    /// Scene file (JSON).
    pub scene: PathBuf,
    /// Receiver positions: CSV with columns x,y,z (an optional header line is skipped).
    pub positions: PathBuf,
    /// Output dataset file.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Add complex Gaussian noise at this per-record SNR (dB).
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn read_positions(path: &Path) -> Result<Vec<Vec3>, Failure> {
    let text = std::fs::read_to_string(path).map_err(io_fail(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match floats::<3>(line) {
            Ok(p) => out.push(Vec3::from_array(p)),
            Err(_) if out.is_empty() && i == 0 => continue,
            Err(e) => return Err(Failure::usage(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

pub fn gen_dataset(a: GenDatasetArgs) -> Outcome {
    let mut rec = Recorder::new("gen-dataset");
    let scene = load(&mut rec, &a.scene)?;
    let positions = read_positions(&a.positions)?;
    rec.input(&a.positions)?;
    if positions.is_empty() {
        return Err(Failure::usage(format!("{}: no positions", a.positions.display())));
    }
    if let Some((lo, hi)) = scene.bounds() {
        for (i, p) in positions.iter().enumerate() {
            let inside = (0..3).all(|k| p.get(k) >= lo.get(k) && p.get(k) <= hi.get(k));
            if !inside {
                log::warn!("position {i} {:?} lies outside the scene bounds", p.to_array());
            }
        }
    }
    let noise = a.snr_db.filter(|s| s.is_finite()).map(|snr_db| Noise { snr_db, seed: a.seed });
    let d = calib::generate_dataset(&scene, &positions, noise)?;
    channel::save_dataset(&a.out, &d)?;
    rec.artifact(&a.out);
    let config = json!({
        "scene": a.scene,
        "positions": a.positions,
        "records": d.len(),
        "snr_db": noise.map(|n| n.snr_db),
        "seed": a.seed,
    });
    rec.finish(&a.out, config, Some(a.seed))
}

#[derive(Args)]
pub struct CalibrateArgs {
    /// Scene file (JSON) with the initial guess.
    pub scene: PathBuf,
    /// Dataset file.
    pub dataset: PathBuf,
    /// Calibrated scene output.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Loss history CSV (defaults to `<out>.history.csv`).
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Position parameters, e.g. `object:shelf:y` (repeatable or comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub pos: Vec<String>,
    /// Material parameters, e.g. `eps:floor` (repeatable or comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub mat: Vec<String>,
    /// Outer rounds; 0 only reports the initial losses.
    #[arg(long, default_value_t = 10)]
    pub rounds: usize,
    #[arg(long, default_value_t = 15)]
    pub position_steps: usize,
    #[arg(long, default_value_t = 15)]
    pub material_steps: usize,
    #[arg(long, default_value_t = 0.03)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.6)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lr_decay: f64,
    /// Savitzky-Golay window (odd).
    #[arg(long, default_value_t = 11)]
    pub sg_window: usize,
    #[arg(long, default_value_t = 3)]
    pub sg_order: usize,
}

pub fn calibrate(a: CalibrateArgs) -> Outcome {
    let mut rec = Recorder::new("calibrate");
    let scene = load(&mut rec, &a.scene)?;
    let dataset = channel::load_dataset(&a.dataset)?;
    rec.input(&a.dataset)?;
    let sel = |v: &[String]| ParamSelector::parse_list(&v.iter().map(String::as_str).collect::<Vec<_>>());
    let (pos, mat) = (sel(&a.pos)?, sel(&a.mat)?);
    if pos.is_empty() && mat.is_empty() {
        return Err(Failure::usage("nothing to calibrate: give --pos and/or --mat"));
    }
    let schedule = CalibSchedule {
        rounds: a.rounds,
        position_steps: a.position_steps,
        material_steps: a.material_steps,
        lr: a.lr,
        momentum: a.momentum,
        threshold: a.threshold,
        lr_decay: a.lr_decay,
        smoothing: Smoothing { window: a.sg_window, order: a.sg_order },
    };
    let outcome = calib::calibrate(&scene, &dataset, &pos, &mat, &schedule)?;
    let history = a.history.clone().unwrap_or_else(|| sidecar(&a.out, "history.csv"));
    let config = json!({
        "scene": a.scene,
        "dataset": a.dataset,
        "pos": a.pos,
        "mat": a.mat,
        "rounds": a.rounds,
        "position_steps": a.position_steps,
        "material_steps": a.material_steps,
        "lr": a.lr,
        "momentum": a.momentum,
        "threshold": a.threshold,
        "lr_decay": a.lr_decay,
        "sg_window": a.sg_window,
        "sg_order": a.sg_order,
        "history": history,
    });
    if a.rounds == 0 {
        println!("lp {:.16e}", outcome.initial.0);
        println!("lm {:.16e}", outcome.initial.1);
        return rec.finish(&a.out, config, None);
    }
    save_scene(&outcome.scene, &a.out)?;
    rec.artifact(&a.out);
    let mut w = create(&history)?;
    calib::write_history_csv(&mut w, &outcome.history, &pos, &mat).and_then(|_| w.flush()).map_err(io_fail(&history))?;
    rec.artifact(&history);
    println!(
        "rounds {} converged {} lp {:.6e} -> {:.6e} lm {:.6e} -> {:.6e}",
        outcome.rounds_run, outcome.converged, outcome.initial.0, outcome.best.0, outcome.initial.1, outcome.best.1
    );
    rec.finish(&a.out, config, None)
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    DeviceFree,
    DeviceBased,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::DeviceFree => Mode::DeviceFree,
            ModeArg::DeviceBased => Mode::DeviceBased,
        }
    }
}

/// Settings shared by `localize` and `landscape`.
#[derive(Args)]
pub struct LocArgs {
    /// Scene file (JSON); the target's own position is ignored.
    pub scene: PathBuf,
    /// Reference CSI file.
    pub reference: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// `tx`, `rx` or an object id.
    #[arg(long)]
    pub target: String,
    /// Search region `x0,y0,x1,y1` (defaults to the scene's horizontal extent).
    #[arg(long, value_parser = parse_rect, allow_hyphen_values = true)]
    pub region: Option<[f64; 4]>,
    #[arg(long)]
    pub gamma1: Option<f64>,
    /// Defaults to 0.01 * gamma1.
    #[arg(long)]
    pub gamma2: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    #[arg(long)]
    pub sigma_min: Option<f64>,
    /// Monte-Carlo samples per smoothed evaluation.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 11)]
    pub sg_window: usize,
    #[arg(long, default_value_t = 3)]
    pub sg_order: usize,
}

impl LocArgs {
    fn config(&self, scene: &Scene) -> Result<LocConfig, Failure> {
        let target: Target = self.target.parse()?;
        let region = match self.region {
            Some([x0, y0, x1, y1]) => Region::new([x0, y0], [x1, y1])?,
            None => {
                let (lo, hi) = scene.bounds().ok_or_else(|| Failure::usage("empty scene: give --region"))?;
                Region::new([lo.x, lo.y], [hi.x, hi.y])?
            }
        };
        let mut cfg = LocConfig::new(self.mode.into(), target, region);
        if let Some(g) = self.gamma1 {
            cfg.gamma1 = g;
            cfg.gamma2 = 0.01 * g;
        }
        if let Some(g) = self.gamma2 {
            cfg.gamma2 = g;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.sigma0 {
            cfg.sigma0 = v;
        }
        if let Some(v) = self.sigma_min {
            cfg.sigma_min = v;
        }
        if let Some(v) = self.samples {
            cfg.samples = v;
        }
        cfg.seed = self.seed;
        cfg.smoothing = Smoothing { window: self.sg_window, order: self.sg_order };
        Ok(cfg)
    }

    fn inputs(&self, rec: &mut Recorder) -> Result<(Scene, CsiTensor), Failure> {
        let scene = load(rec, &self.scene)?;
        let reference = channel::load_csi(&self.reference)?;
        rec.input(&self.reference)?;
        Ok((scene, reference))
    }
}

fn config_json(cfg: &LocConfig) -> serde_json::Value {
    json!({
        "mode": cfg.mode.to_string(),
        "target": cfg.target.to_string(),
        "region": cfg.region,
        "gamma1": cfg.gamma1,
        "gamma2": cfg.gamma2,
        "alpha": cfg.alpha,
        "sigma0": cfg.sigma0,
        "sigma_min": cfg.sigma_min,
        "samples": cfg.samples,
        "iterations": cfg.iterations,
        "lr": cfg.lr,
        "momentum": cfg.momentum,
        "seed": cfg.seed,
        "sg_window": cfg.smoothing.window,
        "sg_order": cfg.smoothing.order,
        "divergence_factor": cfg.divergence_factor,
    })
}

#[derive(Args)]
pub struct LocalizeArgs {
    #[command(flatten)]
    pub common: LocArgs,
    /// Trace CSV output.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Result JSON (defaults to `<out>.result.json`).
    #[arg(long)]
    pub result: Option<PathBuf>,
    /// Initial estimate `x,y` (defaults to the region center).
    #[arg(long, value_parser = parse_xy, allow_hyphen_values = true)]
    pub init: Option<[f64; 2]>,
    /// True position `x,y`; adds the final error to the result.
    #[arg(long, value_parser = parse_xy, allow_hyphen_values = true)]
    pub ground_truth: Option<[f64; 2]>,
    /// Ablation: single sample at the minimum kernel width, no bias weighting.
    #[arg(long)]
    pub no_smoothing: bool,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.03)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.6)]
    pub momentum: f64,
    /// Abort when the loss exceeds this multiple of the largest first-iteration loss.
    #[arg(long, default_value_t = 10.0)]
    pub divergence_factor: f64,
}

pub fn localize(a: LocalizeArgs) -> Outcome {
    let mut rec = Recorder::new("localize");
    let (scene, reference) = a.common.inputs(&mut rec)?;
    let mut cfg = a.common.config(&scene)?;
    cfg.iterations = a.iterations;
    cfg.lr = a.lr;
    cfg.momentum = a.momentum;
    cfg.divergence_factor = a.divergence_factor;
    if a.no_smoothing {
        cfg = cfg.without_smoothing();
    }
    let init = a.init.unwrap_or_else(|| cfg.region.center());
    let trace = loc::localize(&scene, &reference, &cfg, init, a.ground_truth)?;
    let mut w = create(&a.out)?;
    loc::write_trace_csv(&mut w, &trace).and_then(|_| w.flush()).map_err(io_fail(&a.out))?;
    rec.artifact(&a.out);
    let result_path = a.result.clone().unwrap_or_else(|| sidecar(&a.out, "result.json"));
    let result = LocResult::new(&cfg, &trace);
    let text = serde_json::to_string_pretty(&result).map_err(|e| Failure::runtime(e.to_string()))?;
    let mut w = create(&result_path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.write_all(b"\n")).and_then(|_| w.flush()).map_err(io_fail(&result_path))?;
    rec.artifact(&result_path);
    match trace.error {
        Some(e) => println!("estimate {:.6} {:.6} error {:.6} m", trace.estimate[0], trace.estimate[1], e),
        None => println!("estimate {:.6} {:.6}", trace.estimate[0], trace.estimate[1]),
    }
    let mut config = config_json(&cfg);
    config["scene"] = json!(a.common.scene);
    config["reference"] = json!(a.common.reference);
    config["init"] = json!(init);
    config["ground_truth"] = json!(a.ground_truth);
    config["no_smoothing"] = json!(a.no_smoothing);
    config["result"] = json!(result_path);
    rec.finish(&a.out, config, Some(cfg.seed))
}

#[derive(Args)]
pub struct LandscapeArgs {
    #[command(flatten)]
    pub common: LocArgs,
    /// Grid CSV output.
    #[arg(long, short)]
    pub out: PathBuf,
    /// x values: `a:b:step` or a single value.
    #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
    pub x: Axis,
    /// y values: `a:b:step` or a single value.
    #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
    pub y: Axis,
}

pub fn landscape(a: LandscapeArgs) -> Outcome {
    let mut rec = Recorder::new("landscape");
    let (scene, reference) = a.common.inputs(&mut rec)?;
    let cfg = a.common.config(&scene)?;
    let points = loc::loss_landscape(&scene, &reference, &cfg, &a.x.0, &a.y.0)?;
    let mut w = create(&a.out)?;
    loc::write_landscape_csv(&mut w, &points).and_then(|_| w.flush()).map_err(io_fail(&a.out))?;
    rec.artifact(&a.out);
    let mut config = config_json(&cfg);
    config["scene"] = json!(a.common.scene);
    config["reference"] = json!(a.common.reference);
    config["x"] = json!(a.x.0);
    config["y"] = json!(a.y.0);
    rec.finish(&a.out, config, Some(cfg.seed))
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Preset {
    Room,
    Hall,
}

#[derive(Args)]
pub struct MakeSceneArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    /// Use the 160 MHz grid instead of the default 20 MHz one.
    #[arg(long)]
    pub wideband: bool,
    /// Scene file output; meshes are written beside it.
    #[arg(long, short)]
    pub out: PathBuf,
}

pub fn make_scene(a: MakeSceneArgs) -> Outcome {
    let mut rec = Recorder::new("make-scene");
    let mut scene = match a.preset {
        Preset::Room => presets::room(),
        Preset::Hall => presets::hall(),
    };
    if a.wideband {
        scene.freq = presets::wideband_grid();
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_fail(dir))?;
    }
    save_scene(&scene, &a.out)?;
    rec.artifact(&a.out);
    let name = match a.preset {
        Preset::Room => "room",
        Preset::Hall => "hall",
    };
    rec.finish(&a.out, json!({ "preset": name, "wideband": a.wideband }), None)
}

struct Check {
    name: String,
    pass: bool,
    detail: String,
}

fn check(name: impl Into<String>, pass: bool, detail: String) -> Check {
    Check { name: name.into(), pass, detail }
}

fn fresnel_checks() -> Result<Vec<Check>, Failure> {
    let close = |a: Complex64, b: Complex64| (a - b).norm() <= 1e-12;
    let c = |re: f64| Complex64::new(re, 0.0);
    let cases = [
        ("fresnel normal incidence eta=4", 1.0, c(4.0), c(-1.0 / 3.0), c(1.0 / 3.0)),
        ("fresnel grazing", 0.0, c(4.0), c(-1.0), c(-1.0)),
        ("fresnel matched eta=1", 0.6, c(1.0), c(0.0), c(0.0)),
    ];
    let mut out = Vec::new();
    for (name, cos, eta, rs, rp) in cases {
        let (s, p) = fresnel(cos, eta)?;
        out.push(check(name, close(s, rs) && close(p, rp), format!("r_s {s:.3e} r_p {p:.3e}")));
    }
    Ok(out)
}

fn friis_checks() -> Result<Vec<Check>, Failure> {
    let mut out = Vec::new();
    for d in [2.0, 4.0, 6.0] {
        let s = Scene::free_space(Vec3::new(0.0, 0.0, 1.5), Vec3::new(d, 0.0, 1.5));
        let mut s1 = s.clone();
        s1.tx.array.count = 1;
        let h = channel::synthesize_csi(&s1)?;
        let mut worst: f64 = 0.0;
        for j in 0..h.ns() {
            let f = h.freq.frequency(j);
            let want = SPEED_OF_LIGHT / f / (4.0 * std::f64::consts::PI * d);
            worst = worst.max((h.get(0, 0, j).norm() - want).abs() / want);
        }
        out.push(check(format!("friis d={d} m"), worst <= 1e-9, format!("max rel err {worst:.3e}")));
    }
    Ok(out)
}

fn gradient_check() -> Result<Check, Failure> {
    let truth = presets::room();
    let reference = channel::synthesize_csi(&truth)?;
    let mut s = truth.clone();
    s.translate_object("shelf", Vec3::new(0.0, 0.03, 0.0))?;
    s.set_material("floor", 6.0, 0.08)?;
    let sel = ParamSelector::parse_list(&["object:shelf:x", "object:shelf:y", "eps:floor", "sigma:floor", "tx:x", "rx:y"])?;
    let r = fd_check(&s, &sel, &CsiMse::new(reference), 1e-6)?;
    Ok(check("finite-difference gradient", r.passes(1e-3, 1e-8, 1e-8), format!("max rel err {:.3e}", r.max_rel_error)))
}

fn savgol_check() -> Result<Check, Failure> {
    let n = 64;
    let sg = SavGol::new(n, 11, 3)?;
    let x: Vec<Complex64> = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            Complex64::new(1.0 - 2.0 * t + 0.5 * t * t * t, t * t)
        })
        .collect();
    let y = sg.apply(&x);
    let worst = x.iter().zip(&y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(check("savitzky-golay preserves cubics", worst <= 1e-10, format!("max abs err {worst:.3e}")))
}

pub fn self_check() -> Outcome {
    let mut checks = fresnel_checks()?;
    checks.extend(friis_checks()?);
    checks.push(gradient_check()?);
    checks.push(savgol_check()?);
    let mut failed = 0;
    for c in &checks {
        println!("{} {} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.pass);
    }
    if failed > 0 {
        return Err(Failure::runtime(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_ranges() {
        assert_eq!(parse_axis("-1:1:0.05").unwrap().0.len(), 41);
        assert_eq!(parse_axis("2.5").unwrap(), Axis(vec![2.5]));
        assert!(parse_axis("1:0:0.1").unwrap().0.is_empty());
        assert!(parse_axis("0:1:0").is_err());
        assert!(parse_axis("0:1").is_err());
    }

    #[test]
    fn number_lists() {
        assert_eq!(parse_xy("1.5, -2").unwrap(), [1.5, -2.0]);
        assert!(parse_xy("1,2,3").is_err());
        assert_eq!(parse_rect("0,0,4,4").unwrap(), [0.0, 0.0, 4.0, 4.0]);
        assert_eq!(parse_pair("2,0").unwrap(), (2, 0));
    }
}
