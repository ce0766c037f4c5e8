use num_complex::Complex64;

use diffrt::calib::{calibrate, generate_dataset, loss_positions, smape, CalibSchedule, Objective, Phase, Smoothing};
use diffrt::channel::{synthesize_csi, CsiTensor, Dataset};
use diffrt::grad::ParamSelector;
use diffrt::math::Vec3;
use diffrt::scene::{presets, Role, Scene};
use diffrt::tracer::Tracer;

/// Hann-windowed power centroid over signed delay bins, by direct DFT.
fn centroid(row: &[Complex64], df: f64) -> f64 {
    let n = row.len();
    let (mut total, mut moment) = (0.0, 0.0);
    for b in 0..n {
        let mut x = Complex64::new(0.0, 0.0);
        for (j, z) in row.iter().enumerate() {
            let w = 0.5 - 0.5 * (std::f64::consts::TAU * j as f64 / n as f64).cos();
            x += z * w * Complex64::from_polar(1.0, std::f64::consts::TAU * (j * b) as f64 / n as f64);
        }
        let signed = if 2 * b < n { b as f64 } else { b as f64 - n as f64 };
        let p = x.norm_sqr();
        total += p;
        moment += p * signed / (n as f64 * df);
    }
    moment / total
}

fn delay_total(h: &CsiTensor) -> f64 {
    let mut acc = 0.0;
    for t in 0..h.nt {
        for r in 0..h.nr {
            acc += centroid(h.row(t, r), h.freq.df);
        }
    }
    acc
}

fn dataset(scene: &Scene, n: usize) -> Dataset {
    let pos: Vec<Vec3> = presets::record_positions().into_iter().step_by(50 / n).take(n).collect();
    generate_dataset(scene, &pos, None).unwrap()
}

#[test]
fn position_loss_matches_direct_recomputation() {
    let truth = presets::room();
    let d = dataset(&truth, 10);
    let mut s = truth.clone();
    s.translate_object("shelf", Vec3::new(0.0, 0.03, 0.0)).unwrap();
    s.set_material("floor", 7.0, 0.05).unwrap();
    let mut want = 0.0;
    for (p, meas) in &d.records {
        let mut at = s.clone();
        at.set_transceiver_origin(Role::Rx, *p).unwrap();
        let sim = synthesize_csi(&at).unwrap();
        want += smape(delay_total(meas), delay_total(&sim));
    }
    want /= d.len() as f64;
    let got = loss_positions(&s, &d).unwrap();
    assert!(want > 0.0);
    assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
}

#[test]
fn delay_loss_is_insensitive_to_permittivity_at_160_mhz() {
    let mut truth = presets::room();
    truth.freq = presets::wideband_grid();
    let d = generate_dataset(&truth, &presets::record_positions(), None).unwrap();
    let obj = Objective::new(&truth, &d, Smoothing::default()).unwrap();
    let sel = ParamSelector::parse_list(&["eps:floor", "object:shelf:y"]).unwrap();
    for dy in [0.04, -0.04] {
        let mut s = truth.clone();
        s.translate_object("shelf", Vec3::new(0.0, dy, 0.0)).unwrap();
        let g = obj.evaluate(&s, &Tracer::new(&s), &sel).unwrap().grad_lp;
        let ratio = g[0].abs() / g[1].abs();
        assert!(ratio <= 1e-2, "dy {dy}: |dL/deps| / |dL/dy| = {ratio}");
    }
}

#[test]
fn phases_mostly_end_below_where_they_start() {
    let mut truth = presets::room();
    truth.freq = presets::wideband_grid();
    let d = dataset(&truth, 25);
    let pos = ParamSelector::parse_list(&["object:shelf:y"]).unwrap();
    let mat = ParamSelector::parse_list(&["eps:floor"]).unwrap();
    let schedule = CalibSchedule { rounds: 3, ..CalibSchedule::default() };
    let (mut phases, mut down) = (0, 0);
    for (dy, eps) in [(0.03, 7.0), (-0.02, 4.0), (0.01, 9.0)] {
        let mut s = truth.clone();
        s.translate_object("shelf", Vec3::new(0.0, dy, 0.0)).unwrap();
        s.set_material("floor", eps, 0.05).unwrap();
        let out = calibrate(&s, &d, &pos, &mat, &schedule).unwrap();
        let mut start = None;
        for r in &out.history {
            let l = if r.phase == Phase::Position { r.lp } else { r.lm };
            if r.step == 0 {
                start = Some(l);
            }
            let steps = if r.phase == Phase::Position { schedule.position_steps } else { schedule.material_steps };
            if r.step == steps {
                phases += 1;
                down += usize::from(l <= start.unwrap());
            }
        }
        for m in out.scene.materials.values() {
            assert!(m.eps_r >= 1.0 && m.sigma >= 0.0);
        }
    }
    assert!(down * 10 >= phases * 9, "{down} of {phases} phases decreased");
}
