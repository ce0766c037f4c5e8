//! CSI synthesis from traced paths, and the measurement features derived
//! from CSI.

mod features;
mod io;

pub use features::{
    csi_ratio, delay_feature, idft, power_delay_profile, savgol, DelayFeature, RatioTensor, SavGol,
    DELAY_POWER_FLOOR, RATIO_FLOOR,
};
pub use io::{load_csi, load_dataset, read_csi, read_dataset, save_csi, save_dataset, write_csi, write_dataset, Dataset};

use num_complex::Complex;
use rayon::prelude::*;

use crate::em::{permittivity, PathOptics};
use crate::error::{Error, Result};
use crate::math::{cis, cx, Scalar, SPEED_OF_LIGHT};
use crate::scene::{FreqGrid, Scene};
use crate::tracer::Tracer;
use crate::vars::{SceneVars, WorldFaces};

/// Complex channel indexed `[n_t][n_r][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiTensor<S = f64> {
    pub nt: usize,
    pub nr: usize,
    pub freq: FreqGrid,
    pub data: Vec<Complex<S>>,
}

impl<S: Scalar> CsiTensor<S> {
    pub fn zeros(nt: usize, nr: usize, freq: FreqGrid) -> Self {
        Self { nt, nr, data: vec![cx(S::zero()); nt * nr * freq.ns], freq }
    }

    pub fn ns(&self) -> usize {
        self.freq.ns
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, t: usize, r: usize, j: usize) -> Complex<S> {
        self.data[(t * self.nr + r) * self.freq.ns + j]
    }

    /// Subcarrier series of one antenna pair.
    pub fn row(&self, t: usize, r: usize) -> &[Complex<S>] {
        let ns = self.freq.ns;
        let s = (t * self.nr + r) * ns;
        &self.data[s..s + ns]
    }

    pub fn row_mut(&mut self, t: usize, r: usize) -> &mut [Complex<S>] {
        let ns = self.freq.ns;
        let s = (t * self.nr + r) * ns;
        &mut self.data[s..s + ns]
    }

    /// Primal values.
    pub fn value(&self) -> CsiTensor<f64> {
        CsiTensor {
            nt: self.nt,
            nr: self.nr,
            freq: self.freq,
            data: self.data.iter().map(|z| Complex::new(z.re.val(), z.im.val())).collect(),
        }
    }

    pub fn same_shape<T>(&self, o: &CsiTensor<T>) -> bool {
        self.nt == o.nt && self.nr == o.nr && self.freq == o.freq
    }
}

impl CsiTensor<f64> {
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Path bookkeeping of one synthesis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SynthStats {
    pub paths: usize,
    pub pruned: usize,
}

/// CSI for scene parameters `vars` over the keys of `tracer`, summing path
/// contributions in key order for every antenna pair.
pub fn synthesize<S: Scalar>(
    scene: &Scene,
    tracer: &Tracer,
    vars: &SceneVars<S>,
) -> Result<(CsiTensor<S>, SynthStats)> {
    let faces = WorldFaces::build(scene, vars);
    let freqs = scene.freq.frequencies();
    let etas: Vec<Vec<Complex<S>>> = freqs
        .iter()
        .map(|&f| vars.eps_r.iter().zip(&vars.sigma).map(|(&e, &s)| permittivity(e, s, f)).collect())
        .collect();
    let (nt, nr) = (scene.tx.element_count(), scene.rx.element_count());
    let pairs: Vec<(usize, usize)> = (0..nt).flat_map(|t| (0..nr).map(move |r| (t, r))).collect();
    let rows: Vec<Result<(Vec<Complex<S>>, SynthStats)>> = pairs
        .par_iter()
        .map(|&(t, r)| {
            let tx = vars.tx_origin.add_f(scene.tx.array.element_offset(t));
            let rx = vars.rx_origin.add_f(scene.rx.array.element_offset(r));
            let solved = tracer.solve(&faces, tx, rx, scene.sim.soft_width);
            let mut row = vec![cx(S::zero()); freqs.len()];
            for (ki, p) in &solved.paths {
                let key = &tracer.keys()[*ki];
                let normals: Vec<_> = key.0.iter().map(|&f| faces.faces[f as usize].n).collect();
                let mats: Vec<_> = key.0.iter().map(|&f| faces.faces[f as usize].material).collect();
                let optics = PathOptics::new(&p.points, &normals, &mats, &scene.tx, &scene.rx, p.visibility);
                let tau = p.length / SPEED_OF_LIGHT;
                for (j, &f) in freqs.iter().enumerate() {
                    let g = optics.amplitude(f, &etas[j]) * cis(tau * (-std::f64::consts::TAU * f));
                    if !(g.re.val().is_finite() && g.im.val().is_finite()) {
                        return Err(Error::NonFinite { key: key.to_string(), what: format!("coefficient at {f} Hz") });
                    }
                    row[j] = row[j] + g;
                }
            }
            Ok((row, SynthStats { paths: solved.paths.len(), pruned: solved.pruned }))
        })
        .collect();
    let mut h = CsiTensor::zeros(nt, nr, scene.freq);
    let mut stats = SynthStats::default();
    for (&(t, r), row) in pairs.iter().zip(rows) {
        let (row, s) = row?;
        h.row_mut(t, r).copy_from_slice(&row);
        stats.paths += s.paths;
        stats.pruned += s.pruned;
    }
    Ok((h, stats))
}

/// CSI of a scene with fresh path discovery.
pub fn synthesize_csi(scene: &Scene) -> Result<CsiTensor> {
    Ok(synthesize(scene, &Tracer::new(scene), &SceneVars::constant(scene))?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::tracer::PathKey;

    fn free(d: f64) -> Scene {
        Scene::free_space(Vec3::new(0.0, 0.0, 1.0), Vec3::new(d, 0.0, 1.0))
    }

    #[test]
    fn single_path_closed_form() {
        let s = free(4.0);
        let h = synthesize_csi(&s).unwrap();
        assert_eq!((h.nt, h.nr, h.ns()), (3, 1, 128));
        let row = h.row(0, 0);
        let tau = 4.0 / SPEED_OF_LIGHT;
        for (j, z) in row.iter().enumerate() {
            let f = s.freq.frequency(j);
            let want = SPEED_OF_LIGHT / f / (4.0 * std::f64::consts::PI * 4.0);
            assert!((z.norm() - want).abs() < 1e-9 * want);
        }
        for j in 1..row.len() {
            let dphi = (row[j] / row[j - 1]).arg();
            let want = -std::f64::consts::TAU * s.freq.df * tau;
            assert!((dphi - want).abs() < 1e-9);
        }
    }

    #[test]
    fn no_paths_gives_zeros() {
        let s = free(4.0);
        let (h, st) = synthesize(&s, &Tracer::from_keys(Vec::new()), &SceneVars::<f64>::constant(&s)).unwrap();
        assert!(h.data.iter().all(|z| z.norm() == 0.0));
        assert_eq!(st.paths, 0);
    }

    #[test]
    fn union_of_path_sets_is_linear() {
        let mut s = free(4.0);
        s.add_material(crate::scene::Material::new("floor", 5.24, 0.01).unwrap());
        let m = crate::scene::TriMesh::cuboid(Vec3::new(-50.0, -50.0, -1.0), Vec3::new(50.0, 50.0, 0.0)).unwrap();
        s.add_object(crate::scene::SceneObject {
            id: "floor".into(),
            mesh: std::sync::Arc::new(m),
            material: "floor".into(),
            position: Vec3::ZERO,
            movable: false,
            z_locked: true,
        })
        .unwrap();
        s.sim.max_depth = 1;
        let all = Tracer::new(&s);
        assert!(all.keys().len() >= 2);
        let v = SceneVars::<f64>::constant(&s);
        let (a, _) = synthesize(&s, &Tracer::from_keys(vec![PathKey::los()]), &v).unwrap();
        let rest: Vec<_> = all.keys()[1..].to_vec();
        let (b, _) = synthesize(&s, &Tracer::from_keys(rest), &v).unwrap();
        let (h, _) = synthesize(&s, &all, &v).unwrap();
        for i in 0..h.len() {
            assert!((h.data[i] - a.data[i] - b.data[i]).norm() < 1e-15);
        }
    }
}
