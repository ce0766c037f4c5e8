//! Specular path discovery and geometry.
//!
//! Discovery shoots rays from every transmitter element on a nested sphere
//! lattice and records each face sequence a ray visits; every prefix is a
//! candidate connection to the receiver. Each candidate is then solved exactly
//! for the actual endpoints (see [`solve`]), which makes the path set
//! independent of the receiver position and the geometry differentiable.

pub mod geom;
pub mod solve;

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;

pub use geom::{intersect, intersect_face, lattice_point, reflect, seed_rotation, FaceSet, Hit, Ray, EPS_GEO};
pub use solve::{solve_path, SolvedPath, PRUNE_VISIBILITY};

use crate::math::{Mat3, Scalar, Vec3, SPEED_OF_LIGHT, V3};
use crate::scene::Scene;
use crate::vars::{SceneVars, WorldFaces};

/// Ordered face-id sequence of a path; empty for line of sight.
/// Sorted by bounce count, then lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct PathKey(pub Vec<u32>);

impl PathKey {
    pub fn los() -> Self {
        Self(Vec::new())
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }
}

impl Ord for PathKey {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.len().cmp(&o.0.len()).then_with(|| self.0.cmp(&o.0))
    }
}

impl PartialOrd for PathKey {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl fmt::Display for PathKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("los");
        }
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        f.write_str(&parts.join("-"))
    }
}

/// One propagation path between a transmitter element and a receiver element.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub key: PathKey,
    /// `Q_0` (transmitter element), reflection points, `Q_{K+1}` (receiver element).
    pub points: Vec<Vec3>,
    /// Unit face normal per bounce.
    pub normals: Vec<Vec3>,
    /// Material index per bounce, in `Scene::materials` key order.
    pub materials: Vec<usize>,
    /// `|cos|` of the incidence angle per bounce.
    pub cosines: Vec<f64>,
    /// Seconds.
    pub tau: f64,
    /// Polar and azimuth angles of departure in the transmitter frame, radians.
    pub aod: (f64, f64),
    /// Polar and azimuth angles of arrival in the receiver frame, radians.
    pub aoa: (f64, f64),
    pub visibility: f64,
}

impl PathRecord {
    pub fn depth(&self) -> usize {
        self.key.depth()
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

fn angles(frame: &Mat3, dir: Vec3) -> (f64, f64) {
    let l = frame.transpose().apply(dir);
    (l.z.clamp(-1.0, 1.0).acos(), l.y.atan2(l.x))
}

/// Candidate path keys for the current geometry and transmitter array; the
/// LoS key is always present. Independent of the receiver and of thread count.
pub fn discover(scene: &Scene, set: &FaceSet) -> Vec<PathKey> {
    let mut keys = BTreeSet::new();
    keys.insert(PathKey::los());
    let depth = scene.sim.max_depth;
    if depth > 0 && !set.world.is_empty() {
        let rot = seed_rotation(scene.sim.seed);
        for e in 0..scene.tx.element_count() {
            let origin = scene.tx.array.element(e);
            let found = (0..scene.sim.n_rays)
                .into_par_iter()
                .fold(BTreeSet::new, |mut acc, i| {
                    let mut ray = Ray::new(origin, rot.apply(lattice_point(i)));
                    let mut seq = Vec::with_capacity(depth);
                    for _ in 0..depth {
                        let Some(hit) = intersect(&ray, set) else { break };
                        seq.push(hit.face as u32);
                        acc.insert(PathKey(seq.clone()));
                        ray = Ray::new(hit.point, reflect(ray.dir, hit.normal));
                    }
                    acc
                })
                .reduce(BTreeSet::new, |mut a, mut b| {
                    a.append(&mut b);
                    a
                });
            keys.extend(found);
        }
    }
    keys.into_iter().collect()
}

/// Surviving paths as `(key index, path)` in key order.
#[derive(Clone, Debug)]
pub struct Solved<S> {
    pub paths: Vec<(usize, SolvedPath<S>)>,
    pub pruned: usize,
}

/// Discovered keys for a scene, reusable while the geometry and transmitter
/// are unchanged (receiver moves keep them valid).
#[derive(Clone, Debug)]
pub struct Tracer {
    keys: Vec<PathKey>,
}

impl Tracer {
    pub fn new(scene: &Scene) -> Self {
        let faces = WorldFaces::build(scene, &SceneVars::constant(scene));
        Self { keys: discover(scene, &FaceSet::new(faces)) }
    }

    pub fn from_keys(mut keys: Vec<PathKey>) -> Self {
        keys.sort();
        keys.dedup();
        Self { keys }
    }

    pub fn keys(&self) -> &[PathKey] {
        &self.keys
    }

    /// Solves every candidate between two endpoints. Invalid keys are
    /// skipped; valid ones below [`PRUNE_VISIBILITY`] are counted as pruned.
    pub fn solve<S: Scalar>(&self, faces: &WorldFaces<S>, tx: V3<S>, rx: V3<S>, soft_width: f64) -> Solved<S> {
        let mut out = Solved { paths: Vec::new(), pruned: 0 };
        for (i, k) in self.keys.iter().enumerate() {
            let Some(p) = solve_path(&k.0, tx, rx, faces, soft_width) else { continue };
            if p.visibility.val() >= PRUNE_VISIBILITY {
                out.paths.push((i, p));
            } else {
                out.pruned += 1;
            }
        }
        out
    }

    /// Path records for one transmitter/receiver element pair. Only paths
    /// whose reflection points lie on their faces are listed; the soft edge
    /// tails that synthesis keeps (which sum to one across faces sharing an
    /// edge in a plane) are left out.
    pub fn trace(&self, scene: &Scene, tx_element: usize, rx_element: usize) -> Vec<PathRecord> {
        let faces = WorldFaces::build(scene, &SceneVars::constant(scene));
        let tx = scene.tx.array.element(tx_element);
        let rx = scene.rx.array.element(rx_element);
        self.solve(&faces, tx, rx, scene.sim.soft_width)
            .paths
            .into_iter()
            .filter(|(i, p)| {
                self.keys[*i].0.iter().zip(&p.points[1..]).all(|(&f, &q)| faces.faces[f as usize].edge_margin(q) >= 0.0)
            })
            .map(|(i, p)| record(scene, &faces, self.keys[i].clone(), p))
            .collect()
    }
}

fn record(scene: &Scene, faces: &WorldFaces<f64>, key: PathKey, p: SolvedPath<f64>) -> PathRecord {
    let dirs = p.segment_dirs();
    let normals = key.0.iter().map(|&f| faces.faces[f as usize].n).collect();
    let materials = key.0.iter().map(|&f| faces.faces[f as usize].material).collect();
    let cosines = key
        .0
        .iter()
        .zip(&dirs)
        .map(|(&f, d)| d.dot(faces.faces[f as usize].n).abs().min(1.0))
        .collect();
    let last = *dirs.last().expect("at least one segment");
    PathRecord {
        aod: angles(scene.tx.orientation(), dirs[0]),
        aoa: angles(scene.rx.orientation(), -last),
        tau: p.length / SPEED_OF_LIGHT,
        key,
        points: p.points,
        normals,
        materials,
        cosines,
        visibility: p.visibility,
    }
}

/// All paths between one transmitter element and one receiver element,
/// sorted by key.
pub fn trace_paths(scene: &Scene, tx_element: usize, rx_element: usize) -> Vec<PathRecord> {
    Tracer::new(scene).trace(scene, tx_element, rx_element)
}

/// Debug dump: key, bounce count, delay (ns), visibility, AoD/AoA (degrees).
pub fn write_paths_csv<W: Write>(out: &mut W, paths: &[PathRecord]) -> std::io::Result<()> {
    writeln!(out, "key,k,tau_ns,visibility,aod_theta_deg,aod_phi_deg,aoa_theta_deg,aoa_phi_deg")?;
    for p in paths {
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            p.key,
            p.depth(),
            p.tau * 1e9,
            p.visibility,
            p.aod.0.to_degrees(),
            p.aod.1.to_degrees(),
            p.aoa.0.to_degrees(),
            p.aoa.1.to_degrees()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Material, SceneObject, TriMesh};
    use std::sync::Arc;

    fn free_space(d: f64) -> Scene {
        let mut s = Scene::free_space(Vec3::new(0.0, 0.0, 1.2), Vec3::new(d, 0.0, 1.2));
        s.tx.array.count = 1;
        s
    }

    fn with_floor(mut s: Scene) -> Scene {
        s.add_material(Material::new("floor", 4.0, 0.0).unwrap());
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
    fn free_space_los() {
        let mut s = free_space(4.0);
        s.sim.max_depth = 0;
        let p = trace_paths(&s, 0, 0);
        assert_eq!(p.len(), 1);
        assert!(p[0].key.0.is_empty());
        assert!((p[0].tau - 4.0 / SPEED_OF_LIGHT).abs() < 1e-20);
        assert!((p[0].tau * 1e9 - 13.342).abs() < 1e-3);
        assert_eq!(p[0].visibility, 1.0);
    }

    #[test]
    fn floor_adds_one_bounce() {
        let mut s = with_floor(free_space(4.0));
        s.sim.max_depth = 1;
        s.sim.n_rays = 2000;
        let p = trace_paths(&s, 0, 0);
        assert_eq!(p.len(), 2, "{:?}", p.iter().map(|r| r.key.to_string()).collect::<Vec<_>>());
        let want = (16.0f64 + 2.4 * 2.4).sqrt() / SPEED_OF_LIGHT;
        assert!((p[1].tau - want).abs() < 1e-12 * want);
        assert!((p[1].cosines[0] - 2.4 / (16.0f64 + 2.4 * 2.4).sqrt()).abs() < 1e-12);
        assert!((p[1].aod.0 - (std::f64::consts::FRAC_PI_2 + (2.4f64 / 4.0).atan())).abs() < 1e-12);
    }

    #[test]
    fn wall_blocks_los() {
        let mut s = free_space(4.0);
        s.add_material(Material::new("wall", 5.0, 0.0).unwrap());
        let m = TriMesh::cuboid(Vec3::new(1.9, -20.0, -20.0), Vec3::new(2.1, 20.0, 20.0)).unwrap();
        s.add_object(SceneObject {
            id: "wall".into(),
            mesh: Arc::new(m),
            material: "wall".into(),
            position: Vec3::ZERO,
            movable: false,
            z_locked: true,
        })
        .unwrap();
        s.sim.max_depth = 0;
        assert!(trace_paths(&s, 0, 0).is_empty());
    }

    #[test]
    fn keys_sort_by_depth() {
        let mut v = vec![PathKey(vec![3, 1]), PathKey(vec![5]), PathKey::los(), PathKey(vec![0, 9])];
        v.sort();
        let s: Vec<String> = v.iter().map(|k| k.to_string()).collect();
        assert_eq!(s, ["los", "5", "0-9", "3-1"]);
    }

    #[test]
    fn csv_dump_has_one_line_per_path() {
        let mut s = with_floor(free_space(4.0));
        s.sim.max_depth = 1;
        s.sim.n_rays = 2000;
        let p = trace_paths(&s, 0, 0);
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &p).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + p.len());
        assert!(text.lines().nth(1).unwrap().starts_with("los,0,"));
    }
}
