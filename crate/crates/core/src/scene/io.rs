//! JSON scene files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AntennaPattern, FreqGrid, Material, Role, Scene, SceneObject, SimConfig, Transceiver, TriMesh, UniformLinearArray};
use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    #[serde(default)]
    materials: BTreeMap<String, MaterialFile>,
    #[serde(default)]
    objects: BTreeMap<String, ObjectFile>,
    tx: TransceiverFile,
    rx: TransceiverFile,
    #[serde(default)]
    freq: FreqFile,
    #[serde(default)]
    sim: SimFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialFile {
    eps_r: f64,
    #[serde(default)]
    sigma: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectFile {
    mesh_path: PathBuf,
    material: String,
    #[serde(default)]
    position: [f64; 3],
    #[serde(default)]
    movable: bool,
    #[serde(default = "yes")]
    z_locked: bool,
}

fn yes() -> bool {
    true
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayFile {
    origin: [f64; 3],
    #[serde(default = "x_axis")]
    axis: [f64; 3],
    #[serde(default = "default_spacing")]
    spacing: f64,
    count: Option<usize>,
}

fn x_axis() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

fn default_spacing() -> f64 {
    0.089
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransceiverFile {
    array: ArrayFile,
    #[serde(default = "default_pattern")]
    pattern: String,
    /// Yaw, pitch, roll in degrees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orientation_deg: Option<[f64; 3]>,
}

fn default_pattern() -> String {
    AntennaPattern::IsotropicVertical.name().into()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FreqFile {
    fc_hz: f64,
    df_hz: f64,
    ns: usize,
}

impl Default for FreqFile {
    fn default() -> Self {
        let g = FreqGrid::default();
        Self { fc_hz: g.fc, df_hz: g.df, ns: g.ns }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SimFile {
    max_depth: usize,
    n_rays: usize,
    seed: u64,
    capture_radius_m: f64,
    soft_width_m: f64,
}

impl Default for SimFile {
    fn default() -> Self {
        let s = SimConfig::default();
        Self {
            max_depth: s.max_depth,
            n_rays: s.n_rays,
            seed: s.seed,
            capture_radius_m: s.capture_radius,
            soft_width_m: s.soft_width,
        }
    }
}

fn transceiver(role: Role, f: TransceiverFile) -> Result<Transceiver> {
    let field = match role {
        Role::Tx => "tx",
        Role::Rx => "rx",
    };
    let count = f.array.count.unwrap_or(match role {
        Role::Tx => 3,
        Role::Rx => 1,
    });
    let array = UniformLinearArray::new(
        Vec3::from_array(f.array.origin),
        Vec3::from_array(f.array.axis),
        f.array.spacing,
        count,
    )
    .map_err(|e| Error::invalid(field, e.to_string()))?;
    let pattern = AntennaPattern::parse(&f.pattern).map_err(|e| Error::invalid(format!("{field}.pattern"), e.to_string()))?;
    Ok(Transceiver::new(role, array, pattern, f.orientation_deg.unwrap_or([0.0; 3])))
}

fn transceiver_file(t: &Transceiver) -> TransceiverFile {
    let orientation_deg = (t.orientation_deg() != [0.0; 3]).then(|| t.orientation_deg());
    TransceiverFile {
        array: ArrayFile {
            origin: t.array.origin.to_array(),
            axis: t.array.axis.to_array(),
            spacing: t.array.spacing,
            count: Some(t.array.count),
        },
        pattern: t.pattern.name().into(),
        orientation_deg,
    }
}

/// Parses a scene file; mesh paths are resolved relative to the file.
pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SceneFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let mut materials = BTreeMap::new();
    for (name, m) in file.materials {
        let mat = Material::new(name.clone(), m.eps_r, m.sigma)
            .map_err(|e| Error::invalid(format!("materials.{name}"), e.to_string()))?;
        materials.insert(name, mat);
    }

    let mut objects = Vec::new();
    for (id, o) in file.objects {
        if !materials.contains_key(&o.material) {
            return Err(Error::invalid(
                format!("objects.{id}.material"),
                format!("unknown material `{}`", o.material),
            ));
        }
        let mesh_path = base.join(&o.mesh_path);
        let mesh = TriMesh::load_obj(&mesh_path)?;
        if let Some(m) = mesh.face_materials().iter().flatten().find(|m| !materials.contains_key(*m)) {
            return Err(Error::invalid(
                format!("objects.{id}.mesh_path"),
                format!("{} uses unknown material `{m}`", mesh_path.display()),
            ));
        }
        objects.push(SceneObject {
            id,
            mesh: Arc::new(mesh),
            material: o.material,
            position: Vec3::from_array(o.position),
            movable: o.movable,
            z_locked: o.z_locked,
        });
    }

    let scene = Scene {
        materials,
        objects,
        tx: transceiver(Role::Tx, file.tx)?,
        rx: transceiver(Role::Rx, file.rx)?,
        freq: FreqGrid::new(file.freq.fc_hz, file.freq.df_hz, file.freq.ns)
            .map_err(|e| Error::invalid("freq", e.to_string()))?,
        sim: SimConfig {
            max_depth: file.sim.max_depth,
            n_rays: file.sim.n_rays,
            seed: file.sim.seed,
            capture_radius: file.sim.capture_radius_m,
            soft_width: file.sim.soft_width_m,
        },
    };
    scene.validate()?;
    Ok(scene)
}

/// Writes the scene as JSON plus one OBJ per object next to it
/// (`<stem>.<object id>.obj`).
pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    scene.validate()?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scene");
    let mut objects = BTreeMap::new();
    for o in &scene.objects {
        let name = format!("{stem}.{}.obj", o.id);
        let mesh_path = dir.join(&name);
        std::fs::write(&mesh_path, o.mesh.to_obj()).map_err(|e| Error::io(&mesh_path, e))?;
        objects.insert(
            o.id.clone(),
            ObjectFile {
                mesh_path: PathBuf::from(name),
                material: o.material.clone(),
                position: o.position.to_array(),
                movable: o.movable,
                z_locked: o.z_locked,
            },
        );
    }
    let file = SceneFile {
        materials: scene
            .materials
            .iter()
            .map(|(k, m)| (k.clone(), MaterialFile { eps_r: m.eps_r, sigma: m.sigma }))
            .collect(),
        objects,
        tx: transceiver_file(&scene.tx),
        rx: transceiver_file(&scene.rx),
        freq: FreqFile { fc_hz: scene.freq.fc, df_hz: scene.freq.df, ns: scene.freq.ns },
        sim: SimFile {
            max_depth: scene.sim.max_depth,
            n_rays: scene.sim.n_rays,
            seed: scene.sim.seed,
            capture_radius_m: scene.sim.capture_radius,
            soft_width_m: scene.sim.soft_width,
        },
    };
    let text = serde_json::to_string_pretty(&file).expect("scene serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHOEBOX: &str = r#"{
      "materials": {"concrete": {"eps_r": 5.24, "sigma": 0.0}},
      "objects": {"room": {"mesh_path": "room.obj", "material": "concrete"}},
      "tx": {"array": {"origin": [1.0, 1.5, 1.2]}},
      "rx": {"array": {"origin": [5.0, 1.5, 1.2]}}
    }"#;

    fn write_room(dir: &Path) {
        let m = TriMesh::shoebox(Vec3::new(6.0, 3.0, 3.0), "concrete", "concrete", "concrete").unwrap();
        std::fs::write(dir.join("room.obj"), m.to_obj()).unwrap();
    }

    #[test]
    fn loads_minimal_shoebox() {
        let dir = tempfile::tempdir().unwrap();
        write_room(dir.path());
        let p = dir.path().join("scene.json");
        std::fs::write(&p, SHOEBOX).unwrap();
        let s = load_scene(&p).unwrap();
        assert_eq!(s.face_count(), 12);
        assert_eq!(s.tx.element_count(), 3);
        assert_eq!(s.rx.element_count(), 1);
        assert_eq!(s.freq, FreqGrid::default());
        assert_eq!(s.materials["concrete"].eps_r, super::super::CONCRETE_EPS_R);
    }

    #[test]
    fn unknown_material_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        write_room(dir.path());
        let p = dir.path().join("scene.json");
        std::fs::write(&p, SHOEBOX.replace(r#""material": "concrete""#, r#""material": "glass2""#)).unwrap();
        let err = load_scene(&p).unwrap_err().to_string();
        assert!(err.contains("objects.room.material") && err.contains("glass2"), "{err}");
    }

    #[test]
    fn parse_errors_report_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scene.json");
        std::fs::write(&p, "{\n\"tx\": 3,\n}").unwrap();
        match load_scene(&p).unwrap_err() {
            Error::Parse { line, .. } => assert!(line >= 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn save_then_load_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        write_room(dir.path());
        let p = dir.path().join("scene.json");
        std::fs::write(&p, SHOEBOX).unwrap();
        let mut s = load_scene(&p).unwrap();
        s.tx.set_orientation_deg([30.0, 5.0, -12.5]);
        s.objects[0].position = Vec3::new(0.1, 0.2, 0.0);
        let out = dir.path().join("out").join("saved.json");
        std::fs::create_dir_all(out.parent().unwrap()).unwrap();
        save_scene(&s, &out).unwrap();
        let back = load_scene(&out).unwrap();
        assert_eq!(back.objects, s.objects);
        assert_eq!(back.materials, s.materials);
        assert_eq!(back.tx, s.tx);
        assert_eq!(back.rx, s.rx);
    }
}
