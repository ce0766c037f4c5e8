//! Scene parameterization: meshes, materials, transceiver arrays, the OFDM
//! frequency grid and tracer settings, plus the parameter edits used by the
//! optimizers.

mod io;
mod mesh;
pub mod presets;

use std::collections::BTreeMap;
use std::sync::Arc;

pub use io::{load_scene, save_scene};
pub use mesh::TriMesh;

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Relative permittivity of concrete (ITU-R P.2040 recommendation).
pub const CONCRETE_EPS_R: f64 = 5.24;

#[derive(Clone, Debug, PartialEq)]
pub struct Material {
    pub name: String,
    pub eps_r: f64,
    /// Conductivity in S/m.
    pub sigma: f64,
}

impl Material {
    pub fn new(name: impl Into<String>, eps_r: f64, sigma: f64) -> Result<Self> {
        check_material(eps_r, sigma)?;
        Ok(Self { name: name.into(), eps_r, sigma })
    }
}

fn check_material(eps_r: f64, sigma: f64) -> Result<()> {
    if !(eps_r >= 1.0 && eps_r.is_finite()) {
        return Err(Error::Range(format!("relative permittivity {eps_r} must be >= 1")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Range(format!("conductivity {sigma} must be >= 0")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub id: String,
    /// Base geometry; world geometry is this mesh translated by `position`.
    pub mesh: Arc<TriMesh>,
    pub material: String,
    pub position: Vec3,
    pub movable: bool,
    pub z_locked: bool,
}

impl SceneObject {
    pub fn world_vertex(&self, k: usize) -> Vec3 {
        self.mesh.vertices()[k] + self.position
    }

    /// Material bound to a face (per-face override, else the object's).
    pub fn face_material(&self, face: usize) -> &str {
        self.mesh.face_materials()[face].as_deref().unwrap_or(&self.material)
    }

    pub fn world_bounds(&self) -> (Vec3, Vec3) {
        let (lo, hi) = self.mesh.bounds();
        (lo + self.position, hi + self.position)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Tx,
    Rx,
}

/// Built-in antenna field patterns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AntennaPattern {
    /// Unit gain in every direction, polarized along the local elevation unit vector.
    IsotropicVertical,
    /// Short vertical dipole, gain `sin(theta)` on the elevation component.
    ShortDipole,
}

impl AntennaPattern {
    pub fn name(&self) -> &'static str {
        match self {
            AntennaPattern::IsotropicVertical => "isotropic-vertical",
            AntennaPattern::ShortDipole => "short-dipole",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "isotropic-vertical" => Ok(AntennaPattern::IsotropicVertical),
            "short-dipole" => Ok(AntennaPattern::ShortDipole),
            other => Err(Error::invalid("pattern", format!("unknown antenna pattern `{other}`"))),
        }
    }
}

/// Uniform linear array: element `k` sits at `origin + k * spacing * axis`.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformLinearArray {
    pub origin: Vec3,
    pub axis: Vec3,
    pub spacing: f64,
    pub count: usize,
}

impl UniformLinearArray {
    pub fn new(origin: Vec3, axis: Vec3, spacing: f64, count: usize) -> Result<Self> {
        if count < 1 {
            return Err(Error::invalid("array.count", "need at least one element"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid("array.spacing", format!("spacing {spacing} must be > 0")));
        }
        let n = axis.norm();
        if !(n > 1e-12 && n.is_finite()) || !origin.is_finite() {
            return Err(Error::invalid("array.axis", "axis must be a finite non-zero vector"));
        }
        Ok(Self { origin, axis: axis.scale(1.0 / n), spacing, count })
    }

    /// Offset of element `k` from the array origin.
    pub fn element_offset(&self, k: usize) -> Vec3 {
        self.axis.scale(self.spacing * k as f64)
    }

    pub fn element(&self, k: usize) -> Vec3 {
        self.origin + self.element_offset(k)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transceiver {
    pub role: Role,
    pub array: UniformLinearArray,
    pub pattern: AntennaPattern,
    /// Yaw, pitch, roll in degrees as configured; `orientation` is derived from it.
    orientation_deg: [f64; 3],
    /// Local-to-global rotation of the antenna frame.
    orientation: Mat3,
}

impl Transceiver {
    /// Three elements spaced 8.9 cm along x.
    pub fn default_array(role: Role, origin: Vec3, count: usize) -> Self {
        Self {
            role,
            array: UniformLinearArray::new(origin, Vec3::new(1.0, 0.0, 0.0), 0.089, count)
                .expect("default array is valid"),
            pattern: AntennaPattern::IsotropicVertical,
            orientation_deg: [0.0; 3],
            orientation: Mat3::IDENTITY,
        }
    }

    pub fn new(role: Role, array: UniformLinearArray, pattern: AntennaPattern, orientation_deg: [f64; 3]) -> Self {
        let mut t = Self { role, array, pattern, orientation_deg: [0.0; 3], orientation: Mat3::IDENTITY };
        t.set_orientation_deg(orientation_deg);
        t
    }

    pub fn set_orientation_deg(&mut self, ypr: [f64; 3]) {
        self.orientation_deg = ypr;
        self.orientation = Mat3::from_ypr(ypr[0].to_radians(), ypr[1].to_radians(), ypr[2].to_radians());
    }

    pub fn orientation_deg(&self) -> [f64; 3] {
        self.orientation_deg
    }

    pub fn orientation(&self) -> &Mat3 {
        &self.orientation
    }

    pub fn element_count(&self) -> usize {
        self.array.count
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreqGrid {
    pub fc: f64,
    pub df: f64,
    pub ns: usize,
}

impl FreqGrid {
    pub fn new(fc: f64, df: f64, ns: usize) -> Result<Self> {
        let g = Self { fc, df, ns };
        if ns < 1 {
            return Err(Error::invalid("freq.ns", "need at least one subcarrier"));
        }
        if !(df >= 0.0 && df.is_finite() && fc.is_finite()) {
            return Err(Error::invalid("freq", "non-finite or negative spacing"));
        }
        if g.frequency(0) <= 0.0 {
            return Err(Error::invalid("freq", "lowest subcarrier frequency must be positive"));
        }
        Ok(g)
    }

    /// Frequency of subcarrier `j`: `fc + (j - ns/2) * df`.
    pub fn frequency(&self, j: usize) -> f64 {
        self.fc + (j as f64 - self.ns as f64 / 2.0) * self.df
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.ns).map(|j| self.frequency(j)).collect()
    }

    pub fn bandwidth(&self) -> f64 {
        self.ns as f64 * self.df
    }
}

impl Default for FreqGrid {
    /// 5 GHz carrier, 20 MHz over 128 subcarriers.
    fn default() -> Self {
        Self { fc: 5e9, df: 156_250.0, ns: 128 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub max_depth: usize,
    pub n_rays: usize,
    pub seed: u64,
    pub capture_radius: f64,
    pub soft_width: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { max_depth: 2, n_rays: 20_000, seed: 0, capture_radius: 0.05, soft_width: 0.02 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rays < 1 {
            return Err(Error::invalid("sim.n_rays", "need at least one ray"));
        }
        if !(self.soft_width > 0.0 && self.soft_width.is_finite()) {
            return Err(Error::invalid("sim.soft_width_m", "must be > 0"));
        }
        if !(self.capture_radius > 0.0 && self.capture_radius.is_finite()) {
            return Err(Error::invalid("sim.capture_radius_m", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub materials: BTreeMap<String, Material>,
    /// Sorted by id; global face numbering follows this order.
    pub objects: Vec<SceneObject>,
    pub tx: Transceiver,
    pub rx: Transceiver,
    pub freq: FreqGrid,
    pub sim: SimConfig,
}

impl Scene {
    /// Empty scene (free space) with default arrays, grid and settings.
    pub fn free_space(tx_origin: Vec3, rx_origin: Vec3) -> Self {
        Self {
            materials: BTreeMap::new(),
            objects: Vec::new(),
            tx: Transceiver::default_array(Role::Tx, tx_origin, 3),
            rx: Transceiver::default_array(Role::Rx, rx_origin, 1),
            freq: FreqGrid::default(),
            sim: SimConfig::default(),
        }
    }

    pub fn add_material(&mut self, m: Material) {
        self.materials.insert(m.name.clone(), m);
    }

    pub fn add_object(&mut self, obj: SceneObject) -> Result<()> {
        if self.objects.iter().any(|o| o.id == obj.id) {
            return Err(Error::invalid("objects", format!("duplicate object id `{}`", obj.id)));
        }
        let at = self.objects.partition_point(|o| o.id < obj.id);
        self.objects.insert(at, obj);
        Ok(())
    }

    pub fn object(&self, id: &str) -> Result<&SceneObject> {
        self.objects.iter().find(|o| o.id == id).ok_or_else(|| Error::UnknownObject(id.into()))
    }

    pub fn object_index(&self, id: &str) -> Result<usize> {
        self.objects.iter().position(|o| o.id == id).ok_or_else(|| Error::UnknownObject(id.into()))
    }

    pub fn material(&self, name: &str) -> Result<&Material> {
        self.materials.get(name).ok_or_else(|| Error::UnknownMaterial(name.into()))
    }

    pub fn face_count(&self) -> usize {
        self.objects.iter().map(|o| o.mesh.face_count()).sum()
    }

    /// Checks every cross-reference and range invariant.
    pub fn validate(&self) -> Result<()> {
        for (name, m) in &self.materials {
            if name != &m.name {
                return Err(Error::invalid(format!("materials.{name}"), "name does not match key"));
            }
            check_material(m.eps_r, m.sigma).map_err(|e| Error::invalid(format!("materials.{name}"), e.to_string()))?;
        }
        for pair in self.objects.windows(2) {
            if pair[0].id >= pair[1].id {
                return Err(Error::invalid("objects", "ids must be unique and sorted"));
            }
        }
        for o in &self.objects {
            if !o.position.is_finite() {
                return Err(Error::invalid(format!("objects.{}.position", o.id), "not finite"));
            }
            for f in 0..o.mesh.face_count() {
                let m = o.face_material(f);
                if !self.materials.contains_key(m) {
                    return Err(Error::invalid(
                        format!("objects.{}.material", o.id),
                        format!("unknown material `{m}`"),
                    ));
                }
            }
        }
        self.freq.ns.checked_sub(1).ok_or_else(|| Error::invalid("freq.ns", "must be >= 1"))?;
        FreqGrid::new(self.freq.fc, self.freq.df, self.freq.ns)?;
        self.sim.validate()
    }

    /// Moves an object rigidly by `offset`.
    pub fn translate_object(&mut self, id: &str, offset: Vec3) -> Result<()> {
        let obj = self.objects.iter_mut().find(|o| o.id == id).ok_or_else(|| Error::UnknownObject(id.into()))?;
        if obj.z_locked && offset.z != 0.0 {
            return Err(Error::HeightLocked(id.into()));
        }
        if !offset.is_finite() {
            return Err(Error::Range("offset must be finite".into()));
        }
        obj.position = obj.position + offset;
        Ok(())
    }

    /// Sets an object's absolute position offset.
    pub fn set_object_position(&mut self, id: &str, position: Vec3) -> Result<()> {
        let obj = self.objects.iter_mut().find(|o| o.id == id).ok_or_else(|| Error::UnknownObject(id.into()))?;
        if obj.z_locked && position.z != obj.position.z {
            return Err(Error::HeightLocked(id.into()));
        }
        obj.position = position;
        Ok(())
    }

    pub fn set_material(&mut self, name: &str, eps_r: f64, sigma: f64) -> Result<()> {
        check_material(eps_r, sigma)?;
        let m = self.materials.get_mut(name).ok_or_else(|| Error::UnknownMaterial(name.into()))?;
        m.eps_r = eps_r;
        m.sigma = sigma;
        Ok(())
    }

    pub fn transceiver(&self, role: Role) -> &Transceiver {
        match role {
            Role::Tx => &self.tx,
            Role::Rx => &self.rx,
        }
    }

    pub fn transceiver_mut(&mut self, role: Role) -> &mut Transceiver {
        match role {
            Role::Tx => &mut self.tx,
            Role::Rx => &mut self.rx,
        }
    }

    /// Moves the array origin of the TX or RX.
    pub fn set_transceiver_origin(&mut self, role: Role, origin: Vec3) -> Result<()> {
        if !origin.is_finite() {
            return Err(Error::Range("transceiver origin must be finite".into()));
        }
        self.transceiver_mut(role).array.origin = origin;
        Ok(())
    }

    /// Union of all object bounds, `None` when the scene is empty.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        self.objects.iter().map(|o| o.world_bounds()).reduce(|(a, b), (c, d)| {
            (
                Vec3::new(a.x.min(c.x), a.y.min(c.y), a.z.min(c.z)),
                Vec3::new(b.x.max(d.x), b.y.max(d.y), b.z.max(d.z)),
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene_with_box() -> Scene {
        let mut s = Scene::free_space(Vec3::new(1.0, 1.0, 1.0), Vec3::new(3.0, 1.0, 1.0));
        s.add_material(Material::new("wood", 2.0, 0.01).unwrap());
        s.add_object(SceneObject {
            id: "box".into(),
            mesh: Arc::new(TriMesh::cuboid(Vec3::ZERO, Vec3::new(0.5, 0.5, 0.5)).unwrap()),
            material: "wood".into(),
            position: Vec3::new(2.0, 2.0, 0.0),
            movable: true,
            z_locked: true,
        })
        .unwrap();
        s
    }

    #[test]
    fn grid_is_centred() {
        let g = FreqGrid::new(5e9, 156_250.0, 128).unwrap();
        assert_eq!(g.frequency(64), 5e9);
        assert_eq!(g.frequency(0), 5e9 - 64.0 * 156_250.0);
        assert!(FreqGrid::new(1.0, 1.0, 8).is_err());
        assert!(FreqGrid::new(5e9, 1.0, 0).is_err());
    }

    #[test]
    fn translate_shifts_world_vertices() {
        let mut s = scene_with_box();
        let before: Vec<Vec3> = (0..8).map(|k| s.objects[0].world_vertex(k)).collect();
        s.translate_object("box", Vec3::new(0.0, 0.05, 0.0)).unwrap();
        for (k, b) in before.iter().enumerate() {
            let a = s.objects[0].world_vertex(k);
            assert_eq!(a.x, b.x);
            assert!((a.y - (b.y + 0.05)).abs() < 1e-15);
            assert_eq!(a.z, b.z);
        }
    }

    #[test]
    fn translate_zero_is_identity_and_additive() {
        let mut s = scene_with_box();
        let orig = s.clone();
        s.translate_object("box", Vec3::ZERO).unwrap();
        assert_eq!(s, orig);

        let (a, b) = (Vec3::new(0.25, -0.5, 0.0), Vec3::new(0.125, 0.75, 0.0));
        let mut twice = orig.clone();
        twice.translate_object("box", a).unwrap();
        twice.translate_object("box", b).unwrap();
        let mut once = orig.clone();
        once.translate_object("box", a + b).unwrap();
        assert_eq!(twice.objects[0].position, once.objects[0].position);

        twice.translate_object("box", -(a + b)).unwrap();
        assert_eq!(twice.objects[0].position, orig.objects[0].position);
    }

    #[test]
    fn translate_errors() {
        let mut s = scene_with_box();
        assert!(matches!(s.translate_object("nope", Vec3::ZERO), Err(Error::UnknownObject(_))));
        assert!(matches!(s.translate_object("box", Vec3::new(0.0, 0.0, 0.1)), Err(Error::HeightLocked(_))));
    }

    #[test]
    fn set_material_checks_range() {
        let mut s = scene_with_box();
        assert!(matches!(s.set_material("wood", 0.5, 0.0), Err(Error::Range(_))));
        assert!(matches!(s.set_material("wood", 2.0, -1.0), Err(Error::Range(_))));
        assert!(matches!(s.set_material("glass", 2.0, 0.0), Err(Error::UnknownMaterial(_))));
        let before = s.clone();
        s.set_material("wood", 2.0, 0.01).unwrap();
        assert_eq!(s, before);
        s.set_material("wood", 10.0, 0.0).unwrap();
        assert_eq!(s.materials["wood"].eps_r, 10.0);
        assert_eq!(s.objects, before.objects);
    }

    #[test]
    fn validate_catches_dangling_material() {
        let mut s = scene_with_box();
        s.objects[0].material = "glass2".into();
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("glass2"), "{err}");
    }
}
