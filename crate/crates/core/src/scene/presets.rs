//! Ready-made scenes for tests, self-checks and synthetic experiments.

use std::sync::Arc;

use super::{FreqGrid, Material, Scene, SceneObject, TriMesh, CONCRETE_EPS_R};
use crate::error::Result;
use crate::math::{Vec3, V3};

/// Interior dimensions of the preset room (m).
pub const ROOM_SIZE: Vec3 = V3 { x: 6.0, y: 4.0, z: 3.0 };

fn object(id: &str, mesh: TriMesh, material: &str, position: Vec3) -> SceneObject {
    SceneObject { id: id.into(), mesh: Arc::new(mesh), material: material.into(), position, movable: true, z_locked: true }
}

/// 128 subcarriers spaced 1.25 MHz (160 MHz) around 5 GHz.
pub fn wideband_grid() -> FreqGrid {
    FreqGrid { fc: 5e9, df: 1.25e6, ns: 128 }
}

/// 50 receiver positions on a 10 x 5 grid covering the open floor of the
/// preset room at 1.2 m height.
pub fn record_positions() -> Vec<Vec3> {
    let mut out = Vec::with_capacity(50);
    for j in 0..5 {
        for i in 0..10 {
            out.push(Vec3::new(0.8 + 3.8 * i as f64 / 9.0, 0.6 + 2.8 * j as f64 / 4.0, 1.2));
        }
    }
    out
}

/// A 6 x 4 x 3 m room with a concrete floor, plaster ceiling, brick walls,
/// and one wooden shelf; TX and RX arrays at working height.
pub fn room() -> Scene {
    room_with(1).expect("preset is valid")
}

/// The preset room holding `n` (0..=3) furniture objects.
pub fn room_with(n: usize) -> Result<Scene> {
    let mut s = Scene::free_space(Vec3::new(1.0, 1.0, 1.5), Vec3::new(4.5, 2.2, 1.2));
    s.add_material(Material::new("floor", CONCRETE_EPS_R, 0.05)?);
    s.add_material(Material::new("plaster", 1.5, 0.01)?);
    s.add_material(Material::new("brick", 3.75, 0.038)?);
    s.add_material(Material::new("wood", 1.99, 0.03)?);
    s.add_material(Material::new("metal", 1.0, 1e7)?);
    s.add_material(Material::new("glass", 6.27, 0.02)?);
    let shell = TriMesh::shoebox(ROOM_SIZE, "floor", "plaster", "brick")?;
    s.add_object(SceneObject { movable: false, ..object("room", shell, "brick", Vec3::ZERO) })?;
    let furniture = [
        ("shelf", Vec3::new(0.3, 1.0, 1.6), "wood", Vec3::new(5.3, 2.6, 0.0)),
        ("locker", Vec3::new(0.5, 0.5, 1.8), "metal", Vec3::new(5.2, 0.6, 0.0)),
        ("vase", Vec3::new(0.3, 0.3, 0.5), "glass", Vec3::new(2.2, 2.9, 0.0)),
    ];
    for (id, size, mat, pos) in furniture.into_iter().take(n.min(3)) {
        let half = Vec3::new(size.x / 2.0, size.y / 2.0, 0.0);
        let mesh = TriMesh::cuboid(Vec3::ZERO - half, size - half)?;
        s.add_object(object(id, mesh, mat, pos))?;
    }
    s.sim.max_depth = 2;
    Ok(s)
}

/// Interior dimensions of the preset hall (m).
pub const HALL_SIZE: Vec3 = V3 { x: 8.0, y: 6.0, z: 3.0 };

/// The square region `[2, 6] x [1, 5]` in which hall targets move.
pub const HALL_REGION: ([f64; 2], [f64; 2]) = ([2.0, 1.0], [6.0, 5.0]);

/// An 8 x 6 x 3 m hall with the TX array west of the search region, the RX
/// array east of it, and a 0.5 m glass cube ("vase") on the floor at
/// (4.6, 2.4).
pub fn hall() -> Scene {
    let build = || -> Result<Scene> {
        let mut s = Scene::free_space(Vec3::new(1.0, 3.0, 1.5), Vec3::new(7.0, 3.4, 1.2));
        s.add_material(Material::new("floor", CONCRETE_EPS_R, 0.05)?);
        s.add_material(Material::new("plaster", 1.5, 0.01)?);
        s.add_material(Material::new("brick", 3.75, 0.038)?);
        s.add_material(Material::new("glass", 6.27, 0.02)?);
        let shell = TriMesh::shoebox(HALL_SIZE, "floor", "plaster", "brick")?;
        s.add_object(SceneObject { movable: false, ..object("room", shell, "brick", Vec3::ZERO) })?;
        let cube = TriMesh::cuboid(Vec3::new(-0.25, -0.25, 0.0), Vec3::new(0.25, 0.25, 0.5))?;
        s.add_object(object("vase", cube, "glass", Vec3::new(4.6, 2.4, 0.0)))?;
        s.sim.max_depth = 2;
        Ok(s)
    };
    build().expect("preset is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for n in 0..=3 {
            let s = room_with(n).unwrap();
            s.validate().unwrap();
            assert_eq!(s.objects.len(), n + 1);
        }
        assert!(room().object("shelf").unwrap().movable);
        hall().validate().unwrap();
        let s = room_with(3).unwrap();
        for p in record_positions() {
            for o in s.objects.iter().filter(|o| o.id != "room") {
                let (lo, hi) = o.world_bounds();
                assert!(!(p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y && p.z < hi.z), "{p:?} inside {}", o.id);
            }
        }
    }
}
