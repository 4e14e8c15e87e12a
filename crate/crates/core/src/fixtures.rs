//! The loft office fixture: primitive stand-ins for the loft assets, a
//! furnished layout, floor rules and the hero camera.

use std::path::Path;
use std::sync::Arc;

use crate::catalog::Catalog;
use crate::geometry::{Rotator, Vec3};
use crate::procedural::{parse_rules, ProceduralRule};
use crate::scene_spec::SceneSpec;
use crate::world::{CameraState, SpawnRequest, World};

pub const LOFT_CATALOG: &str = include_str!("../fixtures/loft_catalog.jsonl");
pub const LOFT_SPEC: &str = include_str!("../fixtures/loft_office.md");
pub const LOFT_RULES: &str = include_str!("../fixtures/loft_rules.txt");

pub const LOFT_FLOOR: &str = "/Game/LoftOffice/Meshes/SM_Floor.SM_Floor";
pub const FLOOR_Z: f64 = -20.0;
/// Top surface of the fixture table above the floor.
pub const DESK_HEIGHT: f64 = 75.0;

/// Loft assets plus the built-in basic shapes.
pub fn loft_catalog() -> Catalog {
    let mut cat = Catalog::from_manifest_str(LOFT_CATALOG, Path::new("."), "loft_catalog.jsonl")
        .expect("fixture manifest is valid");
    for rec in Catalog::builtin().iter() {
        cat.insert((**rec).clone()).expect("no path overlap with builtins");
    }
    cat
}

pub fn loft_spec() -> SceneSpec {
    SceneSpec::parse(LOFT_SPEC).expect("fixture spec parses")
}

pub fn loft_rules() -> Vec<ProceduralRule> {
    parse_rules(LOFT_RULES, "loft_rules.txt").expect("fixture rules parse")
}

/// Camera 0 at the spec's final pose.
pub fn loft_camera() -> CameraState {
    let spec = loft_spec();
    CameraState {
        location: spec.final_camera_location.expect("fixture has a camera location"),
        rotation: spec.final_camera_rotator().expect("fixture has a camera rotation"),
        ..CameraState::default_for(0)
    }
}

/// (obj_id, label in the spec asset list, location, yaw).
pub const LOFT_LAYOUT: &[(&str, &str, [f64; 3], f64)] = &[
    ("Table_1", "Table", [700.0, -150.0, FLOOR_Z], 0.0),
    ("SoftChair_1", "Soft chair", [800.0, 110.0, FLOOR_Z], -135.0),
    ("Monitor_1", "Monitor", [735.0, -150.0, FLOOR_Z + DESK_HEIGHT], 180.0),
    ("Books_1", "Stack of books", [660.0, -125.0, FLOOR_Z + DESK_HEIGHT], 10.0),
    ("Vase_1", "Vase", [660.0, -175.0, FLOOR_Z + DESK_HEIGHT], 0.0),
    ("Chair_1", "Office chair", [590.0, -150.0, FLOOR_Z], 0.0),
    ("Chair_2", "Chair", [700.0, -235.0, FLOOR_Z], 90.0),
    ("Chair_3", "Chair", [700.0, -65.0, FLOOR_Z], -90.0),
    ("FloorLamp_1", "Floor lamp", [845.0, 15.0, FLOOR_Z], 0.0),
    ("Plant_1", "Plant", [455.0, 145.0, FLOOR_Z], 0.0),
    ("Plant_2", "Plant", [835.0, -375.0, FLOOR_Z], 0.0),
];

/// Empty loft: the floor and the hero camera only.
pub fn loft_room() -> World {
    let mut w = World::new(Arc::new(loft_catalog()));
    let spec = loft_spec();
    let floor = spec.floor_rule("floor").expect("fixture floor");
    let center = match floor.geometry {
        crate::procedural::RuleGeometry::Rect { center, .. } => center,
        _ => unreachable!(),
    };
    w.spawn_object(&SpawnRequest::new("Floor", LOFT_FLOOR).at(center)).expect("floor spawns");
    w.put_camera(loft_camera()).expect("valid camera");
    w
}

/// The furnished loft office.
pub fn loft_world() -> World {
    let mut w = loft_room();
    let spec = loft_spec();
    let mode = spec.collision_handling().expect("fixture option");
    for &(id, label, loc, yaw) in LOFT_LAYOUT {
        let path = spec.asset(label).expect("label in asset list");
        let req = SpawnRequest::new(id, path).at(Vec3::from(loc)).rotated(Rotator::new(0.0, yaw, 0.0)).mode(mode);
        let out = w.spawn_object(&req).expect("fixture layout spawns");
        debug_assert!(!out.nudged, "{id} was nudged");
    }
    w
}

/// Benchmark scene: `n` objects on a square grid, nine spheres to every
/// cube, with four cameras around it. At 100 objects it exceeds 100k
/// triangles.
pub fn grid_scene(n: usize, seed: u64) -> World {
    use rand::Rng;
    let mut w = World::new(Arc::new(Catalog::builtin()));
    let side = (n as f64).sqrt().ceil() as usize;
    let pitch = 150.0;
    let half = (side as f64 - 1.0) * pitch / 2.0;
    let mut rng = crate::rng::stream(seed, "grid_scene", 0);
    for i in 0..n {
        let path = if i % 10 == 9 { "/Engine/BasicShapes/Cube.Cube" } else { "/Engine/BasicShapes/Sphere.Sphere" };
        let loc = Vec3::new((i % side) as f64 * pitch - half, (i / side) as f64 * pitch - half, 0.0);
        let yaw = rng.random_range(-180.0..180.0);
        let req = SpawnRequest::new(format!("obj_{i:03}"), path).at(loc).rotated(Rotator::new(0.0, yaw, 0.0));
        w.spawn_object(&req).expect("grid cells are disjoint");
    }
    let r = half + 600.0;
    for (cam_id, az) in [0.0f64, 90.0, 180.0, 270.0].into_iter().enumerate() {
        let a = az.to_radians();
        let loc = Vec3::new(r * a.cos(), r * a.sin(), r * 0.6);
        let cam = CameraState { location: loc, rotation: Rotator::look_along(-loc), ..CameraState::default_for(cam_id as u32) };
        w.put_camera(cam).expect("valid camera");
    }
    w
}
