//! Acceptance suite. Prints one verdict line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use simcore::catalog::Catalog;
use simcore::examiner::{run_examiner, ExaminerConfig, FlawedOracle, PerfectOracle};
use simcore::exec::Exec;
use simcore::fixtures::{grid_scene, loft_camera, loft_catalog, loft_room, loft_rules, loft_world};
use simcore::geometry::{Aabb, Rotator, Vec3};
use simcore::procedural::{generate_scene, spline_point, GenerationConfig, GenerationMode, ProceduralRule, RuleGeometry, TargetSpec};
use simcore::render::{render, render_cameras_with, render_with, Channels, PinholeCamera};
use simcore::truth::{annotate_all, ObjectAnnotation};
use simcore::world::{CameraState, SceneSnapshot, SpawnRequest, World};
use simserver::mcp::{McpSession, PROTOCOL_VERSION};
use simserver::protocol::{encode_frame, read_frame};
use simserver::{Dispatcher, Request};

const DEPTH_POINTMAP_TOL: f64 = 1e-3;
const DEPTH_POINTMAP_BUDGET: Duration = Duration::from_secs(60);
const SEG_MATCH_MIN: f64 = 0.9999;
const OCCLUSION_TOL: f64 = 0.02;
const OCCLUSION_TOL_4X: f64 = 0.005;
const TRUNCATION_TOL: f64 = 0.03;
const FUZZ_FRAMES: usize = 100_000;
const EXAMINER_RUNS: u64 = 20;
const EXAMINER_MIN_SUCCESSES: usize = 18;
const EXAMINER_IOU: f64 = 0.3;
const EXAMINER_ELEVATION: f64 = 15.0;
const EXAMINER_RENDERS: usize = 800;
const EXAMINER_BUDGET: Duration = Duration::from_secs(300);
const FRAME_SINGLE_THREAD: Duration = Duration::from_millis(1500);
const FRAME_EIGHT_CORES: Duration = Duration::from_millis(250);
const MULTI_CAMERA_SPEEDUP: f64 = 2.5;

const SHAPES: [&str; 3] = ["/Engine/BasicShapes/Cube.Cube", "/Engine/BasicShapes/Sphere.Sphere", "/Engine/BasicShapes/Cylinder.Cylinder"];

enum Verdict {
    Pass(String),
    /// Every clause that can be measured here passed; the rest could not be.
    Partial(String),
    Fail(String),
}

type Check = Result<Verdict, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn empty_world(width: u32, height: u32) -> World {
    let mut w = World::new(Arc::new(Catalog::builtin()));
    w.put_camera(CameraState { width, height, ..CameraState::default_for(0) }).unwrap();
    w
}

fn annotation(w: &World, id: &str) -> ObjectAnnotation {
    annotate_all(&w.view(), 0).unwrap().into_iter().find(|a| a.obj_id == id).unwrap()
}

// ---------------------------------------------------------------------------
// Planar geometry for the analytic fixtures. The camera sits at the origin
// with zero rotation: forward +X, right +Y, up +Z.

type Pt = (f64, f64);

fn project(p: Vec3, width: u32, height: u32) -> Pt {
    let f = width as f64 / 2.0; // 90 degree horizontal fov
    (width as f64 / 2.0 + f * p.y / p.x, height as f64 / 2.0 - f * p.z / p.x)
}

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex hull (monotone chain).
fn hull(mut pts: Vec<Pt>) -> Vec<Pt> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut lower: Vec<Pt> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Pt> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn area(poly: &[Pt]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].0 * poly[(i + 1) % n].1 - poly[(i + 1) % n].0 * poly[i].1).sum::<f64>().abs() / 2.0
}

/// Sutherland-Hodgman clip of `subject` against a counter-clockwise convex `clip`.
fn intersect(subject: &[Pt], clip: &[Pt]) -> Vec<Pt> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (cross(a, b, p), cross(a, b, q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
            }
        }
        if out.is_empty() {
            break;
        }
    }
    out
}

fn window(width: u32, height: u32) -> Vec<Pt> {
    let (w, h) = (width as f64, height as f64);
    // Orientation only has to agree with `hull`.
    hull(vec![(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)])
}

/// Silhouette of the builtin cube (100 cm, base-centred) at `loc` and `scale`
/// with zero rotation.
fn cube_silhouette(loc: Vec3, scale: f64, width: u32, height: u32) -> Vec<Pt> {
    let h = 50.0 * scale;
    let mut pts = Vec::new();
    for dx in [-h, h] {
        for dy in [-h, h] {
            for dz in [0.0, 2.0 * h] {
                pts.push(project(loc + Vec3::new(dx, dy, dz), width, height));
            }
        }
    }
    hull(pts)
}

/// Root of a monotone `f(x) = target` on `[lo, hi]`.
fn solve(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    let rising = f(hi) > f(lo);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < target) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------

fn random_scene(rng: &mut ChaCha8Rng, width: u32, height: u32) -> World {
    let mut w = World::new(Arc::new(Catalog::builtin()));
    let cam = CameraState {
        location: Vec3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(0.0..200.0)),
        rotation: Rotator::new(rng.random_range(-20.0..10.0), rng.random_range(-25.0..25.0), rng.random_range(-15.0..15.0)),
        width,
        height,
        ..CameraState::default_for(0)
    };
    w.put_camera(cam).unwrap();
    for i in 0..rng.random_range(1..=20) {
        let loc = Vec3::new(rng.random_range(200.0..1500.0), rng.random_range(-700.0..700.0), rng.random_range(-300.0..150.0));
        let rot = Rotator::new(rng.random_range(-180.0..180.0), rng.random_range(-180.0..180.0), rng.random_range(-180.0..180.0));
        let req = SpawnRequest::new(format!("o{i}"), SHAPES[rng.random_range(0..3)]).at(loc).rotated(rot).scaled(rng.random_range(0.3..2.5));
        w.spawn_object(&req).unwrap();
    }
    w
}

fn c1_depth_pointmap() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut hits, mut worst) = (0usize, 0f64);
    for _ in 0..25 {
        let w = random_scene(&mut rng, 640, 480);
        let f = render(&w.view(), 0, Channels::DEPTH | Channels::POINTMAP).unwrap();
        let cam = &f.camera;
        let (p, y) = (cam.rotation.pitch.to_radians(), cam.rotation.yaw.to_radians());
        let forward = Vec3::new(p.cos() * y.cos(), p.cos() * y.sin(), p.sin());
        let (depth, pm) = (f.depth.as_ref().unwrap(), f.pointmap.as_ref().unwrap());
        for (d, q) in depth.iter().zip(pm) {
            ensure(d.is_finite() == q[0].is_finite(), || "hit masks of depth and pointmap differ".into())?;
            if d.is_finite() {
                let q = Vec3::new(q[0] as f64, q[1] as f64, q[2] as f64);
                worst = worst.max(((q - cam.location).dot(forward) - *d as f64).abs());
                hits += 1;
            }
        }
    }
    let took = start.elapsed();
    let msg = format!("max |forward(p) - depth| = {worst:.2e} cm over {hits} hit pixels, {:.1} s", took.as_secs_f64());
    Ok(if worst <= DEPTH_POINTMAP_TOL && took <= DEPTH_POINTMAP_BUDGET { Verdict::Pass(msg) } else { Verdict::Fail(msg) })
}

/// Möller-Trumbore without padding or acceleration.
fn ray_triangle(o: Vec3, d: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Option<f64> {
    let (e1, e2) = (b - a, c - a);
    let p = d.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let s = o - a;
    let u = s.dot(p) / det;
    let q = s.cross(e1);
    let v = d.dot(q) / det;
    let t = e2.dot(q) / det;
    (u >= 0.0 && v >= 0.0 && u + v <= 1.0 && t > 1e-6).then_some(t)
}

/// Slab test with a small margin; only used to skip objects.
fn ray_box(o: Vec3, d: Vec3, b: &Aabb) -> bool {
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for k in 0..3 {
        let (lo, hi) = ((b.min[k] - 1e-3 - o[k]) / d[k], (b.max[k] + 1e-3 - o[k]) / d[k]);
        t0 = t0.max(lo.min(hi));
        t1 = t1.min(lo.max(hi));
    }
    t0 <= t1
}

fn c2_segmentation_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut total, mut matched, mut ties, mut tie_matched) = (0usize, 0usize, 0usize, 0usize);
    for _ in 0..10 {
        let w = random_scene(&mut rng, 160, 120);
        let view = w.view();
        let f = render(&view, 0, Channels::INSTANCE).unwrap();
        // World-space triangles rebuilt from catalog meshes and object poses.
        let objects: Vec<(u32, Aabb, Vec<[Vec3; 3]>)> = view
            .objects()
            .iter()
            .map(|o| {
                let mesh = &view.catalog().get(&o.asset_path).unwrap().mesh;
                let aff = o.pose().affine();
                let tris: Vec<[Vec3; 3]> = mesh.triangles.iter().map(|t| t.map(|i| aff.apply(mesh.positions[i as usize]))).collect();
                let (mut lo, mut hi) = (Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY), Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY));
                for v in tris.iter().flatten() {
                    lo = Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
                    hi = Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
                }
                (o.instance_id, Aabb { min: lo, max: hi }, tris)
            })
            .collect();
        let cam = PinholeCamera::new(&f.camera);
        let inst = f.instance.as_ref().unwrap();
        for v in 0..f.height as i64 {
            for u in 0..f.width as i64 {
                let ray = cam.ray(u, v);
                // Nearest hit per object, then across objects.
                let mut per_object: Vec<(f64, u32)> = objects
                    .iter()
                    .filter(|(_, b, _)| ray_box(ray.origin, ray.dir, b))
                    .filter_map(|(id, _, tris)| {
                        tris.iter().filter_map(|t| ray_triangle(ray.origin, ray.dir, t[0], t[1], t[2])).reduce(f64::min).map(|t| (t, *id))
                    })
                    .collect();
                per_object.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let expect = per_object.first().map_or(0, |h| h.1);
                let tie = per_object.len() > 1 && per_object[1].0 - per_object[0].0 < 1e-6;
                let got = inst[(v * f.width as i64 + u) as usize];
                total += 1;
                if tie {
                    ties += 1;
                    tie_matched += usize::from(got == per_object[0].1 || got == per_object[1].1);
                } else {
                    matched += usize::from(got == expect);
                }
            }
        }
    }
    let frac = matched as f64 / (total - ties) as f64;
    let msg = format!("{matched}/{} non-tie pixels match ({:.4}%), {ties} tie pixels ({tie_matched} hit a tied object)", total - ties, 100.0 * frac);
    Ok(if frac >= SEG_MATCH_MIN && tie_matched == ties { Verdict::Pass(msg) } else { Verdict::Fail(msg) })
}

fn c3_occlusion() -> Check {
    const FAR: Vec3 = Vec3::new(400.0, 0.0, -50.0);
    const NEAR_SCALE: f64 = 0.5;
    let near_at = |y: f64| Vec3::new(180.0, y, -25.0);
    let analytic = |y: f64, w: u32, h: u32| {
        let far = cube_silhouette(FAR, 1.0, w, h);
        area(&intersect(&far, &cube_silhouette(near_at(y), NEAR_SCALE, w, h))) / area(&far)
    };
    // Offsets are planned at the base resolution; the analytic ratio is
    // resolution independent.
    let base = |y: f64| analytic(y, 640, 480);
    let clear = solve(|y| if base(y) > 0.0 { 0.0 } else { 1.0 }, 0.5, 0.0, 300.0);
    let mut lines = Vec::new();
    let mut ok = true;
    for planned in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = match planned {
            0.0 => clear + 20.0,
            1.0 => 0.0,
            p => solve(base, p, 0.0, clear),
        };
        ensure((base(y) - planned).abs() < 1e-9, || format!("could not plan overlap {planned}"))?;
        for (w, h, tol) in [(640, 480, OCCLUSION_TOL), (2560, 1920, OCCLUSION_TOL_4X)] {
            let mut world = empty_world(w, h);
            world.spawn_object(&SpawnRequest::new("far", SHAPES[0]).at(FAR)).unwrap();
            world.spawn_object(&SpawnRequest::new("near", SHAPES[0]).at(near_at(y)).scaled(NEAR_SCALE)).unwrap();
            let got = annotation(&world, "far").occlusion_ratio;
            ok &= (got - planned).abs() <= tol;
            lines.push(format!("{planned}@{w}: {got:.4}"));
        }
    }
    let msg = lines.join(", ");
    Ok(if ok { Verdict::Pass(msg) } else { Verdict::Fail(msg) })
}

fn c4_truncation() -> Check {
    let (w, h) = (640, 480);
    let outside = |loc: Vec3| {
        let s = cube_silhouette(loc, 1.0, w, h);
        1.0 - area(&intersect(&s, &window(w, h))) / area(&s)
    };
    type Place = fn(f64) -> Vec3;
    let edges: [(&str, Place); 4] = [
        ("right", |t| Vec3::new(400.0, t, -50.0)),
        ("left", |t| Vec3::new(400.0, -t, -50.0)),
        ("top", |t| Vec3::new(400.0, 0.0, t - 50.0)),
        ("bottom", |t| Vec3::new(400.0, 0.0, -t - 50.0)),
    ];
    let mut ok = true;
    let mut worst = 0f64;
    for (name, place) in edges {
        for planned in [0.25, 0.5, 0.75] {
            let t = solve(|t| outside(place(t)), planned, 0.0, 600.0);
            ensure((outside(place(t)) - planned).abs() < 1e-9, || format!("could not plan {name} {planned}"))?;
            let mut world = empty_world(w, h);
            world.spawn_object(&SpawnRequest::new("box", SHAPES[0]).at(place(t))).unwrap();
            let a = annotation(&world, "box");
            worst = worst.max((a.truncation_ratio - planned).abs());
            ok &= (a.truncation_ratio - planned).abs() <= TRUNCATION_TOL && !a.fully_truncated;
        }
    }
    for (name, loc) in [("beside", Vec3::new(400.0, 800.0, -50.0)), ("behind", Vec3::new(-400.0, 0.0, -50.0))] {
        let mut world = empty_world(w, h);
        world.spawn_object(&SpawnRequest::new("box", SHAPES[0]).at(loc)).unwrap();
        let a = annotation(&world, "box");
        ensure(a.truncation_ratio == 1.0 && a.fully_truncated, || format!("{name}: {} {}", a.truncation_ratio, a.fully_truncated))?;
    }
    let msg = format!("max error {worst:.4} over 12 straddling boxes; off-screen boxes report 1.0 and fully_truncated");
    Ok(if ok { Verdict::Pass(msg) } else { Verdict::Fail(msg) })
}

fn cube_box(loc: Vec3, scale: f64) -> Aabb {
    let h = 50.0 * scale;
    Aabb { min: loc - Vec3::new(h, h, 0.0), max: loc + Vec3::new(h, h, 2.0 * h) }
}

fn overlaps(a: &Aabb, b: &Aabb) -> bool {
    (0..3).all(|k| a.min[k].max(b.min[k]) < a.max[k].min(b.max[k]))
}

fn c5_collision_modes() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for trial in 0..300 {
        let d = Dispatcher::new(World::new(Arc::new(Catalog::builtin())));
        let call = |cmd: &str, args: Value| d.handle(&Request { id: trial, cmd: cmd.into(), args: args.as_object().unwrap().clone() });
        let base = Vec3::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(-50.0..50.0));
        ensure(call("spawn_object", json!({"obj_id": "base", "obj_path": SHAPES[0], "location": [base.x, base.y, base.z]})).is_ok(), || "base spawn".into())?;
        // Offsets avoid near-touching configurations so the oracle verdict is unambiguous.
        let (reach, scale) = (rng.random_range(0.0..250.0), rng.random_range(0.5..1.5));
        let dir = rng.random_range(0.0..std::f64::consts::TAU);
        let loc = base + Vec3::new(reach * dir.cos(), reach * dir.sin(), rng.random_range(-20.0..20.0));
        let (a, b) = (cube_box(base, 1.0), cube_box(loc, scale));
        let gap = (0..3).map(|k| (a.min[k].max(b.min[k]) - a.max[k].min(b.max[k])).abs()).fold(f64::INFINITY, f64::min);
        if gap < 1.0 {
            continue;
        }
        let colliding = overlaps(&a, &b);
        let mode = ["default", "skip_if_colliding", "adjust_if_possible"][rng.random_range(0..3)];
        let r = call("spawn_object", json!({"obj_id": "new", "obj_path": SHAPES[0], "location": [loc.x, loc.y, loc.z], "scale": scale, "collision_handling": mode}));
        let count = d.world().object_count();
        let at = |r: &simserver::Response| {
            let l = &r.data["location"];
            Vec3::new(l[0].as_f64().unwrap(), l[1].as_f64().unwrap(), l[2].as_f64().unwrap())
        };
        match (mode, colliding) {
            ("default", _) | ("skip_if_colliding", false) | ("adjust_if_possible", false) => {
                ensure(r.is_ok() && at(&r) == loc && r.data["nudged"] == json!(false) && count == 2, || format!("{mode} {colliding}: {:?}", r.data))?;
            }
            ("skip_if_colliding", true) => {
                ensure(r.status == "failed_to_spawn_actor" && count == 1, || format!("skip: {} {count}", r.status))?;
            }
            _ => {
                ensure(r.is_ok() && r.data["nudged"] == json!(true) && count == 2, || format!("adjust: {:?}", r.data))?;
                let got = at(&r);
                ensure(got.z == loc.z, || format!("adjust changed z {} -> {}", loc.z, got.z))?;
                ensure(!overlaps(&a, &cube_box(got, scale)), || "adjusted pose still overlaps".into())?;
            }
        }
        *counts.entry(format!("{mode}/{}", if colliding { "overlap" } else { "clear" })).or_default() += 1;
    }
    let d = Dispatcher::new(World::new(Arc::new(Catalog::builtin())));
    let call = |args: Value| d.handle(&Request { id: 0, cmd: "spawn_object".into(), args: args.as_object().unwrap().clone() }).status;
    let _ = call(json!({"obj_id": "a", "obj_path": SHAPES[0]}));
    let strings = [
        call(json!({"obj_id": "a", "obj_path": SHAPES[1]})),
        call(json!({"obj_id": "b", "obj_path": SHAPES[1], "collision_handling": "skip_if_colliding"})),
        call(json!({"obj_id": "c", "obj_path": SHAPES[1], "collision_handling": "sideways"})),
    ];
    ensure(strings == ["object_with_same_name_already_exists", "failed_to_spawn_actor", "unknown_argument_format"], || format!("{strings:?}"))?;
    ensure(counts.len() == 6, || format!("not every case exercised: {counts:?}"))?;
    Ok(Verdict::Pass(format!("{} trials {counts:?}; error strings {strings:?}", counts.values().sum::<usize>())))
}

fn c6_snapshot_round_trip() -> Check {
    let mut w = loft_world();
    let cam = w.get_camera(0).unwrap().clone();
    ensure(cam.location == Vec3::new(260.0, -300.0, 165.0) && cam == loft_camera(), || format!("fixture camera {cam:?}"))?;
    let before = render(&w.view(), 0, Channels::all()).unwrap();
    let json = w.snapshot().to_json();
    w.clear();
    ensure(w.object_count() == 0, || "clear left objects".into())?;
    w.load_snapshot(&SceneSnapshot::from_json(&json).unwrap(), false).unwrap();
    let after = render(&w.view(), 0, Channels::all()).unwrap();
    let mut fresh = World::new(Arc::new(loft_catalog()));
    fresh.load_snapshot(&SceneSnapshot::from_json(&json).unwrap(), false).unwrap();
    let elsewhere = render(&fresh.view(), 0, Channels::all()).unwrap();
    let hit = before.instance.as_ref().unwrap().iter().filter(|&&i| i != 0).count();
    ensure(hit > 0, || "fixture camera sees nothing".into())?;
    let same = before.bitwise_eq(&after) && before.bitwise_eq(&elsewhere) && json == w.snapshot().to_json();
    let msg = format!("{} objects, {hit} hit pixels, six channels compared bit for bit", w.object_count());
    Ok(if same { Verdict::Pass(msg) } else { Verdict::Fail(msg) })
}

fn on_rule(rule: &ProceduralRule, p: Vec3) -> bool {
    let near_polyline = |pts: &[Vec3]| {
        pts.windows(2).any(|w| {
            let ab = w[1] - w[0];
            let t = ((p - w[0]).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
            (w[0] + ab * t).distance(p) <= 1.0
        })
    };
    match &rule.geometry {
        RuleGeometry::Rect { center, half_extents, yaw } => {
            let (s, c) = yaw.to_radians().sin_cos();
            let d = p - *center;
            let (lx, ly) = (c * d.x + s * d.y, -s * d.x + c * d.y);
            lx.abs() <= half_extents[0] + 1e-6 && ly.abs() <= half_extents[1] + 1e-6 && (p.z - center.z).abs() < 1e-6
        }
        RuleGeometry::Spline { anchors } => {
            let pts: Vec<Vec3> = (0..=4000).map(|k| spline_point(anchors, k as f64 / 4000.0).unwrap().0).collect();
            near_polyline(&pts)
        }
        RuleGeometry::Line { start, end } => near_polyline(&[*start, *end]),
    }
}

fn c7_procedural() -> Check {
    let rules = loft_rules();
    let targets = vec![
        TargetSpec { category: "chair".into(), min_count: 1, max_count: 6, rule_ids: Some(vec!["floor".into()]) },
        TargetSpec { category: "cabinet".into(), min_count: 1, max_count: 3, rule_ids: Some(vec!["floor".into()]) },
        TargetSpec { category: "vase".into(), min_count: 2, max_count: 4, rule_ids: Some(vec!["walkway".into()]) },
    ];
    let (mut placed, mut reached, mut exhausted) = (0, 0, 0);
    for seed in 0..10 {
        for mode in GenerationMode::ALL {
            let mut cfg = GenerationConfig::new(seed, mode, targets.clone());
            cfg.min_spacing = 60.0;
            let run = || {
                let mut w = loft_room();
                let report = generate_scene(&mut w, &rules, &cfg).unwrap();
                (w, report)
            };
            let (w, report) = run();
            let (w2, report2) = run();
            ensure(w.snapshot().to_json() == w2.snapshot().to_json() && report == report2, || format!("seed {seed} {mode:?} not deterministic"))?;
            let ids = w.list_objects();
            let boxes: Vec<Aabb> = ids.iter().map(|id| w.world_aabb(id).unwrap()).collect();
            for i in 0..ids.len() {
                for j in i + 1..ids.len() {
                    let strict = (0..3).all(|k| boxes[i].min[k].max(boxes[j].min[k]) + 1e-6 < boxes[i].max[k].min(boxes[j].max[k]));
                    ensure(!strict, || format!("seed {seed} {mode:?}: {} overlaps {}", ids[i], ids[j]))?;
                }
            }
            let mut groups: BTreeMap<(String, String), Vec<Vec3>> = BTreeMap::new();
            for p in report.spawned() {
                let loc = p.final_location.unwrap();
                if let Some(rule_id) = &p.rule_id {
                    let rule = rules.iter().find(|r| &r.rule_id == rule_id).unwrap();
                    ensure(on_rule(rule, loc), || format!("seed {seed} {mode:?}: {} off {rule_id}", p.obj_id))?;
                    groups.entry((p.category.clone(), rule_id.clone())).or_default().push(loc);
                }
                placed += 1;
            }
            for pts in groups.values() {
                for i in 0..pts.len() {
                    for j in i + 1..pts.len() {
                        ensure(pts[i].distance(pts[j]) >= cfg.min_spacing - 1e-9, || format!("seed {seed} {mode:?}: spacing"))?;
                    }
                }
            }
            if mode == GenerationMode::OccludedView {
                let occ = report.occlusion.clone().ok_or("no occlusion outcome")?;
                let cam = report.camera.clone().ok_or("no camera")?;
                let ann = annotate_all(&w.view(), cam.cam_id).unwrap();
                let t = ann.iter().find(|a| a.obj_id == occ.target).ok_or("target missing")?;
                ensure((t.occlusion_ratio - occ.achieved_ratio).abs() < 1e-9, || "reported ratio disagrees with ground truth".into())?;
                if t.occlusion_ratio >= cfg.occlusion.threshold {
                    ensure(occ.reached, || "threshold met but not reported".into())?;
                    reached += 1;
                } else {
                    ensure(occ.budget_exhausted && occ.attempts == cfg.occlusion.max_attempts, || "below threshold without exhaustion".into())?;
                    exhausted += 1;
                }
            }
        }
    }
    Ok(Verdict::Pass(format!("50 configurations deterministic, {placed} placements valid; occlusion reached {reached}, budget exhausted {exhausted}")))
}

fn c8_protocol() -> Check {
    let (srv, _) = start(World::new(Arc::new(loft_catalog())));
    let mut c = Client::connect(srv.addr);
    c.send_raw(br#"{"id":1,"cmd":"list_objects"}"#);
    let raw = read_frame(&mut c.stream).map_err(|e| e.to_string())?.ok_or("closed")?;
    let expect = br#"{"id":1,"status":"ok","data":{"objects":[]},"tensors":[]}"#;
    ensure(raw == expect, || format!("golden reply {}", String::from_utf8_lossy(&raw)))?;
    ensure(encode_frame(expect).unwrap()[..4] == (expect.len() as u32).to_be_bytes(), || "length prefix".into())?;

    let table = "/Game/LoftOffice/Meshes/SM_Table_2.SM_Table_2";
    c.ok("spawn_object", json!({"obj_id": "t", "obj_path": table, "lock_rotation": true}));
    let snap = c.ok("get_obj_annots", json!({})).data;
    let cases = [
        ("unknown_command", "teleport", json!({})),
        ("unknown_argument_format", "spawn_object", json!({"obj_id": "x"})),
        ("object_with_same_name_already_exists", "spawn_object", json!({"obj_id": "t", "obj_path": table})),
        ("failed_to_spawn_actor", "spawn_object", json!({"obj_id": "u", "obj_path": table, "collision_handling": "skip_if_colliding"})),
        ("object_not_found", "delete_object", json!({"obj_id": "ghost"})),
        ("rotation_locked", "set_object_rotation", json!({"obj_id": "t", "rotation": [0, 5, 0]})),
        ("camera_not_found", "get_cam_depth", json!({"cam_id": 3})),
        ("asset_not_found", "get_mesh_extent", json!({"obj_path": "/Game/Missing"})),
        ("mesh_extent_unavailable", "get_mesh_extent", json!({"obj_path": "/Game/LoftOffice/Meshes/SM_Document_case.SM_Document_case"})),
        ("version_mismatch", "load_snapshot", json!({"snapshot": {"format_version": 2}})),
        ("world_not_empty", "load_snapshot", json!({"snapshot": snap})),
        ("parse_error", "parse_rules", json!({"text": "version 1\nrect a navigable_area corners 1 2"})),
        ("invalid_rule", "parse_rules", json!({"text": "version 1\nline a road_area 0 0 0 ; 0 0 0\n"})),
        ("io_error", "parse_rules", json!({"path": "/nonexistent/rules.txt"})),
    ];
    for (code, cmd, args) in &cases {
        let r = c.call(cmd, args.clone());
        ensure(r.status == *code, || format!("{cmd} {args}: expected {code}, got {}", r.status))?;
    }

    let (grid, _) = start(grid_scene(100, 8));
    let mut g = Client::connect(grid.addr);
    g.ok("set_camera", json!({"width": 1920, "height": 1080}));
    g.send(1, "render_cameras", json!({"cam_ids": [0, 1, 2, 3]}));
    g.send(2, "list_objects", json!({}));
    let order = [g.recv().id, g.recv().id];
    ensure(order == [Some(2), Some(1)], || format!("completion order {order:?}"))?;
    grid.stop().map_err(|e| e.to_string())?;

    c.ok("delete_object", json!({"obj_id": "t"}));
    let tally = fuzz(srv.addr, FUZZ_FRAMES, 8);
    ensure(tally.values().sum::<usize>() == FUZZ_FRAMES && !tally.contains_key("internal_error"), || format!("{tally:?}"))?;
    let mut big = std::net::TcpStream::connect(srv.addr).unwrap();
    std::io::Write::write_all(&mut big, &(1u32 << 30).to_be_bytes()).unwrap();
    let r: Value = serde_json::from_slice(&read_frame(&mut big).unwrap().unwrap()).unwrap();
    ensure(r["status"] == "frame_too_large" && read_frame(&mut big).unwrap().is_none(), || format!("{r}"))?;

    let (fresh, d) = start_empty();
    let addr = fresh.addr;
    let workers: Vec<_> = (0..2)
        .map(|k| {
            std::thread::spawn(move || {
                let mut c = Client::connect(addr);
                (0..50).all(|i| {
                    let loc = [i as f64 * 200.0, k as f64 * 1000.0, 0.0];
                    c.call("spawn_object", json!({"obj_id": format!("c{k}_{i}"), "obj_path": SHAPES[0], "location": loc})).is_ok()
                })
            })
        })
        .collect();
    let all_ok = workers.into_iter().all(|w| w.join().unwrap());
    let n = d.world().list_objects().iter().collect::<std::collections::HashSet<_>>().len();
    ensure(all_ok && n == 100, || format!("{n} objects after concurrent spawns"))?;
    // The server survived everything above.
    Client::connect(srv.addr).ok("list_objects", json!({}));
    fresh.stop().map_err(|e| e.to_string())?;
    srv.stop().map_err(|e| e.to_string())?;
    let codes = cases.len() + 1;
    Ok(Verdict::Pass(format!("golden bytes, {codes} error codes, out-of-order completion, {FUZZ_FRAMES} fuzz frames {tally:?}, 100 concurrent spawns")))
}

fn c9_mcp() -> Check {
    let d = Arc::new(Dispatcher::new(loft_room()));
    let mut s = McpSession::new(Arc::clone(&d));
    let mut next = 0;
    let mut rpc = |method: &str, params: Value| {
        next += 1;
        s.handle_message(&json!({"jsonrpc": "2.0", "id": next, "method": method, "params": params})).unwrap()
    };
    rpc("initialize", json!({"protocolVersion": PROTOCOL_VERSION}));
    let tools = rpc("tools/list", json!({}))["result"]["tools"].clone();
    let reference: Value = serde_json::from_str(include_str!("spawn_object_schema.json")).unwrap();
    let spawn = tools.as_array().unwrap().iter().find(|t| t["name"] == "spawn_object").ok_or("no spawn_object tool")?;
    ensure(*spawn == reference, || "spawn_object descriptor differs from the reference schema".into())?;
    let log = plan_loft(&mut |tool, args| rpc("tools/call", json!({"name": tool, "arguments": args}))["result"].clone());
    let bad: Vec<&String> = log.iter().filter(|(_, r)| r["isError"] != json!(false) || tool_body(r)["status"] != "ok").map(|(t, _)| t).collect();
    ensure(bad.is_empty(), || format!("non-ok calls: {bad:?}"))?;
    let cam = d.world().get_camera(0).unwrap().clone();
    ensure(cam == loft_camera(), || format!("final camera {cam:?}"))?;
    Ok(Verdict::Pass(format!("descriptor matches; {} tool calls all ok; final camera restored", log.len())))
}

fn c10_examiner() -> Check {
    let mut w = World::new(Arc::new(Catalog::builtin()));
    w.spawn_object(&SpawnRequest::new("target", SHAPES[0]).at(Vec3::new(0.0, 0.0, -50.0))).unwrap();
    let view = w.view();
    let start = Instant::now();
    let mut successes = 0;
    let mut worst_renders = 0;
    for seed in 0..EXAMINER_RUNS {
        let cfg = ExaminerConfig { seed, ..Default::default() };
        let r = run_examiner(&view, "target", &mut FlawedOracle::default(), &cfg, Exec::default()).map_err(|e| e.to_string())?;
        worst_renders = worst_renders.max(r.total_renders);
        let found = r.best_iou().is_some_and(|i| i <= EXAMINER_IOU);
        successes += usize::from(found && r.final_policy.mean.elevation < EXAMINER_ELEVATION && r.total_renders <= EXAMINER_RENDERS);
    }
    let took = start.elapsed();
    let cfg = ExaminerConfig { iterations: 1, ..Default::default() };
    let perfect = run_examiner(&view, "target", &mut PerfectOracle, &cfg, Exec::default()).map_err(|e| e.to_string())?;
    let first = perfect.best.as_ref().map(|b| b.reward);
    let msg = format!(
        "{successes}/{EXAMINER_RUNS} flawed runs succeed, <= {worst_renders} renders each, {:.1} s; perfect oracle first-iteration best reward {first:?}",
        took.as_secs_f64()
    );
    let pass = successes >= EXAMINER_MIN_SUCCESSES && took <= EXAMINER_BUDGET && first == Some(-1.0) && perfect.trace.len() == 1 && perfect.trace[0].samples.iter().any(|s| s.reward == -1.0);
    Ok(if pass { Verdict::Pass(msg) } else { Verdict::Fail(msg) })
}

fn median(mut f: impl FnMut() -> Duration) -> Duration {
    let mut t: Vec<Duration> = (0..5).map(|_| f()).collect();
    t.sort();
    t[2]
}

fn timed<T>(f: impl FnOnce() -> T) -> Duration {
    let s = Instant::now();
    std::hint::black_box(f());
    s.elapsed()
}

fn c11_performance() -> Check {
    let w = grid_scene(100, 11);
    let view = w.view();
    let tris = view.accel().triangle_count();
    ensure(w.object_count() == 100 && tris >= 100_000, || format!("{tris} triangles"))?;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let seq = median(|| timed(|| render_with(&view, 0, Channels::all(), Exec::Sequential).unwrap()));
    let par = median(|| timed(|| render_with(&view, 0, Channels::all(), Exec::Parallel).unwrap()));
    let cams = [0, 1, 2, 3];
    let cams_seq = median(|| timed(|| render_cameras_with(&view, &cams, Channels::all(), Exec::Sequential).unwrap()));
    let cams_par = median(|| timed(|| render_cameras_with(&view, &cams, Channels::all(), Exec::Parallel).unwrap()));
    let speedup = cams_seq.as_secs_f64() / cams_par.as_secs_f64();
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    let msg = format!(
        "{tris} triangles, {cores} core(s): frame {:.0} ms sequential, {:.0} ms parallel; 4 cameras {:.0} ms vs {:.0} ms ({speedup:.2}x)",
        ms(seq),
        ms(par),
        ms(cams_seq),
        ms(cams_par)
    );
    if seq > FRAME_SINGLE_THREAD {
        return Ok(Verdict::Fail(msg));
    }
    let mut unmeasured = Vec::new();
    if cores >= 8 {
        if par > FRAME_EIGHT_CORES {
            return Ok(Verdict::Fail(msg));
        }
    } else {
        unmeasured.push("8-core frame budget");
    }
    if cores >= 4 {
        if speedup < MULTI_CAMERA_SPEEDUP {
            return Ok(Verdict::Fail(msg));
        }
    } else {
        unmeasured.push("multi-camera speedup");
    }
    Ok(if unmeasured.is_empty() {
        Verdict::Pass(msg)
    } else {
        Verdict::Partial(format!("{msg}; not measurable here: {}", unmeasured.join(", ")))
    })
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("depth-pointmap consistency", c1_depth_pointmap),
        ("segmentation oracle equivalence", c2_segmentation_oracle),
        ("occlusion ratio accuracy", c3_occlusion),
        ("truncation accuracy", c4_truncation),
        ("collision-mode semantics", c5_collision_modes),
        ("snapshot round-trip", c6_snapshot_round_trip),
        ("procedural determinism and validity", c7_procedural),
        ("protocol conformance", c8_protocol),
        ("MCP conformance", c9_mcp),
        ("examiner convergence", c10_examiner),
        ("performance", c11_performance),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|n| n != i + 1) {
            continue;
        }
        let start = Instant::now();
        let verdict = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => Verdict::Fail(e),
            Err(p) => Verdict::Fail(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()),
        };
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Partial(d) => ("PARTIAL", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag:<7} {name} [{:.1}s]: {detail}", i + 1, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
