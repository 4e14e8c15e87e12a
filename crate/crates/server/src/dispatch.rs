//! Command registry and execution against a shared world.
//!
//! Mutations run under the world's write lock, one at a time. Render-type
//! commands capture an immutable [`SceneView`] under the read lock and
//! return a deferred job that renders without holding any lock.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, PoisonError, RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde_json::{json, Map, Value};
use simcore::examiner::{run_examiner, ExaminerConfig, FlawedOracle, PerfectOracle, Segmenter};
use simcore::exec::Exec;
use simcore::geometry::{Rotator, Vec3};
use simcore::procedural::{generate_scene, load_rules, parse_rules, GenerationConfig, ProceduralRule};
use simcore::render::{pointmap_in_space, render_camera, Channels, FrameSet, PointSpace};
use simcore::truth::{annotate_all_with, occlusion_graph};
use simcore::world::{
    CameraState, CollisionHandling, PoseUpdate, SceneParamsPatch, SceneSnapshot, SceneView, SpawnRequest, World,
    MAX_SIDE,
};
use simcore::SimError;

use crate::protocol::{Request, Response, Tensor};
use crate::schema::{opt, req, validate, Arg, Kind};

pub const UNKNOWN_COMMAND: &str = "unknown_command";
pub const BAD_ARGS: &str = "unknown_argument_format";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Read,
    Write,
    /// Reads a snapshot, then does heavy work without locks.
    Render,
}

#[derive(Debug, Clone, Copy)]
pub struct Command {
    pub name: &'static str,
    pub args: &'static [Arg],
    pub access: Access,
    pub doc: &'static str,
}

const CAM: Arg = opt("cam_id", Kind::Int(0, u32::MAX as i64), "Camera id. Defaults to 0.");
const OBJ: Arg = req("obj_id", Kind::Str, "Id of an object in the scene.");
const WARMUP: Arg = opt("warmup", Kind::Int(0, 1_000_000), "Accepted for compatibility; frames are deterministic so it has no effect.");
const LOC: Arg = opt("location", Kind::Triple, "World-space [x, y, z] in centimeters.");
const ROT: Arg = opt("rotation", Kind::Triple, "[pitch, yaw, roll] in degrees.");
const COLLISION: &[&str] = &["default", "skip_if_colliding", "adjust_if_possible"];

const SPAWN: &[Arg] = &[
    req("obj_id", Kind::Str, "Unique name for the new object."),
    req("obj_path", Kind::Str, "Catalog asset path."),
    LOC,
    ROT,
    opt("scale", Kind::Positive, "Uniform scale factor. Defaults to 1."),
    opt("collision_handling", Kind::OneOf(COLLISION), "default, skip_if_colliding or adjust_if_possible."),
    opt("lock_rotation", Kind::Bool, "Reject later rotation changes."),
];
const CAM_ONLY: &[Arg] = &[CAM];
const CAM_FRAME: &[Arg] = &[CAM, WARMUP];
const OBJ_ONLY: &[Arg] = &[OBJ];

pub const COMMANDS: &[Command] = &[
    Command { name: "spawn_object", args: SPAWN, access: Access::Write, doc: "Spawn an object." },
    Command { name: "add_obj", args: SPAWN, access: Access::Write, doc: "Alias of spawn_object." },
    Command { name: "add_object", args: SPAWN, access: Access::Write, doc: "Alias of spawn_object." },
    Command {
        name: "set_object_location",
        args: &[OBJ, req("location", Kind::Triple, "World-space [x, y, z] in centimeters.")],
        access: Access::Write,
        doc: "Move an object.",
    },
    Command {
        name: "set_object_rotation",
        args: &[OBJ, req("rotation", Kind::Triple, "[pitch, yaw, roll] in degrees.")],
        access: Access::Write,
        doc: "Rotate an object.",
    },
    Command {
        name: "update_object",
        args: &[OBJ, LOC, ROT, opt("scale", Kind::Positive, "Uniform scale factor.")],
        access: Access::Write,
        doc: "Change any of an object's location, rotation and scale.",
    },
    Command { name: "delete_object", args: OBJ_ONLY, access: Access::Write, doc: "Remove an object." },
    Command { name: "list_objects", args: &[], access: Access::Read, doc: "Object ids in spawn order." },
    Command { name: "get_object_location", args: OBJ_ONLY, access: Access::Read, doc: "An object's location." },
    Command { name: "get_object_rotation", args: OBJ_ONLY, access: Access::Read, doc: "An object's rotation." },
    Command {
        name: "get_mesh_extent",
        args: &[
            opt("obj_path", Kind::Str, "Catalog asset path."),
            opt("obj_id", Kind::Str, "Object whose asset to measure, instead of obj_path."),
        ],
        access: Access::Read,
        doc: "Axis-aligned size of an asset at canonical scale.",
    },
    Command {
        name: "set_camera_location",
        args: &[CAM, req("location", Kind::Triple, "World-space [x, y, z] in centimeters.")],
        access: Access::Write,
        doc: "Move a camera; creates it if needed.",
    },
    Command {
        name: "set_camera_rotation",
        args: &[CAM, req("rotation", Kind::Triple, "[pitch, yaw, roll] in degrees.")],
        access: Access::Write,
        doc: "Rotate a camera; creates it if needed.",
    },
    Command { name: "get_camera_location", args: CAM_ONLY, access: Access::Read, doc: "A camera's location." },
    Command { name: "get_camera_rotation", args: CAM_ONLY, access: Access::Read, doc: "A camera's rotation." },
    Command {
        name: "set_camera",
        args: &[
            CAM,
            LOC,
            ROT,
            opt("fov", Kind::Num(1.0, 179.0), "Horizontal field of view in degrees."),
            opt("width", Kind::Int(1, MAX_SIDE as i64), "Image width in pixels."),
            opt("height", Kind::Int(1, MAX_SIDE as i64), "Image height in pixels."),
        ],
        access: Access::Write,
        doc: "Set any camera property; creates the camera if needed.",
    },
    Command { name: "get_camera", args: CAM_ONLY, access: Access::Read, doc: "Full camera state." },
    Command { name: "get_cam_lit", args: CAM_FRAME, access: Access::Render, doc: "Shaded RGB image." },
    Command { name: "get_cam_seg", args: CAM_FRAME, access: Access::Render, doc: "Instance segmentation." },
    Command { name: "get_cam_depth", args: CAM_FRAME, access: Access::Render, doc: "Planar depth in centimeters." },
    Command { name: "get_cam_normal", args: CAM_FRAME, access: Access::Render, doc: "World-space surface normals." },
    Command {
        name: "get_cam_pointmap",
        args: &[CAM, WARMUP, opt("space", Kind::OneOf(&["world", "opencv"]), "Point frame. Defaults to world.")],
        access: Access::Render,
        doc: "Per-pixel surface points.",
    },
    Command { name: "get_cam_partseg", args: CAM_FRAME, access: Access::Render, doc: "Per-pixel part ids." },
    Command {
        name: "render_cameras",
        args: &[
            req("cam_ids", Kind::IntList, "Cameras to render."),
            opt("channels", Kind::StrList, "Channel names: lit, depth, instance, part, normal, pointmap. Defaults to all."),
        ],
        access: Access::Render,
        doc: "Render several cameras in one call.",
    },
    Command { name: "get_obj_annots", args: &[], access: Access::Read, doc: "Scene snapshot that reconstructs the world." },
    Command { name: "get_annotations", args: CAM_ONLY, access: Access::Render, doc: "Per-object ground truth for a camera." },
    Command {
        name: "load_snapshot",
        args: &[
            req("snapshot", Kind::Object, "Snapshot document as returned by get_obj_annots."),
            opt("clear", Kind::Bool, "Replace a non-empty world."),
        ],
        access: Access::Write,
        doc: "Restore a snapshot.",
    },
    Command {
        name: "set_scene_params",
        args: &[
            opt("sun_direction", Kind::Triple, "Direction light travels; normalized on input."),
            opt("sun_intensity", Kind::Num(0.0, 1e6), "Sun intensity."),
            opt("sun_color", Kind::Triple, "Sun RGB in [0, 1]."),
            opt("ambient_intensity", Kind::Num(0.0, 1e6), "Ambient intensity."),
            opt("fog_visibility", Kind::PositiveOrNull, "Fog visibility in centimeters; null disables fog."),
            opt("fog_color", Kind::Triple, "Fog RGB in [0, 1]."),
            opt("rain_params", Kind::Object, "Free-form string map stored verbatim."),
        ],
        access: Access::Write,
        doc: "Update lighting and weather.",
    },
    Command { name: "get_scene_params", args: &[], access: Access::Read, doc: "Lighting and weather." },
    Command {
        name: "parse_rules",
        args: &[
            opt("text", Kind::Str, "Rule file contents."),
            opt("path", Kind::Str, "Rule file on the server's filesystem, instead of text."),
        ],
        access: Access::Write,
        doc: "Load procedural rules, replacing the current set.",
    },
    Command {
        name: "generate_scene",
        args: &[req("config", Kind::Object, "Generation config document.")],
        access: Access::Write,
        doc: "Populate the world from the loaded rules.",
    },
    Command {
        name: "run_examiner",
        args: &[
            req("target", Kind::Str, "Object to examine."),
            opt("oracle", Kind::OneOf(&["perfect", "flawed"]), "Built-in segmenter. Defaults to flawed."),
            opt("config", Kind::Object, "Examiner config overrides."),
        ],
        access: Access::Render,
        doc: "Adversarial viewpoint search against a built-in segmenter.",
    },
];

pub fn command(name: &str) -> Option<&'static Command> {
    COMMANDS.iter().find(|c| c.name == name)
}

/// Outcome of the synchronous half of a request.
pub enum Prepared {
    Ready(Response),
    Deferred(Box<dyn FnOnce() -> Response + Send>),
}

impl Prepared {
    pub fn finish(self) -> Response {
        match self {
            Prepared::Ready(r) => r,
            Prepared::Deferred(job) => job(),
        }
    }
}

#[derive(Debug)]
enum Failure {
    Args(String),
    Sim(SimError),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Sim(e)
    }
}

type Reply = (Map<String, Value>, Vec<Tensor>);
type Outcome = Result<Reply, Failure>;

fn respond(id: i64, out: Outcome) -> Response {
    match out {
        Ok((data, tensors)) => Response { tensors, ..Response::ok(id, data) },
        Err(Failure::Args(m)) => Response::error(Some(id), BAD_ARGS, m),
        Err(Failure::Sim(e)) => Response::error(Some(id), e.code(), e.to_string()),
    }
}

fn data(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            m
        }
    }
}

fn ok_empty() -> Outcome {
    Ok((Map::new(), Vec::new()))
}

fn ok_data(v: Value) -> Outcome {
    Ok((data(v), Vec::new()))
}

struct Args<'a>(&'a Map<String, Value>);

impl Args<'_> {
    fn str(&self, k: &str) -> Option<&str> {
        self.0.get(k).and_then(Value::as_str)
    }
    fn f64(&self, k: &str) -> Option<f64> {
        self.0.get(k).and_then(Value::as_f64)
    }
    fn bool(&self, k: &str) -> Option<bool> {
        self.0.get(k).and_then(Value::as_bool)
    }
    fn triple(&self, k: &str) -> Option<[f64; 3]> {
        let a = self.0.get(k)?.as_array()?;
        Some([a[0].as_f64()?, a[1].as_f64()?, a[2].as_f64()?])
    }
    fn vec3(&self, k: &str) -> Option<Vec3> {
        self.triple(k).map(Vec3::from)
    }
    fn rot(&self, k: &str) -> Option<Rotator> {
        self.triple(k).map(Rotator::from)
    }
    fn cam(&self) -> u32 {
        self.0.get("cam_id").and_then(Value::as_u64).unwrap_or(0) as u32
    }
    fn obj(&self) -> &str {
        self.str("obj_id").expect("validated")
    }
}

fn v3(v: Vec3) -> Value {
    json!([v.x, v.y, v.z])
}

fn r3(r: Rotator) -> Value {
    json!([r.pitch, r.yaw, r.roll])
}

/// Stable nonblack display color for an instance id.
pub fn instance_color(id: u32) -> [u8; 3] {
    if id == 0 {
        return [0, 0, 0];
    }
    let mut z = (id as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    [(z as u8) | 0x20, (z >> 8) as u8 | 0x20, (z >> 16) as u8 | 0x20]
}

fn flat3<T: Copy>(v: &[[T; 3]]) -> Vec<T> {
    v.iter().flat_map(|p| p.iter().copied()).collect()
}

/// Tensors for the channels present in `f`, names prefixed by `prefix`.
pub fn frame_tensors(view: &SceneView, f: &FrameSet, prefix: &str, space: PointSpace) -> (Vec<Tensor>, Map<String, Value>) {
    let (h, w) = (f.height as usize, f.width as usize);
    let mut t = Vec::new();
    let mut meta = Map::new();
    let name = |n: &str| format!("{prefix}{n}");
    if let Some(lit) = &f.lit {
        t.push(Tensor::from_u8(&name("lit"), vec![h, w, 3], &flat3(lit)));
    }
    if let Some(d) = &f.depth {
        t.push(Tensor::from_f32(&name("depth"), vec![h, w], d));
    }
    if let Some(inst) = &f.instance {
        t.push(Tensor::from_u32(&name("instance"), vec![h, w], inst));
        let seg: Vec<[u8; 3]> = inst.iter().map(|&i| instance_color(i)).collect();
        t.push(Tensor::from_u8(&name("seg"), vec![h, w, 3], &flat3(&seg)));
        let objects: Vec<Value> = view
            .objects()
            .iter()
            .map(|o| json!({"obj_id": o.obj_id, "instance_id": o.instance_id, "color": instance_color(o.instance_id)}))
            .collect();
        meta.insert("objects".into(), Value::Array(objects));
    }
    if let Some(p) = &f.part {
        t.push(Tensor::from_u16(&name("part"), vec![h, w], p));
    }
    if let Some(n) = &f.normal {
        t.push(Tensor::from_f32(&name("normal"), vec![h, w, 3], &flat3(n)));
    }
    if f.pointmap.is_some() {
        let pm = pointmap_in_space(f, space).expect("pointmap present");
        t.push(Tensor::from_f32(&name("pointmap"), vec![h, w, 3], &flat3(&pm)));
    }
    meta.insert("width".into(), json!(f.width));
    meta.insert("height".into(), json!(f.height));
    let k = f.intrinsics;
    meta.insert("intrinsics".into(), json!({"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy}));
    (t, meta)
}

/// Shared world plus the loaded procedural rules.
pub struct Dispatcher {
    world: RwLock<World>,
    rules: RwLock<Vec<ProceduralRule>>,
    exec: Exec,
}

impl Dispatcher {
    pub fn new(world: World) -> Dispatcher {
        Dispatcher { world: RwLock::new(world), rules: RwLock::new(Vec::new()), exec: Exec::default() }
    }

    pub fn with_exec(mut self, exec: Exec) -> Dispatcher {
        self.exec = exec;
        self
    }

    pub fn set_rules(&self, rules: Vec<ProceduralRule>) {
        *self.rules.write().unwrap_or_else(PoisonError::into_inner) = rules;
    }

    pub fn world(&self) -> RwLockReadGuard<'_, World> {
        self.world.read().unwrap_or_else(PoisonError::into_inner)
    }

    fn world_mut(&self) -> RwLockWriteGuard<'_, World> {
        self.world.write().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    /// Runs a request to completion on the calling thread.
    pub fn handle(&self, req: &Request) -> Response {
        self.prepare(req).finish()
    }

    /// Validates and executes the synchronous part of a request. A panic in
    /// a handler becomes an `internal_error` response.
    pub fn prepare(&self, req: &Request) -> Prepared {
        let id = req.id;
        let Some(cmd) = command(&req.cmd) else {
            return Prepared::Ready(Response::error(Some(id), UNKNOWN_COMMAND, format!("unknown command {:?}", req.cmd)));
        };
        if let Err(m) = validate(cmd.args, &req.args) {
            return Prepared::Ready(Response::error(Some(id), BAD_ARGS, m));
        }
        match catch_unwind(AssertUnwindSafe(|| self.run(cmd, Args(&req.args)))) {
            Ok(Step::Now(out)) => Prepared::Ready(respond(id, out)),
            Ok(Step::Later(job)) => Prepared::Deferred(Box::new(move || {
                catch_unwind(AssertUnwindSafe(job))
                    .map(|out| respond(id, out))
                    .unwrap_or_else(|_| Response::error(Some(id), "internal_error", "handler panicked"))
            })),
            Err(_) => Prepared::Ready(Response::error(Some(id), "internal_error", "handler panicked")),
        }
    }

    fn run(&self, cmd: &Command, a: Args<'_>) -> Step {
        match cmd.name {
            "spawn_object" | "add_obj" | "add_object" => Step::Now(self.spawn(&a)),
            "set_object_location" => Step::Now(self.write(|w| w.set_object_location(a.obj(), a.vec3("location").unwrap()))),
            "set_object_rotation" => Step::Now(self.write(|w| w.set_object_rotation(a.obj(), a.rot("rotation").unwrap()))),
            "update_object" => Step::Now(self.write(|w| {
                w.update_object(a.obj(), PoseUpdate { location: a.vec3("location"), rotation: a.rot("rotation"), scale: a.f64("scale") })
            })),
            "delete_object" => Step::Now(self.write(|w| w.delete_object(a.obj()))),
            "list_objects" => Step::Now(ok_data(json!({"objects": self.world().list_objects()}))),
            "get_object_location" => Step::Now(self.read(|w| Ok(json!({"location": v3(w.get_object_location(a.obj())?)})))),
            "get_object_rotation" => Step::Now(self.read(|w| Ok(json!({"rotation": r3(w.get_object_rotation(a.obj())?)})))),
            "get_mesh_extent" => Step::Now(self.mesh_extent(&a)),
            "set_camera_location" => Step::Now(self.write(|w| w.set_camera_location(a.cam(), a.vec3("location").unwrap()))),
            "set_camera_rotation" => Step::Now(self.write(|w| w.set_camera_rotation(a.cam(), a.rot("rotation").unwrap()))),
            "get_camera_location" => Step::Now(self.read(|w| Ok(json!({"location": v3(w.get_camera(a.cam())?.location)})))),
            "get_camera_rotation" => Step::Now(self.read(|w| Ok(json!({"rotation": r3(w.get_camera(a.cam())?.rotation)})))),
            "set_camera" => Step::Now(self.set_camera(&a)),
            "get_camera" => Step::Now(self.read(|w| Ok(serde_json::to_value(w.get_camera(a.cam())?).expect("serializable")))),
            "get_cam_lit" => self.frame(&a, Channels::LIT),
            "get_cam_seg" => self.frame(&a, Channels::INSTANCE),
            "get_cam_depth" => self.frame(&a, Channels::DEPTH),
            "get_cam_normal" => self.frame(&a, Channels::NORMAL),
            "get_cam_partseg" => self.frame(&a, Channels::INSTANCE | Channels::PART),
            "get_cam_pointmap" => self.frame(&a, Channels::POINTMAP),
            "render_cameras" => self.render_cameras(&a),
            "get_obj_annots" => Step::Now(ok_data(serde_json::to_value(self.world().snapshot()).expect("serializable"))),
            "get_annotations" => self.annotations(&a),
            "load_snapshot" => Step::Now(self.load_snapshot(&a)),
            "set_scene_params" => Step::Now(self.set_params(&a)),
            "get_scene_params" => Step::Now(ok_data(serde_json::to_value(self.world().scene_params()).expect("serializable"))),
            "parse_rules" => Step::Now(self.parse_rules(&a)),
            "generate_scene" => Step::Now(self.generate(&a)),
            "run_examiner" => self.examiner(&a),
            other => unreachable!("command {other} has no handler"),
        }
    }

    fn write(&self, f: impl FnOnce(&mut World) -> simcore::Result<()>) -> Outcome {
        f(&mut self.world_mut())?;
        ok_empty()
    }

    fn read(&self, f: impl FnOnce(&World) -> simcore::Result<Value>) -> Outcome {
        ok_data(f(&self.world())?)
    }

    fn spawn(&self, a: &Args<'_>) -> Outcome {
        let mode = match a.str("collision_handling").unwrap_or("default") {
            "skip_if_colliding" => CollisionHandling::SkipIfColliding,
            "adjust_if_possible" => CollisionHandling::AdjustIfPossible,
            _ => CollisionHandling::Default,
        };
        let req = SpawnRequest::new(a.obj(), a.str("obj_path").expect("validated"))
            .at(a.vec3("location").unwrap_or(Vec3::ZERO))
            .rotated(a.rot("rotation").unwrap_or(Rotator::ZERO))
            .scaled(a.f64("scale").unwrap_or(1.0))
            .mode(mode)
            .locked(a.bool("lock_rotation").unwrap_or(false));
        let out = self.world_mut().spawn_object(&req)?;
        ok_data(json!({"obj_id": a.obj(), "instance_id": out.instance_id, "location": v3(out.location), "nudged": out.nudged}))
    }

    fn mesh_extent(&self, a: &Args<'_>) -> Outcome {
        let w = self.world();
        let path = match (a.str("obj_path"), a.str("obj_id")) {
            (Some(p), None) => p.to_string(),
            (None, Some(id)) => w.get_object(id)?.asset_path.clone(),
            _ => return Err(Failure::Args("give exactly one of obj_path and obj_id".into())),
        };
        ok_data(json!({"extent": v3(w.get_mesh_extent(&path)?)}))
    }

    fn set_camera(&self, a: &Args<'_>) -> Outcome {
        let mut w = self.world_mut();
        let cam = a.cam();
        let res = match (a.f64("width"), a.f64("height")) {
            (None, None) => None,
            (wd, ht) => {
                let cur = w.get_camera(cam).cloned().unwrap_or_else(|_| CameraState::default_for(cam));
                Some((wd.map_or(cur.width, |v| v as u32), ht.map_or(cur.height, |v| v as u32)))
            }
        };
        w.set_camera(cam, a.vec3("location"), a.rot("rotation"), a.f64("fov"), res)?;
        ok_empty()
    }

    fn frame(&self, a: &Args<'_>, channels: Channels) -> Step {
        let space = match a.str("space") {
            Some(s) => s.parse::<PointSpace>().expect("validated by schema"),
            None => PointSpace::World,
        };
        let (view, cam) = {
            let w = self.world();
            match w.get_camera(a.cam()) {
                Ok(c) => (w.view(), c.clone()),
                Err(e) => return Step::Now(Err(e.into())),
            }
        };
        let exec = self.exec;
        Step::Later(Box::new(move || {
            let f = render_camera(&view, &cam, channels, exec);
            let (tensors, mut meta) = frame_tensors(&view, &f, "", space);
            meta.insert("cam_id".into(), json!(cam.cam_id));
            if channels.contains(Channels::POINTMAP) {
                meta.insert("space".into(), json!(if space == PointSpace::OpenCv { "opencv" } else { "world" }));
            }
            Ok((meta, tensors))
        }))
    }

    /// Full frame for one camera, rendered on the calling thread.
    pub fn render_frame(&self, cam_id: u32, channels: Channels) -> simcore::Result<(Arc<SceneView>, FrameSet)> {
        let (view, cam) = {
            let w = self.world();
            (w.view(), w.get_camera(cam_id)?.clone())
        };
        let f = render_camera(&view, &cam, channels, self.exec);
        Ok((view, f))
    }

    fn render_cameras(&self, a: &Args<'_>) -> Step {
        let ids: Vec<u32> =
            a.0["cam_ids"].as_array().expect("validated").iter().map(|v| v.as_u64().expect("validated") as u32).collect();
        let mut channels = Channels::empty();
        match a.0.get("channels").and_then(Value::as_array) {
            None => channels = Channels::all(),
            Some(names) => {
                for n in names {
                    let n = n.as_str().expect("validated");
                    match Channels::from_channel_name(n) {
                        Some(c) => channels |= c,
                        None => return Step::Now(Err(Failure::Args(format!("unknown channel {n:?}")))),
                    }
                }
            }
        }
        let (view, cams) = {
            let w = self.world();
            let cams: Result<Vec<CameraState>, SimError> = ids.iter().map(|&i| w.get_camera(i).cloned()).collect();
            match cams {
                Ok(c) => (w.view(), c),
                Err(e) => return Step::Now(Err(e.into())),
            }
        };
        let exec = self.exec;
        Step::Later(Box::new(move || {
            let frames = exec.map(cams.len(), |i| render_camera(&view, &cams[i], channels, exec));
            let mut tensors = Vec::new();
            let mut metas = Vec::new();
            for (cam, f) in cams.iter().zip(&frames) {
                let (t, mut m) = frame_tensors(&view, f, &format!("{}/", cam.cam_id), PointSpace::World);
                m.insert("cam_id".into(), json!(cam.cam_id));
                tensors.extend(t);
                metas.push(Value::Object(m));
            }
            Ok((data(json!({"frames": metas})), tensors))
        }))
    }

    fn annotations(&self, a: &Args<'_>) -> Step {
        let cam_id = a.cam();
        let view = {
            let w = self.world();
            if let Err(e) = w.get_camera(cam_id) {
                return Step::Now(Err(e.into()));
            }
            w.view()
        };
        let exec = self.exec;
        Step::Later(Box::new(move || {
            let ann = annotate_all_with(&view, cam_id, exec)?;
            let graph = occlusion_graph(&view, cam_id)?;
            let edges: Vec<Value> = graph.iter().map(|(a, b)| json!({"occluder": a, "occluded": b})).collect();
            ok_data(json!({"cam_id": cam_id, "annotations": ann, "occlusion_graph": edges}))
        }))
    }

    fn load_snapshot(&self, a: &Args<'_>) -> Outcome {
        let snap = SceneSnapshot::from_json(&a.0["snapshot"].to_string())?;
        self.world_mut().load_snapshot(&snap, a.bool("clear").unwrap_or(false))?;
        ok_empty()
    }

    fn set_params(&self, a: &Args<'_>) -> Outcome {
        let patch: SceneParamsPatch =
            serde_json::from_value(Value::Object(a.0.clone())).map_err(|e| Failure::Args(e.to_string()))?;
        self.world_mut().update_scene_params(&patch)?;
        ok_empty()
    }

    fn parse_rules(&self, a: &Args<'_>) -> Outcome {
        let rules = match (a.str("text"), a.str("path")) {
            (Some(t), None) => parse_rules(t, "request")?,
            (None, Some(p)) => load_rules(std::path::Path::new(p))?,
            _ => return Err(Failure::Args("give exactly one of text and path".into())),
        };
        let summary: Vec<Value> = rules.iter().map(|r| json!({"rule_id": r.rule_id, "category": r.category.name()})).collect();
        self.set_rules(rules);
        ok_data(json!({"rules": summary}))
    }

    fn generate(&self, a: &Args<'_>) -> Outcome {
        let cfg = GenerationConfig::from_json(&a.0["config"].to_string())?;
        let rules = self.rules.read().unwrap_or_else(PoisonError::into_inner).clone();
        if rules.is_empty() {
            return Err(Failure::Sim(SimError::InvalidArgument("no procedural rules loaded".into())));
        }
        let report = generate_scene(&mut self.world_mut(), &rules, &cfg)?;
        ok_data(serde_json::to_value(report).expect("serializable"))
    }

    fn examiner(&self, a: &Args<'_>) -> Step {
        let cfg: ExaminerConfig = match a.0.get("config") {
            None => ExaminerConfig::default(),
            Some(v) => match serde_json::from_value(v.clone()) {
                Ok(c) => c,
                Err(e) => return Step::Now(Err(Failure::Args(format!("examiner config: {e}")))),
            },
        };
        let target = a.str("target").expect("validated").to_string();
        let view = {
            let w = self.world();
            if let Err(e) = w.get_object(&target) {
                return Step::Now(Err(e.into()));
            }
            w.view()
        };
        let oracle = a.str("oracle").unwrap_or("flawed").to_string();
        let exec = self.exec;
        Step::Later(Box::new(move || {
            let mut seg: Box<dyn Segmenter> =
                if oracle == "perfect" { Box::new(PerfectOracle) } else { Box::new(FlawedOracle::default()) };
            let report = run_examiner(&view, &target, seg.as_mut(), &cfg, exec)?;
            ok_data(serde_json::to_value(report).expect("serializable"))
        }))
    }
}

enum Step {
    Now(Outcome),
    Later(Box<dyn FnOnce() -> Outcome + Send>),
}
