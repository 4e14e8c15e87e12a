#![allow(dead_code)]

use std::io::Write;
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;

use rand::Rng;
use serde_json::{json, Value};
use simcore::catalog::Catalog;
use simcore::world::World;
use simserver::protocol::{encode_frame, read_frame, Response};
use simserver::serve::{RunningServer, Server};
use simserver::dispatch::COMMANDS;
use simserver::Dispatcher;

pub const CUBE: &str = "/Engine/BasicShapes/Cube.Cube";

pub fn start(world: World) -> (RunningServer, Arc<Dispatcher>) {
    let d = Arc::new(Dispatcher::new(world));
    let s = Server::bind("127.0.0.1:0", Arc::clone(&d)).unwrap().spawn();
    (s, d)
}

pub fn start_empty() -> (RunningServer, Arc<Dispatcher>) {
    start(World::new(Arc::new(Catalog::builtin())))
}

pub struct Client {
    pub stream: TcpStream,
    next: i64,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Client {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_nodelay(true).unwrap();
        Client { stream, next: 1000 }
    }

    pub fn send_raw(&mut self, payload: &[u8]) {
        self.stream.write_all(&encode_frame(payload).unwrap()).unwrap();
    }

    pub fn send(&mut self, id: i64, cmd: &str, args: Value) {
        self.send_raw(json!({"id": id, "cmd": cmd, "args": args}).to_string().as_bytes());
    }

    pub fn recv(&mut self) -> Response {
        let f = read_frame(&mut self.stream).unwrap().expect("server closed the connection");
        serde_json::from_slice(&f).unwrap()
    }

    pub fn call(&mut self, cmd: &str, args: Value) -> Response {
        self.next += 1;
        let id = self.next;
        self.send(id, cmd, args);
        let r = self.recv();
        assert_eq!(r.id, Some(id));
        r
    }

    pub fn ok(&mut self, cmd: &str, args: Value) -> Response {
        let r = self.call(cmd, args.clone());
        assert!(r.is_ok(), "{cmd} {args}: {} {:?}", r.status, r.data);
        r
    }
}

/// Decodes the JSON body of a text tool result.
pub fn tool_body(result: &Value) -> Value {
    let c = &result["content"][0];
    match c["type"].as_str() {
        Some("text") => serde_json::from_str(c["text"].as_str().unwrap()).unwrap(),
        Some("image") => json!({"status": if result["isError"] == json!(false) { "ok" } else { "error" }}),
        other => panic!("unexpected content type {other:?}"),
    }
}

/// Runs the scene-planning workflow against the empty loft room: snapshot,
/// anchors, desktop stack, chairs, top-down check, final camera. `call`
/// performs one `tools/call` and returns its `result`. Returns every
/// `(tool, result)` pair in order.
pub fn plan_loft(call: &mut dyn FnMut(&str, Value) -> Value) -> Vec<(String, Value)> {
    use simcore::fixtures::{loft_spec, DESK_HEIGHT, LOFT_LAYOUT};
    let spec = loft_spec();
    let floor_z = spec.floor_z.unwrap();
    let mode = spec.placement_options["collision_handling"].clone();
    let lock = spec.flag("lock_rotation");
    let mut log: Vec<(String, Value)> = Vec::new();
    let mut go = |log: &mut Vec<(String, Value)>, tool: &str, args: Value| -> Value {
        let r = call(tool, args);
        log.push((tool.to_string(), r.clone()));
        tool_body(&r)
    };

    let existing = go(&mut log, "list_objects", json!({}))["objects"].clone();
    go(&mut log, "get_camera_location", json!({}));
    go(&mut log, "get_camera_rotation", json!({}));
    go(&mut log, "get_camera_lit", json!({}));
    let table = spec.asset("Table").unwrap();
    let ext = go(&mut log, "get_mesh_extent", json!({"obj_path": table}))["extent"].clone();
    assert!((ext[2].as_f64().unwrap() - DESK_HEIGHT).abs() < 1e-9, "desk height from extent: {ext}");

    let desk_top = floor_z + DESK_HEIGHT;
    let is_chair = |id: &str| id.starts_with("Chair");
    let anchors = ["Table_1", "SoftChair_1"];
    let order = anchors
        .iter()
        .copied()
        .chain(LOFT_LAYOUT.iter().map(|e| e.0).filter(|id| !anchors.contains(id) && !is_chair(id)))
        .chain(LOFT_LAYOUT.iter().map(|e| e.0).filter(|id| is_chair(id)));
    for id in order {
        if existing.as_array().unwrap().iter().any(|e| e == id) {
            continue;
        }
        let &(_, label, loc, yaw) = LOFT_LAYOUT.iter().find(|e| e.0 == id).unwrap();
        let on_desk = loc[2] > floor_z;
        let z = if on_desk { desk_top } else { floor_z };
        // Chairs go in facing +X and are turned afterwards.
        let first_yaw = if is_chair(id) { 0.0 } else { yaw };
        go(
            &mut log,
            "add_object",
            json!({
                "obj_id": id,
                "obj_path": spec.asset(label).unwrap(),
                "location": [loc[0], loc[1], z],
                "rotation": [0.0, first_yaw, 0.0],
                "collision_handling": mode,
                "lock_rotation": lock,
            }),
        );
        if is_chair(id) {
            go(&mut log, "set_object_rotation", json!({"obj_id": id, "rotation": [0.0, yaw, 0.0]}));
        }
        if on_desk {
            let at = go(&mut log, "get_object_location", json!({"obj_id": id}))["location"].clone();
            assert_eq!(at[2].as_f64().unwrap(), desk_top, "{id} left the desk top");
        }
    }

    let (x0, x1) = spec.x_range.unwrap();
    let (y0, y1) = spec.y_range.unwrap();
    go(&mut log, "set_camera_location", json!({"location": [(x0 + x1) / 2.0, (y0 + y1) / 2.0, 250.0]}));
    go(&mut log, "set_camera_rotation", json!({"rotation": [-89.0, 0.0, 0.0]}));
    go(&mut log, "get_camera_lit", json!({}));
    let gt = go(&mut log, "get_camera_ground_truths", json!({"channels": ["instance"]}));
    let seen: Vec<&str> =
        gt["instance"]["visible_objects"].as_array().unwrap().iter().map(|o| o["obj_id"].as_str().unwrap()).collect();
    for id in ["Table_1", "Monitor_1", "SoftChair_1"] {
        assert!(seen.contains(&id), "{id} not visible from above: {seen:?}");
    }
    go(&mut log, "get_object_rotation", json!({"obj_id": "Chair_2"}));

    let loc = spec.final_camera_location.unwrap();
    let rot = spec.final_camera_rotator().unwrap();
    go(&mut log, "set_camera_location", json!({"location": [loc.x, loc.y, loc.z]}));
    go(&mut log, "set_camera_rotation", json!({"rotation": [rot.pitch, rot.yaw, rot.roll]}));
    go(&mut log, "get_camera_lit", json!({}));
    log
}

pub fn random_value(rng: &mut impl Rng, depth: u32) -> Value {
    match rng.random_range(0..if depth > 2 { 6 } else { 8 }) {
        0 => Value::Null,
        1 => json!(rng.random_bool(0.5)),
        2 => json!(rng.random_range(-10i64..2000)),
        3 => json!(rng.random_range(-1e4..1e4)),
        4 => json!(["", CUBE, "x", "default", "opencv", "adjust_if_possible"][rng.random_range(0..6)]),
        5 => json!([rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)]),
        6 => Value::Array((0..rng.random_range(0..4)).map(|_| random_value(rng, depth + 1)).collect()),
        _ => {
            let mut m = serde_json::Map::new();
            for _ in 0..rng.random_range(0..4) {
                let keys = ["obj_id", "obj_path", "location", "cam_id", "space", "snapshot", "q", "text", "config"];
                m.insert(keys[rng.random_range(0..keys.len())].into(), random_value(rng, depth + 1));
            }
            Value::Object(m)
        }
    }
}

/// Frames that are random bytes, random JSON, or envelopes for real
/// commands with randomly typed arguments.
pub fn random_frame(rng: &mut impl Rng, id: i64) -> Vec<u8> {
    match rng.random_range(0..3) {
        0 => (0..rng.random_range(0..64)).map(|_| rng.random()).collect(),
        1 => random_value(rng, 0).to_string().into_bytes(),
        _ => {
            let cmd = COMMANDS[rng.random_range(0..COMMANDS.len())].name;
            let mut args = serde_json::Map::new();
            for a in COMMANDS.iter().find(|c| c.name == cmd).unwrap().args {
                if rng.random_bool(0.6) {
                    args.insert(a.name.into(), random_value(rng, 1));
                }
            }
            json!({"id": id, "cmd": cmd, "args": args}).to_string().into_bytes()
        }
    }
}

/// Sends `frames` random frames over one connection in pipelined batches
/// and tallies reply statuses. Every frame must get exactly one reply.
pub fn fuzz(addr: SocketAddr, frames: usize, seed: u64) -> std::collections::BTreeMap<String, usize> {
    use rand::SeedableRng;
    const BATCH: usize = 200;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut c = Client::connect(addr);
    let mut tally = std::collections::BTreeMap::new();
    let mut sent = 0;
    while sent < frames {
        let n = BATCH.min(frames - sent);
        let mut bytes = Vec::new();
        for i in 0..n {
            bytes.extend(encode_frame(&random_frame(&mut rng, (sent + i) as i64)).unwrap());
        }
        c.stream.write_all(&bytes).unwrap();
        for _ in 0..n {
            *tally.entry(c.recv().status).or_insert(0) += 1;
        }
        sent += n;
    }
    tally
}
