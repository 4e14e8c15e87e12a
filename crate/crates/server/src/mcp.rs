//! Model Context Protocol over stdio: newline-delimited JSON-RPC 2.0.
//! Tool calls go through the same [`Dispatcher`] as the TCP protocol.

use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::{json, Map, Value};
use simcore::render::{Channels, FrameSet};

use crate::dispatch::{command, Dispatcher, BAD_ARGS};
use crate::protocol::{Request, Response};
use crate::schema::{json_schema, opt, validate, Arg, Kind};

pub const SERVER_NAME: &str = "simserver";
pub const PROTOCOL_VERSION: &str = "2025-06-18";
const SUPPORTED_VERSIONS: &[&str] = &["2025-06-18", "2025-03-26", "2024-11-05"];

/// The spawn_object descriptor, kept field-for-field identical to the
/// published tool schema.
pub const SPAWN_OBJECT_DESCRIPTOR: &str = include_str!("spawn_object.json");

const PARSE_ERROR: i64 = -32700;
const INVALID_REQUEST: i64 = -32600;
const METHOD_NOT_FOUND: i64 = -32601;
const INVALID_PARAMS: i64 = -32602;
const NOT_INITIALIZED: i64 = -32002;

const GT_ARGS: &[Arg] = &[
    opt("cam_id", Kind::Int(0, u32::MAX as i64), "Camera id. Defaults to 0."),
    opt("channels", Kind::StrList, "Any of depth, instance, part, normal, pointmap, lit. Defaults to all but lit."),
    opt("sink_path", Kind::Str, "Directory to write full-resolution buffers to."),
];

/// (tool name, dispatch command, description).
const TOOLS: &[(&str, &str, &str)] = &[
    ("list_objects", "list_objects", "List the ids of all objects in the scene, in spawn order."),
    ("get_object_location", "get_object_location", "World-space location [x, y, z] of an object, in centimeters."),
    ("get_object_rotation", "get_object_rotation", "Rotation [pitch, yaw, roll] of an object, in degrees."),
    ("get_camera_location", "get_camera_location", "World-space location of a camera."),
    ("get_camera_rotation", "get_camera_rotation", "Rotation [pitch, yaw, roll] of a camera."),
    ("add_object", "add_object", "Add an object to the scene. Same arguments and results as spawn_object."),
    ("set_object_location", "set_object_location", "Move an object to a world-space location."),
    ("set_object_rotation", "set_object_rotation", "Set an object's rotation. Fails with rotation_locked on locked objects."),
    ("update_object", "update_object", "Change any of an object's location, rotation and scale."),
    ("delete_object", "delete_object", "Remove an object from the scene."),
    ("get_mesh_extent", "get_mesh_extent", "Size [x, y, z] in centimeters of an asset's bounding box at canonical scale."),
    ("set_camera_location", "set_camera_location", "Move a camera. Cameras are created on first use."),
    ("set_camera_rotation", "set_camera_rotation", "Set a camera's rotation [pitch, yaw, roll]; pitch -89 looks straight down."),
    ("get_camera_lit", "get_cam_lit", "Render the shaded view of a camera as a PNG image."),
    ("spawn_object", "spawn_object", ""),
    ("get_camera_ground_truths", "", "Summaries of depth, segmentation, part, normal and point-map buffers for a camera, optionally written to disk."),
];

pub fn tool_descriptors() -> Vec<Value> {
    TOOLS
        .iter()
        .map(|&(name, cmd, desc)| match name {
            "spawn_object" => serde_json::from_str(SPAWN_OBJECT_DESCRIPTOR).expect("descriptor is valid JSON"),
            "get_camera_ground_truths" => json!({"name": name, "description": desc, "inputSchema": json_schema(GT_ARGS)}),
            _ => {
                let c = command(cmd).expect("tool maps to a command");
                json!({"name": name, "description": desc, "inputSchema": json_schema(c.args)})
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Fresh,
    Ready,
}

pub struct McpSession {
    dispatcher: Arc<Dispatcher>,
    phase: Phase,
    next_id: i64,
}

fn rpc_error(id: Value, code: i64, message: &str) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "error": {"code": code, "message": message}})
}

fn rpc_result(id: Value, result: Value) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "result": result})
}

fn text_result(status_body: Value, is_error: bool) -> Value {
    json!({"content": [{"type": "text", "text": status_body.to_string()}], "isError": is_error})
}

fn status_body(r: &Response) -> Value {
    let mut m = Map::new();
    m.insert("status".into(), Value::String(r.status.clone()));
    for (k, v) in &r.data {
        m.insert(k.clone(), v.clone());
    }
    Value::Object(m)
}

pub fn encode_png(width: u32, height: u32, rgb: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("in-memory PNG header");
        w.write_image_data(rgb).expect("in-memory PNG data");
    }
    out
}

impl McpSession {
    pub fn new(dispatcher: Arc<Dispatcher>) -> McpSession {
        McpSession { dispatcher, phase: Phase::Fresh, next_id: 1 }
    }

    /// Handles one message line. Returns the reply, or `None` for
    /// notifications.
    pub fn handle_line(&mut self, line: &str) -> Option<Value> {
        let msg: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(_) => return Some(rpc_error(Value::Null, PARSE_ERROR, "parse error")),
        };
        self.handle_message(&msg)
    }

    pub fn handle_message(&mut self, msg: &Value) -> Option<Value> {
        let Some(obj) = msg.as_object() else {
            return Some(rpc_error(Value::Null, INVALID_REQUEST, "expected a JSON-RPC object"));
        };
        let id = obj.get("id").cloned();
        let Some(method) = obj.get("method").and_then(Value::as_str) else {
            // Responses from the client, or garbage; only the latter gets a reply.
            return match id {
                Some(id) if !obj.contains_key("result") && !obj.contains_key("error") => {
                    Some(rpc_error(id, INVALID_REQUEST, "missing method"))
                }
                _ => None,
            };
        };
        if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
            return id.map(|id| rpc_error(id, INVALID_REQUEST, "jsonrpc must be \"2.0\""));
        }
        let params = obj.get("params").cloned().unwrap_or(Value::Null);
        let Some(id) = id else {
            // Notifications never get a reply.
            return None;
        };
        let reply = match (method, self.phase) {
            ("initialize", Phase::Fresh) => {
                self.phase = Phase::Ready;
                let asked = params.get("protocolVersion").and_then(Value::as_str).unwrap_or(PROTOCOL_VERSION);
                let version = if SUPPORTED_VERSIONS.contains(&asked) { asked } else { PROTOCOL_VERSION };
                rpc_result(
                    id,
                    json!({
                        "protocolVersion": version,
                        "capabilities": {"tools": {"listChanged": false}},
                        "serverInfo": {"name": SERVER_NAME, "version": env!("CARGO_PKG_VERSION")},
                    }),
                )
            }
            ("initialize", Phase::Ready) => rpc_error(id, INVALID_REQUEST, "already initialized"),
            ("ping", _) => rpc_result(id, json!({})),
            (_, Phase::Fresh) => rpc_error(id, NOT_INITIALIZED, "not initialized"),
            ("tools/list", _) => rpc_result(id, json!({"tools": tool_descriptors()})),
            ("tools/call", _) => match self.call(&params) {
                Ok(result) => rpc_result(id, result),
                Err((code, m)) => rpc_error(id, code, &m),
            },
            _ => rpc_error(id, METHOD_NOT_FOUND, &format!("method not found: {method}")),
        };
        Some(reply)
    }

    fn call(&mut self, params: &Value) -> Result<Value, (i64, String)> {
        let name = params.get("name").and_then(Value::as_str).ok_or((INVALID_PARAMS, "tools/call needs a name".to_string()))?;
        let &(_, cmd, _) =
            TOOLS.iter().find(|t| t.0 == name).ok_or_else(|| (INVALID_PARAMS, format!("unknown tool: {name}")))?;
        let args = match params.get("arguments") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(m)) => m.clone(),
            Some(_) => return Ok(text_result(json!({"status": BAD_ARGS, "message": "arguments must be an object"}), true)),
        };
        if name == "get_camera_ground_truths" {
            return Ok(self.ground_truths(&args));
        }
        let id = self.next_id;
        self.next_id += 1;
        let resp = self.dispatcher.handle(&Request { id, cmd: cmd.into(), args });
        if !resp.is_ok() {
            return Ok(text_result(status_body(&resp), true));
        }
        if name == "get_camera_lit" {
            let t = resp.tensor("lit").expect("lit tensor");
            let rgb = t.to_u8().expect("u8 tensor");
            let (h, w) = (t.shape[0] as u32, t.shape[1] as u32);
            return Ok(json!({
                "content": [{"type": "image", "data": B64.encode(encode_png(w, h, &rgb)), "mimeType": "image/png"}],
                "isError": false,
            }));
        }
        Ok(text_result(status_body(&resp), false))
    }

    fn ground_truths(&self, args: &Map<String, Value>) -> Value {
        let fail = |code: &str, m: String| text_result(json!({"status": code, "message": m}), true);
        if let Err(m) = validate(GT_ARGS, args) {
            return fail(BAD_ARGS, m);
        }
        let cam_id = args.get("cam_id").and_then(Value::as_u64).unwrap_or(0) as u32;
        let mut channels = Channels::DEPTH | Channels::INSTANCE | Channels::PART | Channels::NORMAL | Channels::POINTMAP;
        if let Some(list) = args.get("channels").and_then(Value::as_array) {
            channels = Channels::empty();
            for n in list.iter().filter_map(Value::as_str) {
                match Channels::from_channel_name(n) {
                    Some(c) => channels |= c,
                    None => return fail(BAD_ARGS, format!("unknown channel {n:?}")),
                }
            }
        }
        let (view, frame) = match self.dispatcher.render_frame(cam_id, channels) {
            Ok(v) => v,
            Err(e) => return fail(e.code(), e.to_string()),
        };
        let mut body = summarize(&view, &frame);
        if let Some(dir) = args.get("sink_path").and_then(Value::as_str) {
            match write_sink(Path::new(dir), &view, &frame) {
                Ok(files) => {
                    body["files"] = files;
                }
                Err(e) => return fail("io_error", e.to_string()),
            }
        }
        body["status"] = json!("ok");
        text_result(body, false)
    }
}

fn summarize(view: &simcore::world::SceneView, f: &FrameSet) -> Value {
    let n = f.pixel_count() as f64;
    let mut out = json!({"cam_id": f.cam_id, "width": f.width, "height": f.height});
    if let Some(d) = &f.depth {
        let hits: Vec<f32> = d.iter().copied().filter(|v| v.is_finite()).collect();
        let (lo, hi) = hits.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let mean = hits.iter().map(|&v| v as f64).sum::<f64>() / hits.len().max(1) as f64;
        out["depth"] = if hits.is_empty() {
            json!({"hit_fraction": 0.0})
        } else {
            json!({"hit_fraction": hits.len() as f64 / n, "min": lo, "max": hi, "mean": mean})
        };
    }
    if let Some(inst) = &f.instance {
        let mut counts: std::collections::BTreeMap<u32, usize> = Default::default();
        for &i in inst.iter().filter(|&&i| i != 0) {
            *counts.entry(i).or_default() += 1;
        }
        let objects: Vec<Value> = view
            .objects()
            .iter()
            .filter_map(|o| counts.get(&o.instance_id).map(|&c| json!({"obj_id": o.obj_id, "instance_id": o.instance_id, "pixels": c})))
            .collect();
        out["instance"] = json!({"visible_objects": objects});
    }
    if let Some(p) = &f.part {
        let distinct: std::collections::BTreeSet<u16> = p.iter().copied().filter(|&v| v != 0).collect();
        out["part"] = json!({"distinct_parts": distinct.len()});
    }
    if let Some(nm) = &f.normal {
        out["normal"] = json!({"hit_pixels": nm.iter().filter(|v| v.iter().any(|&c| c != 0.0)).count()});
    }
    if let Some(pm) = &f.pointmap {
        let finite: Vec<&[f32; 3]> = pm.iter().filter(|p| p[0].is_finite()).collect();
        if !finite.is_empty() {
            let mut lo = [f32::INFINITY; 3];
            let mut hi = [f32::NEG_INFINITY; 3];
            for p in &finite {
                for k in 0..3 {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
            out["pointmap"] = json!({"space": "world", "min": lo, "max": hi});
        } else {
            out["pointmap"] = json!({"space": "world"});
        }
    }
    out
}

/// Writes each buffer as little-endian row-major `.bin` plus a `frame.json`
/// describing names, dtypes and shapes; lit goes to `lit.png`.
fn write_sink(dir: &Path, view: &simcore::world::SceneView, f: &FrameSet) -> io::Result<Value> {
    std::fs::create_dir_all(dir)?;
    let (tensors, meta) = crate::dispatch::frame_tensors(view, f, "", simcore::render::PointSpace::World);
    let mut files = Vec::new();
    for t in &tensors {
        if t.name == "lit" {
            let rgb = t.to_u8().map_err(io::Error::other)?;
            let p = dir.join("lit.png");
            std::fs::write(&p, encode_png(f.width, f.height, &rgb))?;
            files.push(json!({"name": "lit", "path": p.display().to_string(), "format": "png"}));
            continue;
        }
        let bytes = t.bytes_of(t.dtype).map_err(io::Error::other)?;
        let p = dir.join(format!("{}.bin", t.name));
        std::fs::write(&p, bytes)?;
        files.push(json!({"name": t.name, "path": p.display().to_string(), "dtype": t.dtype, "shape": t.shape}));
    }
    let index = json!({"frame": meta, "buffers": files});
    std::fs::write(dir.join("frame.json"), serde_json::to_vec_pretty(&index)?)?;
    Ok(Value::Array(files))
}

/// Runs a session until `input` closes. Malformed lines get error replies.
pub fn serve_stdio<R: BufRead, W: Write>(dispatcher: Arc<Dispatcher>, input: R, mut output: W) -> io::Result<()> {
    let mut session = McpSession::new(dispatcher);
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(reply) = session.handle_line(&line) {
            serde_json::to_writer(&mut output, &reply)?;
            output.write_all(b"\n")?;
            output.flush()?;
        }
    }
    Ok(())
}
