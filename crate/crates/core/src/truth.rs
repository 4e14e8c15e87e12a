//! Object-level annotations derived from rendered buffers: boxes, occlusion,
//! truncation, occlusion relations and part visibility.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::exec::Exec;
use crate::geometry::{Pose, Rotator, Vec3};
use crate::render::{render_camera, render_geometry_alone, Channels, FrameSet, InstanceDepthBuffer};
use crate::world::{CameraState, SceneObject, SceneView};

/// Depth tolerance in cm for "strictly nearer".
pub const DEPTH_EPSILON: f32 = 0.1;
/// Viewport expansion used for truncation and amodal boxes.
pub const TRUNCATION_EXPAND: u32 = 3;
/// Minimum fraction of the occluded object's footprint for an occlusion edge.
pub const EDGE_FRACTION: f64 = 0.005;

/// Pixel rectangle with inclusive minimum and exclusive maximum, in
/// original-window coordinates. Amodal boxes may extend past the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x_min: i64,
    pub y_min: i64,
    pub x_max: i64,
    pub y_max: i64,
}

impl PixelBox {
    fn point(x: i64, y: i64) -> PixelBox {
        PixelBox { x_min: x, y_min: y, x_max: x + 1, y_max: y + 1 }
    }

    fn grow(&mut self, x: i64, y: i64) {
        self.x_min = self.x_min.min(x);
        self.y_min = self.y_min.min(y);
        self.x_max = self.x_max.max(x + 1);
        self.y_max = self.y_max.max(y + 1);
    }

    pub fn width(&self) -> i64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> i64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, o: &PixelBox) -> bool {
        self.x_min <= o.x_min && self.y_min <= o.y_min && self.x_max >= o.x_max && self.y_max >= o.y_max
    }
}

fn grow_opt(b: &mut Option<PixelBox>, x: i64, y: i64) {
    match b {
        Some(b) => b.grow(x, y),
        None => *b = Some(PixelBox::point(x, y)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub obj_id: String,
    pub instance_id: u32,
    pub category: String,
    pub caption: String,
    pub asset_path: String,
    pub location: Vec3,
    pub rotation: Rotator,
    pub scale: f64,
    /// World-space corners of the canonical mesh box, x varying fastest.
    pub bbox_3d: [Vec3; 8],
    pub bbox_2d_visible: Option<PixelBox>,
    pub bbox_2d_amodal: Option<PixelBox>,
    pub occlusion_ratio: f64,
    /// Occlusion was measured over a partially truncated footprint.
    pub occlusion_partial: bool,
    pub truncation_ratio: f64,
    pub fully_truncated: bool,
    pub occluded_by: Vec<String>,
    /// Part id to visible fraction.
    pub part_visibility: BTreeMap<u16, f64>,
    pub visible_pixels: u64,
    pub footprint_pixels: u64,
}

fn check_window(full: &FrameSet, alone: &InstanceDepthBuffer) -> Result<()> {
    if full.width != alone.window_width || full.height != alone.window_height {
        return Err(SimError::ResolutionMismatch(format!(
            "frame is {}x{}, instance buffer window is {}x{}",
            full.width, full.height, alone.window_width, alone.window_height
        )));
    }
    Ok(())
}

fn channel<'a, T>(c: &'a Option<Vec<T>>, name: &str) -> Result<&'a [T]> {
    c.as_deref().ok_or_else(|| SimError::invalid(format!("frame lacks the {name} channel")))
}

/// Footprint and occluded pixel counts of one object: over window pixels
/// where the object alone is hit, a pixel is occluded when the full render
/// shows another instance strictly nearer (by [`DEPTH_EPSILON`]).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OcclusionCounts {
    pub footprint: u64,
    pub occluded: u64,
    /// Occluded pixels per occluding instance.
    pub by_occluder: BTreeMap<u32, u64>,
}

impl OcclusionCounts {
    pub fn ratio(&self) -> f64 {
        if self.footprint == 0 {
            0.0
        } else {
            self.occluded as f64 / self.footprint as f64
        }
    }
}

pub fn occlusion_counts(full: &FrameSet, alone: &InstanceDepthBuffer) -> Result<OcclusionCounts> {
    check_window(full, alone)?;
    let depth = channel(&full.depth, "depth")?;
    let inst = channel(&full.instance, "instance")?;
    let w = full.width as usize;
    let mut c = OcclusionCounts::default();
    for v in 0..full.height as usize {
        let row = (v + alone.window_y as usize) * alone.width as usize + alone.window_x as usize;
        for u in 0..w {
            let a = alone.depth[row + u];
            if !a.is_finite() {
                continue;
            }
            c.footprint += 1;
            let i = v * w + u;
            if inst[i] != alone.instance_id && inst[i] != 0 && depth[i] < a - DEPTH_EPSILON {
                c.occluded += 1;
                *c.by_occluder.entry(inst[i]).or_default() += 1;
            }
        }
    }
    Ok(c)
}

/// Fraction of the object's in-window footprint hidden by nearer geometry;
/// 0 when the footprint is empty.
pub fn occlusion_ratio(full: &FrameSet, alone: &InstanceDepthBuffer) -> Result<f64> {
    occlusion_counts(full, alone).map(|c| c.ratio())
}

/// `(1 - I/T, fully_truncated)` where `T` counts all hit pixels of the
/// expanded buffer and `I` those inside the original window. An object with
/// no hit pixels at all reports `(1, true)`, a lower bound.
pub fn truncation_ratio(alone: &InstanceDepthBuffer) -> (f64, bool) {
    let (mut total, mut inside) = (0u64, 0u64);
    for y in 0..alone.height {
        let row = y as usize * alone.width as usize;
        for x in 0..alone.width {
            if alone.depth[row + x as usize].is_finite() {
                total += 1;
                if alone.in_window(x, y) {
                    inside += 1;
                }
            }
        }
    }
    if total == 0 {
        return (1.0, true);
    }
    (1.0 - inside as f64 / total as f64, inside == 0)
}

/// Tight box of pixels showing `instance_id` in the full render.
pub fn visible_bbox(full: &FrameSet, instance_id: u32) -> Result<Option<PixelBox>> {
    let inst = channel(&full.instance, "instance")?;
    let w = full.width as usize;
    let mut b = None;
    for (i, &id) in inst.iter().enumerate() {
        if id == instance_id {
            grow_opt(&mut b, (i % w) as i64, (i / w) as i64);
        }
    }
    Ok(b)
}

/// Tight box of hit pixels of an instance-alone buffer, in original-window
/// coordinates. Not clamped to the window.
pub fn amodal_bbox(alone: &InstanceDepthBuffer) -> Option<PixelBox> {
    let mut b = None;
    for y in 0..alone.height {
        let row = y as usize * alone.width as usize;
        for x in 0..alone.width {
            if alone.depth[row + x as usize].is_finite() {
                let (u, v) = alone.to_window_coords(x, y);
                grow_opt(&mut b, u, v);
            }
        }
    }
    b
}

/// Number of occluded pixels needed for an occlusion edge onto an object
/// with the given footprint.
pub fn edge_threshold(footprint: u64) -> f64 {
    (EDGE_FRACTION * footprint as f64).max(1.0)
}

/// Everything computed per object from one expanded instance-alone render.
#[derive(Debug, Clone)]
struct ObjectStats {
    counts: OcclusionCounts,
    truncation: (f64, bool),
    amodal: Option<PixelBox>,
    alone_part_pixels: HashMap<u16, u64>,
}

fn object_stats(full: &FrameSet, alone: &InstanceDepthBuffer) -> Result<ObjectStats> {
    let counts = occlusion_counts(full, alone)?;
    let mut alone_part_pixels = HashMap::new();
    if let Some(parts) = &alone.part {
        for v in 0..alone.window_height as usize {
            let row = (v + alone.window_y as usize) * alone.width as usize + alone.window_x as usize;
            for u in 0..alone.window_width as usize {
                if alone.depth[row + u].is_finite() {
                    *alone_part_pixels.entry(parts[row + u]).or_default() += 1;
                }
            }
        }
    }
    Ok(ObjectStats { counts, truncation: truncation_ratio(alone), amodal: amodal_bbox(alone), alone_part_pixels })
}

fn render_alone(view: &SceneView, cam: &CameraState, obj: &SceneObject, parts: bool, exec: Exec) -> InstanceDepthBuffer {
    let geom = view.geometry(obj.instance_id).expect("view objects have geometry");
    render_geometry_alone(geom, &obj.obj_id, cam, TRUNCATION_EXPAND, parts, exec)
}

/// Directed occlusion relations `(occluder, occluded)` for camera `cam_id`.
///
/// `A -> B` holds when at least [`edge_threshold`] pixels of B's footprint
/// show A in the full render, strictly nearer than B alone. At such pixels
/// A is the full-render winner, so A's own alone depth equals the full depth.
pub fn occlusion_graph(view: &SceneView, cam_id: u32) -> Result<Vec<(String, String)>> {
    let cam = view.camera(cam_id)?.clone();
    let full = render_camera(view, &cam, Channels::DEPTH | Channels::INSTANCE, Exec::default());
    let mut edges = Vec::new();
    for obj in view.objects() {
        let alone = render_geometry_alone(
            view.geometry(obj.instance_id).expect("geometry"),
            &obj.obj_id,
            &cam,
            1,
            false,
            Exec::default(),
        );
        let counts = occlusion_counts(&full, &alone)?;
        edges.extend(occluders_of(view, &counts).into_iter().map(|a| (a, obj.obj_id.clone())));
    }
    Ok(edges)
}

fn occluders_of(view: &SceneView, counts: &OcclusionCounts) -> Vec<String> {
    let thr = edge_threshold(counts.footprint);
    counts
        .by_occluder
        .iter()
        .filter(|&(_, &n)| n as f64 >= thr)
        .filter_map(|(&id, _)| view.object_by_instance(id).map(|o| o.obj_id.clone()))
        .collect()
}

/// Annotations for every object, in spawn order.
pub fn annotate_all(view: &SceneView, cam_id: u32) -> Result<Vec<ObjectAnnotation>> {
    annotate_all_with(view, cam_id, Exec::default())
}

pub fn annotate_all_with(view: &SceneView, cam_id: u32, exec: Exec) -> Result<Vec<ObjectAnnotation>> {
    let cam = view.camera(cam_id)?.clone();
    let full = render_camera(view, &cam, Channels::GROUND_TRUTH, exec);
    annotate_frame(view, &full, exec)
}

/// Annotations against an already rendered frame, which must carry depth,
/// instance and part channels.
pub fn annotate_frame(view: &SceneView, full: &FrameSet, exec: Exec) -> Result<Vec<ObjectAnnotation>> {
    let inst = channel(&full.instance, "instance")?;
    let parts = channel(&full.part, "part")?;
    channel(&full.depth, "depth")?;
    let w = full.width as usize;

    let mut visible: HashMap<u32, (PixelBox, u64, HashMap<u16, u64>)> = HashMap::new();
    for (i, (&id, &p)) in inst.iter().zip(parts).enumerate() {
        if id == 0 {
            continue;
        }
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        let e = visible.entry(id).or_insert_with(|| (PixelBox::point(x, y), 0, HashMap::new()));
        e.0.grow(x, y);
        e.1 += 1;
        *e.2.entry(p).or_default() += 1;
    }

    let mut out = Vec::with_capacity(view.objects().len());
    for obj in view.objects() {
        let alone = render_alone(view, &full.camera, obj, true, exec);
        let stats = object_stats(full, &alone)?;
        drop(alone);
        let asset = view.catalog().get(&obj.asset_path)?;
        let pose: Pose = obj.pose();
        let corners = asset.mesh.aabb().corners().map(|c| pose.transform_point(c));
        let vis = visible.get(&obj.instance_id);
        let part_visibility = (1..=asset.mesh.part_count() as u16)
            .map(|p| {
                let a = stats.alone_part_pixels.get(&p).copied().unwrap_or(0);
                let v = vis.and_then(|e| e.2.get(&p)).copied().unwrap_or(0);
                (p, if a == 0 { 0.0 } else { (v as f64 / a as f64).min(1.0) })
            })
            .collect();
        out.push(ObjectAnnotation {
            obj_id: obj.obj_id.clone(),
            instance_id: obj.instance_id,
            category: asset.category.clone(),
            caption: asset.caption.clone(),
            asset_path: obj.asset_path.clone(),
            location: obj.location,
            rotation: obj.rotation,
            scale: obj.scale,
            bbox_3d: corners,
            bbox_2d_visible: vis.map(|e| e.0),
            bbox_2d_amodal: stats.amodal,
            occlusion_ratio: stats.counts.ratio(),
            occlusion_partial: stats.truncation.0 > 0.0 && !stats.truncation.1,
            truncation_ratio: stats.truncation.0,
            fully_truncated: stats.truncation.1,
            occluded_by: occluders_of(view, &stats.counts),
            part_visibility,
            visible_pixels: vis.map_or(0, |e| e.1),
            footprint_pixels: stats.counts.footprint,
        });
    }
    Ok(out)
}
