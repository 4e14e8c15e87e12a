//! Deterministic CPU raycaster producing aligned ground-truth buffers.
//!
//! One primary ray per pixel through the pixel center. Depth is planar (along
//! the camera forward axis). Misses are encoded as depth `+inf`, pointmap
//! NaN, normal zero, instance 0 and part 0.

use bitflags::bitflags;

use crate::accel::ObjectGeometry;
use crate::error::{Result, SimError};
use crate::exec::Exec;
use crate::geometry::{Aabb, Hit, Ray, Vec3};
use crate::rng::{fnv1a64, splitmix64};
use crate::world::{CameraState, SceneParams, SceneView};

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
    pub struct Channels: u8 {
        const LIT = 1;
        const DEPTH = 1 << 1;
        const INSTANCE = 1 << 2;
        const PART = 1 << 3;
        const NORMAL = 1 << 4;
        const POINTMAP = 1 << 5;
    }
}

impl Channels {
    pub const GROUND_TRUTH: Channels = Channels::DEPTH.union(Channels::INSTANCE).union(Channels::PART);

    pub fn from_channel_name(name: &str) -> Option<Channels> {
        Some(match name {
            "lit" => Channels::LIT,
            "depth" => Channels::DEPTH,
            "instance" | "seg" | "object_mask" => Channels::INSTANCE,
            "part" => Channels::PART,
            "normal" => Channels::NORMAL,
            "pointmap" | "point_map" => Channels::POINTMAP,
            "all" => Channels::all(),
            _ => return None,
        })
    }
}

/// Background color of lit images.
pub const BACKGROUND: [u8; 3] = [0, 0, 0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub horizontal_fov: f64,
    pub vertical_fov: f64,
}

/// Camera basis and focal length derived from a [`CameraState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub origin: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    /// Focal length in pixels.
    pub focal: f64,
    pub width: u32,
    pub height: u32,
}

impl PinholeCamera {
    pub fn new(cam: &CameraState) -> PinholeCamera {
        let m = cam.rotation.to_matrix();
        PinholeCamera {
            origin: cam.location,
            forward: m.column(0),
            right: m.column(1),
            up: m.column(2),
            focal: (cam.width as f64 / 2.0) / (cam.fov.to_radians() / 2.0).tan(),
            width: cam.width,
            height: cam.height,
        }
    }

    pub fn intrinsics(&self) -> Intrinsics {
        let (w, h) = (self.width as f64, self.height as f64);
        Intrinsics {
            fx: self.focal,
            fy: self.focal,
            cx: w / 2.0,
            cy: h / 2.0,
            horizontal_fov: 2.0 * (w / 2.0 / self.focal).atan().to_degrees(),
            vertical_fov: 2.0 * (h / 2.0 / self.focal).atan().to_degrees(),
        }
    }

    /// Ray through the center of pixel `(u, v)` of the original window.
    /// Coordinates outside `[0, width) x [0, height)` address the expanded
    /// viewport.
    pub fn ray(&self, u: i64, v: i64) -> Ray {
        let x = u as f64 + 0.5 - self.width as f64 / 2.0;
        let y = self.height as f64 / 2.0 - (v as f64 + 0.5);
        let dir = (self.forward * self.focal + self.right * x + self.up * y).normalize();
        Ray::new(self.origin, dir)
    }

    /// Continuous image coordinates of a world point, or `None` when it is
    /// not in front of the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let d = p - self.origin;
        let z = d.dot(self.forward);
        if z <= 1e-9 {
            return None;
        }
        let u = self.focal * d.dot(self.right) / z + self.width as f64 / 2.0;
        let v = self.height as f64 / 2.0 - self.focal * d.dot(self.up) / z;
        Some((u, v))
    }

    pub fn planar_depth(&self, p: Vec3) -> f64 {
        (p - self.origin).dot(self.forward)
    }

    /// Camera frame with x right, y down, z forward.
    pub fn to_opencv(&self, p: Vec3) -> Vec3 {
        let d = p - self.origin;
        Vec3::new(d.dot(self.right), -d.dot(self.up), d.dot(self.forward))
    }

    /// Pixel rectangle `[u0, u1) x [v0, v1)` (original-window coordinates)
    /// that may contain hits on geometry inside `aabb`, clipped to `clip`.
    /// Falls back to `clip` if any corner is behind the camera.
    fn pixel_bounds(&self, aabb: &Aabb, clip: PixelRect) -> PixelRect {
        if aabb.is_empty() {
            return PixelRect::EMPTY;
        }
        let (mut umin, mut umax, mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for c in aabb.corners() {
            let Some((u, v)) = self.project(c) else {
                return clip;
            };
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        let lo = |x: f64| (x.floor() - 1.0).max(-1e15) as i64;
        let hi = |x: f64| (x.ceil() + 1.0).min(1e15) as i64;
        PixelRect { u0: lo(umin), u1: hi(umax), v0: lo(vmin), v1: hi(vmax) }.intersect(&clip)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PixelRect {
    u0: i64,
    u1: i64,
    v0: i64,
    v1: i64,
}

impl PixelRect {
    const EMPTY: PixelRect = PixelRect { u0: 0, u1: 0, v0: 0, v1: 0 };

    fn intersect(&self, o: &PixelRect) -> PixelRect {
        let r = PixelRect { u0: self.u0.max(o.u0), u1: self.u1.min(o.u1), v0: self.v0.max(o.v0), v1: self.v1.min(o.v1) };
        if r.u0 >= r.u1 || r.v0 >= r.v1 {
            PixelRect::EMPTY
        } else {
            r
        }
    }

    fn contains(&self, u: i64, v: i64) -> bool {
        u >= self.u0 && u < self.u1 && v >= self.v0 && v < self.v1
    }
}

/// Aligned per-camera buffers, row-major, `width * height` entries each.
/// Channels that were not requested are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub cam_id: u32,
    pub width: u32,
    pub height: u32,
    pub camera: CameraState,
    pub intrinsics: Intrinsics,
    pub lit: Option<Vec<[u8; 3]>>,
    pub depth: Option<Vec<f32>>,
    pub instance: Option<Vec<u32>>,
    pub part: Option<Vec<u16>>,
    pub normal: Option<Vec<[f32; 3]>>,
    pub pointmap: Option<Vec<[f32; 3]>>,
}

impl FrameSet {
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pinhole(&self) -> PinholeCamera {
        PinholeCamera::new(&self.camera)
    }

    /// Equality on raw bits, so NaN misses compare equal.
    pub fn bitwise_eq(&self, other: &FrameSet) -> bool {
        fn bits3(v: &Option<Vec<[f32; 3]>>) -> Option<Vec<u32>> {
            v.as_ref().map(|v| v.iter().flat_map(|p| p.map(f32::to_bits)).collect())
        }
        let bits1 = |v: &Option<Vec<f32>>| v.as_ref().map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        self.cam_id == other.cam_id
            && self.camera == other.camera
            && self.lit == other.lit
            && bits1(&self.depth) == bits1(&other.depth)
            && self.instance == other.instance
            && self.part == other.part
            && bits3(&self.normal) == bits3(&other.normal)
            && bits3(&self.pointmap) == bits3(&other.pointmap)
    }

    /// Channels present in this frame.
    pub fn channels(&self) -> Channels {
        let mut c = Channels::empty();
        c.set(Channels::LIT, self.lit.is_some());
        c.set(Channels::DEPTH, self.depth.is_some());
        c.set(Channels::INSTANCE, self.instance.is_some());
        c.set(Channels::PART, self.part.is_some());
        c.set(Channels::NORMAL, self.normal.is_some());
        c.set(Channels::POINTMAP, self.pointmap.is_some());
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSpace {
    World,
    OpenCv,
}

impl std::str::FromStr for PointSpace {
    type Err = SimError;

    fn from_str(s: &str) -> Result<PointSpace> {
        match s {
            "world" => Ok(PointSpace::World),
            "opencv" => Ok(PointSpace::OpenCv),
            other => Err(SimError::invalid(format!("unknown point space {other:?}; expected world or opencv"))),
        }
    }
}

/// The frame's point map in world space or the OpenCV camera frame. Misses
/// stay NaN.
pub fn pointmap_in_space(frame: &FrameSet, space: PointSpace) -> Result<Vec<[f32; 3]>> {
    let pm = frame.pointmap.as_ref().ok_or_else(|| SimError::invalid("frame has no pointmap channel"))?;
    if space == PointSpace::World {
        return Ok(pm.clone());
    }
    let cam = frame.pinhole();
    Ok(pm
        .iter()
        .map(|p| {
            if p[0].is_nan() {
                *p
            } else {
                let c = cam.to_opencv(Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64));
                [c.x as f32, c.y as f32, c.z as f32]
            }
        })
        .collect())
}

/// Flat color of one asset part, each component in [0.2, 0.9].
pub fn albedo(asset_path: &str, part_id: u16) -> [f64; 3] {
    let h = splitmix64(fnv1a64(asset_path.as_bytes()) ^ (part_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let c = |shift: u32| 0.2 + 0.7 * ((h >> shift) & 0xffff) as f64 / 65535.0;
    [c(0), c(16), c(32)]
}

/// Lambertian shading with exponential fog, before quantization.
pub fn shade(albedo: [f64; 3], normal: Vec3, depth: f64, params: &SceneParams) -> [f64; 3] {
    let diffuse = normal.dot(-params.sun_direction).max(0.0);
    let light = params.ambient_intensity + params.sun_intensity * diffuse;
    let fog = if params.fog_visibility.is_finite() { (-depth / params.fog_visibility).exp() } else { 1.0 };
    let mut out = [0.0; 3];
    for i in 0..3 {
        let lit = albedo[i] * light * params.sun_color[i];
        out[i] = lit * fog + params.fog_color[i] * (1.0 - fog);
    }
    out
}

fn quantize(c: [f64; 3]) -> [u8; 3] {
    c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    depth: f32,
    instance: u32,
    part: u16,
    normal: [f32; 3],
    point: [f32; 3],
    lit: [u8; 3],
}

const MISS: Sample = Sample {
    depth: f32::INFINITY,
    instance: 0,
    part: 0,
    normal: [0.0; 3],
    point: [f32::NAN; 3],
    lit: BACKGROUND,
};

fn to_f32(v: Vec3) -> [f32; 3] {
    [v.x as f32, v.y as f32, v.z as f32]
}

fn sample_hit(view: &SceneView, cam: &PinholeCamera, ray: &Ray, hit: &Hit, lit: bool) -> Sample {
    let n = if hit.geometric_normal.dot(ray.dir) > 0.0 { -hit.geometric_normal } else { hit.geometric_normal };
    let depth = cam.planar_depth(hit.point);
    let color = if lit {
        let asset = view.object_by_instance(hit.instance_id).map(|o| o.asset_path.as_str()).unwrap_or("");
        quantize(shade(albedo(asset, hit.part_id), n, depth, view.params()))
    } else {
        BACKGROUND
    };
    Sample {
        depth: depth as f32,
        instance: hit.instance_id,
        part: hit.part_id,
        normal: to_f32(n),
        point: to_f32(hit.point),
        lit: color,
    }
}

/// Renders camera `cam_id` of `view`.
pub fn render(view: &SceneView, cam_id: u32, channels: Channels) -> Result<FrameSet> {
    render_with(view, cam_id, channels, Exec::default())
}

pub fn render_with(view: &SceneView, cam_id: u32, channels: Channels, exec: Exec) -> Result<FrameSet> {
    let camera = view.camera(cam_id)?.clone();
    Ok(render_camera(view, &camera, channels, exec))
}

/// Renders an explicit camera state against the view's geometry.
pub fn render_camera(view: &SceneView, camera: &CameraState, channels: Channels, exec: Exec) -> FrameSet {
    let cam = PinholeCamera::new(camera);
    let (w, h) = (camera.width as usize, camera.height as usize);
    let window = PixelRect { u0: 0, u1: w as i64, v0: 0, v1: h as i64 };
    let active = cam.pixel_bounds(&view.accel().bounds(), window);
    let want_lit = channels.contains(Channels::LIT);
    // Rows are visited in parallel; the result does not depend on order.
    let mut samples = vec![MISS; w * h];
    exec.for_each_chunk(&mut samples, w, |v, row| {
        let v = v as i64;
        if v < active.v0 || v >= active.v1 {
            return;
        }
        for u in active.u0..active.u1 {
            let ray = cam.ray(u, v);
            if let Some(hit) = view.accel().ray_cast(&ray) {
                row[u as usize] = sample_hit(view, &cam, &ray, &hit, want_lit);
            }
        }
    });
    let pick = |c: Channels| channels.contains(c);
    FrameSet {
        cam_id: camera.cam_id,
        width: camera.width,
        height: camera.height,
        camera: camera.clone(),
        intrinsics: cam.intrinsics(),
        lit: pick(Channels::LIT).then(|| samples.iter().map(|s| s.lit).collect()),
        depth: pick(Channels::DEPTH).then(|| samples.iter().map(|s| s.depth).collect()),
        instance: pick(Channels::INSTANCE).then(|| samples.iter().map(|s| s.instance).collect()),
        part: pick(Channels::PART).then(|| samples.iter().map(|s| s.part).collect()),
        normal: pick(Channels::NORMAL).then(|| samples.iter().map(|s| s.normal).collect()),
        pointmap: pick(Channels::POINTMAP).then(|| samples.iter().map(|s| s.point).collect()),
    }
}

/// Renders several cameras. Every id is checked before any work starts;
/// results are in `cam_ids` order and identical to individual renders.
pub fn render_cameras(view: &SceneView, cam_ids: &[u32], channels: Channels) -> Result<Vec<FrameSet>> {
    render_cameras_with(view, cam_ids, channels, Exec::default())
}

pub fn render_cameras_with(view: &SceneView, cam_ids: &[u32], channels: Channels, exec: Exec) -> Result<Vec<FrameSet>> {
    let cams: Vec<CameraState> = cam_ids.iter().map(|&id| view.camera(id).cloned()).collect::<Result<_>>()?;
    Ok(exec.map(cams.len(), |i| render_camera(view, &cams[i], channels, exec)))
}

/// Depth of one object rendered in isolation over a viewport enlarged by an
/// integer factor around the original principal point.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDepthBuffer {
    pub obj_id: String,
    pub instance_id: u32,
    pub expand: u32,
    /// Expanded viewport size.
    pub width: u32,
    pub height: u32,
    /// Top-left of the original window inside the expanded viewport.
    pub window_x: u32,
    pub window_y: u32,
    pub window_width: u32,
    pub window_height: u32,
    pub depth: Vec<f32>,
    /// Part ids alongside depth, when requested.
    pub part: Option<Vec<u16>>,
}

impl InstanceDepthBuffer {
    pub fn in_window(&self, x: u32, y: u32) -> bool {
        x >= self.window_x && x < self.window_x + self.window_width && y >= self.window_y && y < self.window_y + self.window_height
    }

    /// Expanded pixel `(x, y)` in original-window coordinates.
    pub fn to_window_coords(&self, x: u32, y: u32) -> (i64, i64) {
        (x as i64 - self.window_x as i64, y as i64 - self.window_y as i64)
    }

    /// Depth at original-window pixel `(u, v)`; `+inf` outside the viewport.
    pub fn depth_at(&self, u: i64, v: i64) -> f32 {
        let x = u + self.window_x as i64;
        let y = v + self.window_y as i64;
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return f32::INFINITY;
        }
        self.depth[y as usize * self.width as usize + x as usize]
    }

    /// The original window as an `E = 1` buffer.
    pub fn crop_window(&self) -> InstanceDepthBuffer {
        let (ww, wh) = (self.window_width as usize, self.window_height as usize);
        let mut depth = Vec::with_capacity(ww * wh);
        let mut part = self.part.as_ref().map(|_| Vec::with_capacity(ww * wh));
        for y in 0..wh {
            let start = (y + self.window_y as usize) * self.width as usize + self.window_x as usize;
            depth.extend_from_slice(&self.depth[start..start + ww]);
            if let (Some(dst), Some(src)) = (part.as_mut(), self.part.as_ref()) {
                dst.extend_from_slice(&src[start..start + ww]);
            }
        }
        InstanceDepthBuffer {
            obj_id: self.obj_id.clone(),
            instance_id: self.instance_id,
            expand: 1,
            width: self.window_width,
            height: self.window_height,
            window_x: 0,
            window_y: 0,
            window_width: self.window_width,
            window_height: self.window_height,
            depth,
            part,
        }
    }
}

pub fn render_instance_alone(view: &SceneView, cam_id: u32, obj_id: &str, expand: u32) -> Result<InstanceDepthBuffer> {
    let camera = view.camera(cam_id)?.clone();
    render_instance_alone_with(view, &camera, obj_id, expand, false, Exec::default())
}

pub fn render_instance_alone_with(
    view: &SceneView,
    camera: &CameraState,
    obj_id: &str,
    expand: u32,
    with_parts: bool,
    exec: Exec,
) -> Result<InstanceDepthBuffer> {
    if expand == 0 {
        return Err(SimError::invalid("expand factor must be at least 1"));
    }
    let obj = view.object(obj_id)?;
    let geom = view
        .geometry(obj.instance_id)
        .ok_or_else(|| SimError::ObjectNotFound(obj_id.to_string()))?;
    Ok(render_geometry_alone(geom, obj_id, camera, expand, with_parts, exec))
}

pub(crate) fn render_geometry_alone(
    geom: &ObjectGeometry,
    obj_id: &str,
    camera: &CameraState,
    expand: u32,
    with_parts: bool,
    exec: Exec,
) -> InstanceDepthBuffer {
    let cam = PinholeCamera::new(camera);
    let (w, h) = (camera.width, camera.height);
    let (ew, eh) = (w as usize * expand as usize, h as usize * expand as usize);
    let (ox, oy) = ((expand - 1) as usize * w as usize / 2, (expand - 1) as usize * h as usize / 2);
    let full = PixelRect { u0: -(ox as i64), u1: (ew - ox) as i64, v0: -(oy as i64), v1: (eh - oy) as i64 };
    let active = cam.pixel_bounds(&geom.aabb(), full);
    let mut cells = vec![(f32::INFINITY, 0u16); ew * eh];
    exec.for_each_chunk(&mut cells, ew, |y, row| {
        let v = y as i64 - oy as i64;
        if v < active.v0 || v >= active.v1 {
            return;
        }
        for u in active.u0..active.u1 {
            let ray = cam.ray(u, v);
            if let Some(hit) = geom.ray_cast(&ray) {
                row[(u + ox as i64) as usize] = (cam.planar_depth(hit.point) as f32, hit.part_id);
            }
        }
    });
    debug_assert!(active == PixelRect::EMPTY || full.contains(active.u0, active.v0));
    InstanceDepthBuffer {
        obj_id: obj_id.to_string(),
        instance_id: geom.instance_id(),
        expand,
        width: ew as u32,
        height: eh as u32,
        window_x: ox as u32,
        window_y: oy as u32,
        window_width: w,
        window_height: h,
        depth: cells.iter().map(|c| c.0).collect(),
        part: with_parts.then(|| cells.iter().map(|c| c.1).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;
    use crate::geometry::Rotator;
    use crate::world::World;
    use std::sync::Arc;

    const CUBE: &str = "/Engine/BasicShapes/Cube.Cube";

    fn world() -> World {
        World::new(Arc::new(Catalog::builtin()))
    }

    #[test]
    fn empty_scene_is_all_miss() {
        let w = world();
        let f = render(&w.view(), 0, Channels::all()).unwrap();
        assert!(f.instance.unwrap().iter().all(|&i| i == 0));
        assert!(f.depth.unwrap().iter().all(|d| d.is_infinite()));
        assert!(f.pointmap.unwrap().iter().all(|p| p.iter().all(|c| c.is_nan())));
        assert!(f.lit.unwrap().iter().all(|&c| c == BACKGROUND));
    }

    #[test]
    fn missing_camera_is_an_error() {
        let w = world();
        assert_eq!(render(&w.view(), 5, Channels::DEPTH).unwrap_err().code(), "camera_not_found");
        assert_eq!(render_cameras(&w.view(), &[0, 5], Channels::DEPTH).unwrap_err().code(), "camera_not_found");
    }

    #[test]
    fn face_on_cube() {
        let mut w = world();
        // Cube centered on the optical axis 500 cm ahead.
        let out = w.add_object("cube", CUBE, Vec3::new(500.0, 0.0, -50.0), Rotator::ZERO, 1.0).unwrap();
        let f = render(&w.view(), 0, Channels::all()).unwrap();
        let c = 240 * 640 + 320;
        assert!((f.depth.as_ref().unwrap()[c] - 450.0).abs() < 1e-3);
        assert_eq!(f.instance.as_ref().unwrap()[c], out.instance_id);
        let n = f.normal.as_ref().unwrap()[c];
        assert!((n[0] + 1.0).abs() < 1e-6 && n[1].abs() < 1e-6 && n[2].abs() < 1e-6);
        let oc = pointmap_in_space(&f, PointSpace::OpenCv).unwrap()[c];
        assert!(oc[0].abs() < 1.0 && oc[1].abs() < 1.0 && (oc[2] - 450.0).abs() < 1e-3);
        let bits = |v: &[[f32; 3]]| v.iter().flat_map(|p| p.map(f32::to_bits)).collect::<Vec<_>>();
        assert_eq!(bits(&pointmap_in_space(&f, PointSpace::World).unwrap()), bits(f.pointmap.as_ref().unwrap()));
        assert!("camera".parse::<PointSpace>().is_err());
    }

    #[test]
    fn only_requested_channels_are_filled() {
        let w = world();
        let f = render(&w.view(), 0, Channels::DEPTH | Channels::PART).unwrap();
        assert_eq!(f.channels(), Channels::DEPTH | Channels::PART);
        assert_eq!(f.depth.unwrap().len(), 640 * 480);
    }

    #[test]
    fn expanded_viewport_crop_matches_unexpanded() {
        let mut w = world();
        w.add_object("a", CUBE, Vec3::new(400.0, 330.0, -50.0), Rotator::new(0.0, 20.0, 0.0), 1.0).unwrap();
        w.set_camera(0, None, None, None, Some((64, 48))).unwrap();
        let v = w.view();
        let cam = v.camera(0).unwrap().clone();
        let e1 = render_instance_alone_with(&v, &cam, "a", 1, true, Exec::Sequential).unwrap();
        let e3 = render_instance_alone_with(&v, &cam, "a", 3, true, Exec::Parallel).unwrap();
        assert_eq!(e3.crop_window(), e1);
        let outside = (0..e3.height)
            .flat_map(|y| (0..e3.width).map(move |x| (x, y)))
            .filter(|&(x, y)| !e3.in_window(x, y) && e3.depth[(y * e3.width + x) as usize].is_finite())
            .count();
        assert!(outside > 0, "object straddles the right edge");
    }

    #[test]
    fn fog_darkens_with_distance() {
        let mut w = world();
        let mut p = w.scene_params().clone();
        p.fog_visibility = 800.0;
        w.set_scene_params(p).unwrap();
        w.set_camera(0, None, None, None, Some((32, 24))).unwrap();
        let mut last = f64::INFINITY;
        for d in [200.0, 400.0, 800.0, 1600.0] {
            w.delete_object("c").ok();
            w.add_object("c", CUBE, Vec3::new(d, 0.0, -50.0), Rotator::ZERO, 1.0).unwrap();
            let f = render(&w.view(), 0, Channels::LIT).unwrap();
            let c = f.lit.unwrap()[12 * 32 + 16];
            let lum = c.iter().map(|&x| x as f64).sum::<f64>();
            assert!(lum < last);
            last = lum;
        }
    }

    #[test]
    fn albedo_is_stable_and_bounded() {
        let a = albedo("/Game/X", 1);
        assert_eq!(a, albedo("/Game/X", 1));
        assert_ne!(a, albedo("/Game/X", 2));
        assert!(a.iter().all(|c| (0.2..=0.9).contains(c)));
    }
}
