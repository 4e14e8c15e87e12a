//! The mutable scene: objects, cameras and scene-level parameters.
//!
//! Mutations go through [`World`]. Readers take a [`SceneView`], an
//! immutable copy that later mutations never touch.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::accel::{ObjectGeometry, SceneAccel};
use crate::catalog::{AssetRecord, Catalog};
use crate::error::{Result, SimError};
use crate::geometry::{Aabb, Pose, Rotator, Vec3};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

pub const MIN_FOV: f64 = 1.0;
pub const MAX_FOV: f64 = 179.0;
pub const MAX_SIDE: u32 = 4096;
pub const MAX_PIXELS: u64 = 3840 * 2160;

/// Rings tried by the adjust-if-possible nudge search.
pub const NUDGE_RINGS: u32 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub obj_id: String,
    pub asset_path: String,
    pub location: Vec3,
    pub rotation: Rotator,
    pub scale: f64,
    pub lock_rotation: bool,
    pub spawn_order: u64,
    /// Nonzero id written to instance buffers.
    pub instance_id: u32,
}

impl SceneObject {
    pub fn pose(&self) -> Pose {
        Pose::new(self.location, self.rotation, self.scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraState {
    pub cam_id: u32,
    pub location: Vec3,
    pub rotation: Rotator,
    /// Horizontal field of view in degrees.
    pub fov: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraState {
    pub fn default_for(cam_id: u32) -> CameraState {
        CameraState { cam_id, location: Vec3::ZERO, rotation: Rotator::ZERO, fov: 90.0, width: 640, height: 480 }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.location, self.rotation, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.location.is_finite() || !self.rotation.is_finite() {
            return Err(SimError::invalid("camera pose must be finite"));
        }
        if !(MIN_FOV..=MAX_FOV).contains(&self.fov) {
            return Err(SimError::invalid(format!("fov must be in [{MIN_FOV}, {MAX_FOV}], got {}", self.fov)));
        }
        validate_resolution(self.width, self.height)
    }
}

pub fn validate_resolution(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 || width > MAX_SIDE || height > MAX_SIDE || width as u64 * height as u64 > MAX_PIXELS {
        return Err(SimError::invalid(format!(
            "resolution {width}x{height} outside 1..={MAX_SIDE} per side or above {MAX_PIXELS} pixels"
        )));
    }
    Ok(())
}

/// Lighting, fog and recorded-only weather settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneParams {
    pub sun_direction: Vec3,
    pub sun_intensity: f64,
    pub sun_color: [f64; 3],
    pub ambient_intensity: f64,
    /// Distance in cm at which fog reaches 1/e transmission. `null` in JSON
    /// means infinite, i.e. no fog.
    #[serde(with = "infinite_as_null")]
    pub fog_visibility: f64,
    pub fog_color: [f64; 3],
    pub rain_params: BTreeMap<String, String>,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            sun_direction: Vec3::new(1.0, -1.0, -2.0).normalize(),
            sun_intensity: 1.0,
            sun_color: [1.0; 3],
            ambient_intensity: 0.2,
            fog_visibility: f64::INFINITY,
            fog_color: [0.0; 3],
            rain_params: BTreeMap::new(),
        }
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Partial update of [`SceneParams`]; absent fields keep their value.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneParamsPatch {
    pub sun_direction: Option<Vec3>,
    pub sun_intensity: Option<f64>,
    pub sun_color: Option<[f64; 3]>,
    pub ambient_intensity: Option<f64>,
    #[serde(default, deserialize_with = "patch_fog")]
    pub fog_visibility: Option<f64>,
    pub fog_color: Option<[f64; 3]>,
    pub rain_params: Option<BTreeMap<String, String>>,
}

/// Present-but-null fog means "turn fog off".
fn patch_fog<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    Ok(Some(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY)))
}

impl SceneParams {
    /// Checks ranges and normalizes the sun direction.
    pub fn validated(mut self) -> Result<SceneParams> {
        self.sun_direction = self
            .sun_direction
            .try_normalize()
            .filter(|d| d.is_finite())
            .ok_or_else(|| SimError::invalid("sun_direction must be a nonzero finite vector"))?;
        if !(self.sun_intensity >= 0.0 && self.sun_intensity.is_finite()) {
            return Err(SimError::invalid("sun_intensity must be finite and nonnegative"));
        }
        if !(self.ambient_intensity >= 0.0 && self.ambient_intensity.is_finite()) {
            return Err(SimError::invalid("ambient_intensity must be finite and nonnegative"));
        }
        if self.fog_visibility.is_nan() || self.fog_visibility <= 0.0 {
            return Err(SimError::invalid("fog_visibility must be positive"));
        }
        for (name, c) in [("sun_color", self.sun_color), ("fog_color", self.fog_color)] {
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(SimError::invalid(format!("{name} components must be in [0, 1]")));
            }
        }
        Ok(self)
    }

    pub fn apply(&self, patch: &SceneParamsPatch) -> Result<SceneParams> {
        let mut p = self.clone();
        if let Some(v) = patch.sun_direction {
            p.sun_direction = v;
        }
        if let Some(v) = patch.sun_intensity {
            p.sun_intensity = v;
        }
        if let Some(v) = patch.sun_color {
            p.sun_color = v;
        }
        if let Some(v) = patch.ambient_intensity {
            p.ambient_intensity = v;
        }
        if let Some(v) = patch.fog_visibility {
            p.fog_visibility = v;
        }
        if let Some(v) = patch.fog_color {
            p.fog_color = v;
        }
        if let Some(v) = &patch.rain_params {
            p.rain_params = v.clone();
        }
        p.validated()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionHandling {
    /// Spawn regardless of overlap.
    #[default]
    Default,
    SkipIfColliding,
    AdjustIfPossible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpawnRequest {
    pub obj_id: String,
    pub asset_path: String,
    pub location: Vec3,
    pub rotation: Rotator,
    pub scale: f64,
    pub collision_handling: CollisionHandling,
    pub lock_rotation: bool,
}

impl SpawnRequest {
    pub fn new(obj_id: impl Into<String>, asset_path: impl Into<String>) -> SpawnRequest {
        SpawnRequest {
            obj_id: obj_id.into(),
            asset_path: asset_path.into(),
            location: Vec3::ZERO,
            rotation: Rotator::ZERO,
            scale: 1.0,
            collision_handling: CollisionHandling::Default,
            lock_rotation: false,
        }
    }

    pub fn at(mut self, location: Vec3) -> Self {
        self.location = location;
        self
    }

    pub fn rotated(mut self, rotation: Rotator) -> Self {
        self.rotation = rotation;
        self
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn mode(mut self, mode: CollisionHandling) -> Self {
        self.collision_handling = mode;
        self
    }

    pub fn locked(mut self, lock: bool) -> Self {
        self.lock_rotation = lock;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpawnOutcome {
    pub instance_id: u32,
    pub location: Vec3,
    pub nudged: bool,
}

/// Partial pose update; absent fields are left unchanged.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PoseUpdate {
    pub location: Option<Vec3>,
    pub rotation: Option<Rotator>,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectRecord {
    pub obj_id: String,
    pub asset_path: String,
    pub location: Vec3,
    pub rotation: Rotator,
    pub scale: f64,
    pub lock_rotation: bool,
}

/// Serialized world state, sufficient to rebuild it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSnapshot {
    pub format_version: u32,
    pub objects: Vec<ObjectRecord>,
    pub cameras: Vec<CameraState>,
    pub scene_params: SceneParams,
    #[serde(default)]
    pub catalog: Option<String>,
}

impl SceneSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<SceneSnapshot> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SimError::invalid(format!("snapshot: {e}")))?;
        if let Some(found) = v.get("format_version").and_then(|f| f.as_u64()) {
            if found != SNAPSHOT_FORMAT_VERSION as u64 {
                return Err(SimError::VersionMismatch { found: found as u32, expected: SNAPSHOT_FORMAT_VERSION });
            }
        }
        serde_json::from_value(v).map_err(|e| SimError::invalid(format!("snapshot: {e}")))
    }
}

#[derive(Debug, Clone)]
struct Entry {
    object: SceneObject,
    geometry: Arc<ObjectGeometry>,
}

#[derive(Debug, Clone)]
struct State {
    objects: IndexMap<String, Entry>,
    ids: HashMap<u32, String>,
    cameras: BTreeMap<u32, CameraState>,
    params: SceneParams,
    next_order: u64,
}

impl Default for State {
    fn default() -> Self {
        State {
            objects: IndexMap::new(),
            ids: HashMap::new(),
            cameras: BTreeMap::from([(0, CameraState::default_for(0))]),
            params: SceneParams::default(),
            next_order: 0,
        }
    }
}

/// Immutable copy of the world used by renders and annotation.
#[derive(Debug)]
pub struct SceneView {
    objects: Vec<SceneObject>,
    by_instance: HashMap<u32, usize>,
    cameras: BTreeMap<u32, CameraState>,
    params: SceneParams,
    accel: Arc<SceneAccel>,
    catalog: Arc<Catalog>,
}

impl SceneView {
    /// Objects in spawn order.
    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn object(&self, obj_id: &str) -> Result<&SceneObject> {
        self.objects
            .iter()
            .find(|o| o.obj_id == obj_id)
            .ok_or_else(|| SimError::ObjectNotFound(obj_id.to_string()))
    }

    pub fn object_by_instance(&self, instance_id: u32) -> Option<&SceneObject> {
        self.by_instance.get(&instance_id).map(|&i| &self.objects[i])
    }

    pub fn camera(&self, cam_id: u32) -> Result<&CameraState> {
        self.cameras.get(&cam_id).ok_or(SimError::CameraNotFound(cam_id))
    }

    pub fn cameras(&self) -> impl Iterator<Item = &CameraState> {
        self.cameras.values()
    }

    pub fn params(&self) -> &SceneParams {
        &self.params
    }

    pub fn accel(&self) -> &SceneAccel {
        &self.accel
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    /// Posed geometry of an object. Accel objects share the spawn order of
    /// `objects`.
    pub fn geometry(&self, instance_id: u32) -> Option<&Arc<ObjectGeometry>> {
        self.by_instance.get(&instance_id).map(|&i| &self.accel.objects()[i])
    }

    /// Copy of this view with one camera replaced or added. Geometry is
    /// shared.
    pub fn with_camera(&self, camera: CameraState) -> SceneView {
        let mut cameras = self.cameras.clone();
        cameras.insert(camera.cam_id, camera);
        SceneView {
            objects: self.objects.clone(),
            by_instance: self.by_instance.clone(),
            cameras,
            params: self.params.clone(),
            accel: Arc::clone(&self.accel),
            catalog: Arc::clone(&self.catalog),
        }
    }
}

pub struct World {
    catalog: Arc<Catalog>,
    state: State,
    accel_cache: Mutex<Option<Arc<SceneAccel>>>,
}

impl std::fmt::Debug for World {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("World").field("objects", &self.state.objects.len()).finish_non_exhaustive()
    }
}

/// 32-bit FNV-1a of the id, never zero.
fn base_instance_id(obj_id: &str) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for b in obj_id.bytes() {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    h.max(1)
}

fn check_pose(location: Vec3, rotation: Rotator, scale: f64) -> Result<()> {
    if !location.is_finite() {
        return Err(SimError::invalid("location must be finite"));
    }
    if !rotation.is_finite() {
        return Err(SimError::invalid("rotation must be finite"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(SimError::invalid(format!("scale must be positive, got {scale}")));
    }
    Ok(())
}

impl World {
    pub fn new(catalog: Arc<Catalog>) -> World {
        World { catalog, state: State::default(), accel_cache: Mutex::new(None) }
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    fn touch_geometry(&mut self) {
        *self.accel_cache.get_mut().unwrap_or_else(|e| e.into_inner()) = None;
    }

    fn accel(&self) -> Arc<SceneAccel> {
        let mut cache = self.accel_cache.lock().unwrap_or_else(|e| e.into_inner());
        cache
            .get_or_insert_with(|| {
                Arc::new(SceneAccel::new(self.state.objects.values().map(|e| Arc::clone(&e.geometry)).collect()))
            })
            .clone()
    }

    /// Immutable view of the current state.
    pub fn view(&self) -> Arc<SceneView> {
        let objects: Vec<SceneObject> = self.state.objects.values().map(|e| e.object.clone()).collect();
        Arc::new(SceneView {
            by_instance: objects.iter().enumerate().map(|(i, o)| (o.instance_id, i)).collect(),
            objects,
            cameras: self.state.cameras.clone(),
            params: self.state.params.clone(),
            accel: self.accel(),
            catalog: Arc::clone(&self.catalog),
        })
    }

    fn allocate_instance_id(&self, obj_id: &str) -> u32 {
        let mut id = base_instance_id(obj_id);
        while self.state.ids.contains_key(&id) {
            id = id.wrapping_add(1).max(1);
        }
        id
    }

    fn collides(&self, aabb: &Aabb) -> bool {
        self.state.objects.values().any(|e| e.geometry.aabb().overlaps(aabb))
    }

    pub fn spawn_object(&mut self, req: &SpawnRequest) -> Result<SpawnOutcome> {
        if req.obj_id.is_empty() {
            return Err(SimError::invalid("obj_id must not be empty"));
        }
        check_pose(req.location, req.rotation, req.scale)?;
        if self.state.objects.contains_key(&req.obj_id) {
            return Err(SimError::DuplicateObject(req.obj_id.clone()));
        }
        let asset = self.catalog.get(&req.asset_path).map_err(|_| SimError::SpawnFailed {
            obj_id: req.obj_id.clone(),
            reason: format!("asset {:?} not in catalog", req.asset_path),
        })?;
        let asset = Arc::clone(asset);
        let rotation = req.rotation.normalized();
        let instance_id = self.allocate_instance_id(&req.obj_id);
        let geometry = ObjectGeometry::new(instance_id, &asset.mesh, &Pose::new(req.location, rotation, req.scale));
        let aabb = geometry.aabb();

        let location = match req.collision_handling {
            CollisionHandling::Default => req.location,
            CollisionHandling::SkipIfColliding => {
                if self.collides(&aabb) {
                    return Err(SimError::SpawnFailed {
                        obj_id: req.obj_id.clone(),
                        reason: "overlaps an existing object".into(),
                    });
                }
                req.location
            }
            CollisionHandling::AdjustIfPossible => {
                let delta = nudge_offsets(&aabb)
                    .find(|d| !self.collides(&aabb.translated(*d)))
                    .ok_or_else(|| SimError::SpawnFailed {
                        obj_id: req.obj_id.clone(),
                        reason: "no collision-free spot within the nudge radius".into(),
                    })?;
                req.location + delta
            }
        };
        let geometry = if location == req.location {
            geometry
        } else {
            ObjectGeometry::new(instance_id, &asset.mesh, &Pose::new(location, rotation, req.scale))
        };
        self.insert(
            SceneObject {
                obj_id: req.obj_id.clone(),
                asset_path: req.asset_path.clone(),
                location,
                rotation,
                scale: req.scale,
                lock_rotation: req.lock_rotation,
                spawn_order: self.state.next_order,
                instance_id,
            },
            geometry,
        );
        Ok(SpawnOutcome { instance_id, location, nudged: location != req.location })
    }

    /// Alias of `spawn_object` with default collision handling.
    pub fn add_object(&mut self, obj_id: &str, asset_path: &str, location: Vec3, rotation: Rotator, scale: f64) -> Result<SpawnOutcome> {
        self.spawn_object(&SpawnRequest::new(obj_id, asset_path).at(location).rotated(rotation).scaled(scale))
    }

    fn insert(&mut self, object: SceneObject, geometry: ObjectGeometry) {
        self.state.next_order += 1;
        self.state.ids.insert(object.instance_id, object.obj_id.clone());
        self.state.objects.insert(object.obj_id.clone(), Entry { object, geometry: Arc::new(geometry) });
        self.touch_geometry();
    }

    fn entry(&self, obj_id: &str) -> Result<&Entry> {
        self.state.objects.get(obj_id).ok_or_else(|| SimError::ObjectNotFound(obj_id.to_string()))
    }

    pub fn update_object(&mut self, obj_id: &str, update: PoseUpdate) -> Result<()> {
        let entry = self.entry(obj_id)?;
        let mut obj = entry.object.clone();
        if let Some(r) = update.rotation {
            if obj.lock_rotation {
                return Err(SimError::RotationLocked(obj_id.to_string()));
            }
            obj.rotation = r;
        }
        if let Some(l) = update.location {
            obj.location = l;
        }
        if let Some(s) = update.scale {
            obj.scale = s;
        }
        check_pose(obj.location, obj.rotation, obj.scale)?;
        obj.rotation = obj.rotation.normalized();
        let asset = Arc::clone(self.catalog.get(&obj.asset_path)?);
        let geometry = ObjectGeometry::new(obj.instance_id, &asset.mesh, &obj.pose());
        let e = self.state.objects.get_mut(obj_id).expect("checked above");
        *e = Entry { object: obj, geometry: Arc::new(geometry) };
        self.touch_geometry();
        Ok(())
    }

    pub fn set_object_location(&mut self, obj_id: &str, location: Vec3) -> Result<()> {
        self.update_object(obj_id, PoseUpdate { location: Some(location), ..Default::default() })
    }

    pub fn set_object_rotation(&mut self, obj_id: &str, rotation: Rotator) -> Result<()> {
        self.update_object(obj_id, PoseUpdate { rotation: Some(rotation), ..Default::default() })
    }

    pub fn set_object_scale(&mut self, obj_id: &str, scale: f64) -> Result<()> {
        self.update_object(obj_id, PoseUpdate { scale: Some(scale), ..Default::default() })
    }

    pub fn delete_object(&mut self, obj_id: &str) -> Result<()> {
        let entry = self.state.objects.shift_remove(obj_id).ok_or_else(|| SimError::ObjectNotFound(obj_id.to_string()))?;
        self.state.ids.remove(&entry.object.instance_id);
        self.touch_geometry();
        Ok(())
    }

    /// Object ids in spawn order.
    pub fn list_objects(&self) -> Vec<String> {
        self.state.objects.keys().cloned().collect()
    }

    pub fn object_count(&self) -> usize {
        self.state.objects.len()
    }

    pub fn get_object(&self, obj_id: &str) -> Result<&SceneObject> {
        self.entry(obj_id).map(|e| &e.object)
    }

    pub fn get_object_location(&self, obj_id: &str) -> Result<Vec3> {
        self.get_object(obj_id).map(|o| o.location)
    }

    pub fn get_object_rotation(&self, obj_id: &str) -> Result<Rotator> {
        self.get_object(obj_id).map(|o| o.rotation)
    }

    /// Tight world-space AABB of the posed mesh.
    pub fn world_aabb(&self, obj_id: &str) -> Result<Aabb> {
        self.entry(obj_id).map(|e| e.geometry.aabb())
    }

    pub fn asset_of(&self, obj_id: &str) -> Result<&Arc<AssetRecord>> {
        let obj = self.get_object(obj_id)?;
        self.catalog.get(&obj.asset_path)
    }

    pub fn get_mesh_extent(&self, asset_path: &str) -> Result<Vec3> {
        self.catalog.get_mesh_extent(asset_path)
    }

    /// Replaces a camera's full state, creating it if needed.
    pub fn put_camera(&mut self, camera: CameraState) -> Result<()> {
        camera.validate()?;
        let mut camera = camera;
        camera.rotation = camera.rotation.normalized();
        self.state.cameras.insert(camera.cam_id, camera);
        Ok(())
    }

    /// Updates selected fields of a camera, creating it from defaults if it
    /// does not exist yet.
    pub fn set_camera(
        &mut self,
        cam_id: u32,
        location: Option<Vec3>,
        rotation: Option<Rotator>,
        fov: Option<f64>,
        resolution: Option<(u32, u32)>,
    ) -> Result<()> {
        let mut cam = self.state.cameras.get(&cam_id).cloned().unwrap_or_else(|| CameraState::default_for(cam_id));
        if let Some(l) = location {
            cam.location = l;
        }
        if let Some(r) = rotation {
            cam.rotation = r;
        }
        if let Some(f) = fov {
            cam.fov = f;
        }
        if let Some((w, h)) = resolution {
            cam.width = w;
            cam.height = h;
        }
        self.put_camera(cam)
    }

    pub fn set_camera_location(&mut self, cam_id: u32, location: Vec3) -> Result<()> {
        self.set_camera(cam_id, Some(location), None, None, None)
    }

    pub fn set_camera_rotation(&mut self, cam_id: u32, rotation: Rotator) -> Result<()> {
        self.set_camera(cam_id, None, Some(rotation), None, None)
    }

    pub fn get_camera(&self, cam_id: u32) -> Result<&CameraState> {
        self.state.cameras.get(&cam_id).ok_or(SimError::CameraNotFound(cam_id))
    }

    pub fn camera_ids(&self) -> Vec<u32> {
        self.state.cameras.keys().copied().collect()
    }

    pub fn scene_params(&self) -> &SceneParams {
        &self.state.params
    }

    pub fn set_scene_params(&mut self, params: SceneParams) -> Result<()> {
        self.state.params = params.validated()?;
        Ok(())
    }

    pub fn update_scene_params(&mut self, patch: &SceneParamsPatch) -> Result<()> {
        self.state.params = self.state.params.apply(patch)?;
        Ok(())
    }

    /// Resets objects, cameras and parameters to a fresh world.
    pub fn clear(&mut self) {
        self.state = State::default();
        self.touch_geometry();
    }

    pub fn snapshot(&self) -> SceneSnapshot {
        SceneSnapshot {
            format_version: SNAPSHOT_FORMAT_VERSION,
            objects: self
                .state
                .objects
                .values()
                .map(|e| ObjectRecord {
                    obj_id: e.object.obj_id.clone(),
                    asset_path: e.object.asset_path.clone(),
                    location: e.object.location,
                    rotation: e.object.rotation,
                    scale: e.object.scale,
                    lock_rotation: e.object.lock_rotation,
                })
                .collect(),
            cameras: self.state.cameras.values().cloned().collect(),
            scene_params: self.state.params.clone(),
            catalog: self.catalog.manifest().map(str::to_string),
        }
    }

    /// Replaces the world with `snapshot`. Requires an empty world unless
    /// `clear` is set. On error the world is unchanged.
    pub fn load_snapshot(&mut self, snapshot: &SceneSnapshot, clear: bool) -> Result<()> {
        if snapshot.format_version != SNAPSHOT_FORMAT_VERSION {
            return Err(SimError::VersionMismatch { found: snapshot.format_version, expected: SNAPSHOT_FORMAT_VERSION });
        }
        if !clear && !self.state.objects.is_empty() {
            return Err(SimError::WorldNotEmpty);
        }
        let mut fresh = World::new(Arc::clone(&self.catalog));
        fresh.state.cameras.clear();
        for rec in &snapshot.objects {
            if !self.catalog.contains(&rec.asset_path) {
                return Err(SimError::AssetNotFound(rec.asset_path.clone()));
            }
            let req = SpawnRequest::new(&rec.obj_id, &rec.asset_path)
                .at(rec.location)
                .rotated(rec.rotation)
                .scaled(rec.scale)
                .locked(rec.lock_rotation);
            fresh.spawn_object(&req)?;
        }
        for cam in &snapshot.cameras {
            if fresh.state.cameras.contains_key(&cam.cam_id) {
                return Err(SimError::invalid(format!("duplicate cam_id {} in snapshot", cam.cam_id)));
            }
            fresh.put_camera(cam.clone())?;
        }
        fresh.state.cameras.entry(0).or_insert_with(|| CameraState::default_for(0));
        fresh.set_scene_params(snapshot.scene_params.clone())?;
        self.state = fresh.state;
        self.touch_geometry();
        Ok(())
    }
}

/// Candidate XY offsets for the nudge search: zero first, then rings of
/// radius `k * s` with `8k` angles starting at +X.
pub fn nudge_offsets(aabb: &Aabb) -> impl Iterator<Item = Vec3> {
    let e = aabb.extent();
    let s = 0.25 * e.x.max(e.y);
    let s = if s > 0.0 { s } else { 1.0 };
    std::iter::once(Vec3::ZERO).chain((1..=NUDGE_RINGS).flat_map(move |k| {
        let n = 8 * k;
        (0..n).map(move |j| {
            let a = std::f64::consts::TAU * j as f64 / n as f64;
            Vec3::new(k as f64 * s * a.cos(), k as f64 * s * a.sin(), 0.0)
        })
    }))
}

/// Upper bound on the XY distance the nudge search may move an object.
pub fn nudge_radius(aabb: &Aabb) -> f64 {
    let e = aabb.extent();
    let s = 0.25 * e.x.max(e.y);
    NUDGE_RINGS as f64 * if s > 0.0 { s } else { 1.0 }
}
