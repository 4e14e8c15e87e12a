//! Whole-scene generation from rules under a seed and complexity mode.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rules::{ProceduralRule, RuleGeometry};
use super::sampling::{sample_in_area, sample_on_trajectory, uniform_in_rect, Placement, ATTEMPTS_PER_SAMPLE};
use crate::error::{Result, SimError};
use crate::exec::Exec;
use crate::geometry::{Rotator, Vec3};
use crate::render::{render_camera, render_geometry_alone, Channels};
use crate::rng::{fnv1a64, splitmix64, stream};
use crate::truth::occlusion_ratio;
use crate::world::{CameraState, CollisionHandling, SpawnRequest, World};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    #[default]
    Standard,
    HighDensity,
    Clustered,
    OccludedView,
    UncommonViewpoint,
}

impl GenerationMode {
    pub const ALL: [GenerationMode; 5] = [
        GenerationMode::Standard,
        GenerationMode::HighDensity,
        GenerationMode::Clustered,
        GenerationMode::OccludedView,
        GenerationMode::UncommonViewpoint,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// Asset category drawn from the catalog.
    pub category: String,
    #[serde(default)]
    pub min_count: usize,
    pub max_count: usize,
    /// Rules to place on; defaults to every area rule.
    #[serde(default)]
    pub rule_ids: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcclusionSpec {
    /// Object to hide; defaults to the first object this run places.
    pub target: Option<String>,
    pub threshold: f64,
    pub max_attempts: usize,
    /// Category for occluders; defaults to the first target category.
    pub occluder_category: Option<String>,
}

impl Default for OcclusionSpec {
    fn default() -> Self {
        OcclusionSpec { target: None, threshold: 0.4, max_attempts: 20, occluder_category: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewpointKind {
    /// Either kind, chosen by the seed.
    #[default]
    Either,
    /// Steep elevation above the scene.
    High,
    /// Camera close to the floor.
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViewpointSpec {
    pub kind: ViewpointKind,
    pub min_elevation: f64,
    pub max_elevation: f64,
    /// Maximum camera height above the floor for low viewpoints, cm.
    pub max_height: f64,
    /// Camera distance range from the look-at point, cm.
    pub distance: [f64; 2],
}

impl Default for ViewpointSpec {
    fn default() -> Self {
        ViewpointSpec { kind: ViewpointKind::Either, min_elevation: 60.0, max_elevation: 89.0, max_height: 30.0, distance: [300.0, 800.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    #[serde(default = "config_version")]
    pub version: u32,
    pub seed: u64,
    #[serde(default)]
    pub mode: GenerationMode,
    /// Objects per square meter of area rules, or per meter of trajectory.
    #[serde(default = "default_density")]
    pub density: f64,
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub min_spacing: f64,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
    /// Camera used by occluded_view and set by uncommon_viewpoint.
    #[serde(default)]
    pub camera: Option<CameraState>,
    #[serde(default)]
    pub occlusion: OcclusionSpec,
    #[serde(default)]
    pub viewpoint: ViewpointSpec,
    #[serde(default = "default_high_density_factor")]
    pub high_density_factor: f64,
    /// Cluster scatter in units of member footprint extent.
    #[serde(default = "default_cluster_sigma")]
    pub cluster_sigma: f64,
}

fn config_version() -> u32 {
    CONFIG_FORMAT_VERSION
}
fn default_density() -> f64 {
    0.05
}
fn default_prefix() -> String {
    "gen".into()
}
fn default_high_density_factor() -> f64 {
    4.0
}
fn default_cluster_sigma() -> f64 {
    1.5
}

impl GenerationConfig {
    pub fn new(seed: u64, mode: GenerationMode, targets: Vec<TargetSpec>) -> GenerationConfig {
        GenerationConfig {
            version: CONFIG_FORMAT_VERSION,
            seed,
            mode,
            density: default_density(),
            targets,
            min_spacing: 0.0,
            id_prefix: default_prefix(),
            camera: None,
            occlusion: OcclusionSpec::default(),
            viewpoint: ViewpointSpec::default(),
            high_density_factor: default_high_density_factor(),
            cluster_sigma: default_cluster_sigma(),
        }
    }

    pub fn from_json(text: &str) -> Result<GenerationConfig> {
        let cfg: GenerationConfig =
            serde_json::from_str(text).map_err(|e| SimError::invalid(format!("generation config: {e}")))?;
        if cfg.version != CONFIG_FORMAT_VERSION {
            return Err(SimError::VersionMismatch { found: cfg.version, expected: CONFIG_FORMAT_VERSION });
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::invalid(m.to_string()));
        if !(self.density > 0.0 && self.density.is_finite()) {
            return bad("density must be positive");
        }
        if !(self.min_spacing >= 0.0 && self.min_spacing.is_finite()) {
            return bad("min_spacing must be nonnegative");
        }
        if self.targets.iter().any(|t| t.min_count > t.max_count) {
            return bad("min_count must not exceed max_count");
        }
        if !(0.0..=1.0).contains(&self.occlusion.threshold) {
            return bad("occlusion threshold must be in [0, 1]");
        }
        let v = &self.viewpoint;
        if !(0.0 <= v.min_elevation && v.min_elevation <= v.max_elevation && v.max_elevation < 90.0) {
            return bad("viewpoint elevations must satisfy 0 <= min <= max < 90");
        }
        if !(v.max_height > 0.0 && v.distance[0] > 0.0 && v.distance[0] <= v.distance[1]) {
            return bad("viewpoint height and distance range must be positive");
        }
        if !(self.high_density_factor >= 1.0 && self.cluster_sigma > 0.0) {
            return bad("high_density_factor must be >= 1 and cluster_sigma positive");
        }
        if self.id_prefix.is_empty() {
            return bad("id_prefix must not be empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementRole {
    Placement,
    ClusterMember,
    Occluder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub obj_id: String,
    pub asset_path: String,
    pub category: String,
    pub rule_id: Option<String>,
    pub role: PlacementRole,
    pub cluster: Option<usize>,
    /// Position drawn by the sampler before collision handling.
    pub sampled: Vec3,
    pub yaw: f64,
    /// Final spawn location, when the object remains in the world.
    pub final_location: Option<Vec3>,
    /// "ok" or an error code.
    pub status: String,
}

impl PlacementRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerFailure {
    pub category: String,
    pub rule_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionOutcome {
    pub target: String,
    pub threshold: f64,
    pub achieved_ratio: f64,
    pub attempts: usize,
    pub reached: bool,
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewpointOutcome {
    pub kind: ViewpointKind,
    pub look_at: Vec3,
    pub elevation: f64,
    pub height_above_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub seed: u64,
    pub mode: GenerationMode,
    pub placements: Vec<PlacementRecord>,
    pub failures: Vec<SamplerFailure>,
    pub occlusion: Option<OcclusionOutcome>,
    pub camera: Option<CameraState>,
    pub viewpoint: Option<ViewpointOutcome>,
}

impl GenerationReport {
    pub fn spawned(&self) -> impl Iterator<Item = &PlacementRecord> {
        self.placements.iter().filter(|p| p.is_ok())
    }
}

fn derive_seed(seed: u64, name: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(name.as_bytes()))
}

/// Tolerance for "on the rule geometry", cm.
pub const CONTAINMENT_TOLERANCE: f64 = 1.0;

struct Generator<'a> {
    world: &'a mut World,
    cfg: &'a GenerationConfig,
    report: GenerationReport,
}

/// Populates `world` from `rules` according to `config`. Every object is
/// spawned with adjust-if-possible collision handling; objects nudged out
/// of their rule region are removed again and reported.
pub fn generate_scene(world: &mut World, rules: &[ProceduralRule], config: &GenerationConfig) -> Result<GenerationReport> {
    config.validate()?;
    let mut plan: Vec<(usize, Vec<&ProceduralRule>, Vec<String>)> = Vec::new();
    for (ti, t) in config.targets.iter().enumerate() {
        let assets: Vec<String> = world.catalog().by_category(&t.category).map(|a| a.asset_path.clone()).collect();
        if assets.is_empty() {
            return Err(SimError::invalid(format!("no catalog assets of category {:?}", t.category)));
        }
        let chosen: Vec<&ProceduralRule> = match &t.rule_ids {
            Some(ids) => ids
                .iter()
                .map(|id| {
                    rules.iter().find(|r| &r.rule_id == id).ok_or_else(|| SimError::invalid(format!("unknown rule_id {id:?}")))
                })
                .collect::<Result<_>>()?,
            None => rules.iter().filter(|r| r.category.is_area()).collect(),
        };
        if chosen.is_empty() {
            return Err(SimError::invalid(format!("no rules available for category {:?}", t.category)));
        }
        plan.push((ti, chosen, assets));
    }
    let mut g = Generator {
        world,
        cfg: config,
        report: GenerationReport {
            seed: config.seed,
            mode: config.mode,
            placements: Vec::new(),
            failures: Vec::new(),
            occlusion: None,
            camera: None,
            viewpoint: None,
        },
    };
    let mut cluster_centers: BTreeMap<String, Vec<Vec3>> = BTreeMap::new();
    let mut cluster_index = 0usize;
    for (ti, chosen, assets) in &plan {
        let target = &config.targets[*ti];
        for rule in chosen {
            let clustered = config.mode == GenerationMode::Clustered && rule.category.is_area();
            let n = g.count_for(target, rule);
            let call_seed = derive_seed(config.seed, &format!("target/{ti}/{}", target.category));
            let sampled = if clustered {
                let centers = cluster_centers.entry(rule.rule_id.clone()).or_default();
                let r = g.sample_cluster(rule, assets, n, call_seed, centers);
                r.map(|p| (p, Some(cluster_index)))
            } else if rule.category.is_area() {
                sample_in_area(rule, n, config.min_spacing, call_seed).map(|p| (p, None))
            } else {
                sample_on_trajectory(rule, n, config.min_spacing, call_seed).map(|p| (p, None))
            };
            match sampled {
                Ok((placements, cluster)) => {
                    let role = if cluster.is_some() { PlacementRole::ClusterMember } else { PlacementRole::Placement };
                    g.spawn_batch(target, rule, assets, &placements, role, cluster, call_seed);
                    if clustered {
                        cluster_index += 1;
                    }
                }
                Err(e) => g.report.failures.push(SamplerFailure {
                    category: target.category.clone(),
                    rule_id: rule.rule_id.clone(),
                    reason: e.to_string(),
                }),
            }
        }
    }
    match config.mode {
        GenerationMode::OccludedView => g.occlude(rules)?,
        GenerationMode::UncommonViewpoint => g.uncommon_viewpoint(rules)?,
        _ => {}
    }
    Ok(g.report)
}

impl Generator<'_> {
    fn count_for(&self, t: &TargetSpec, rule: &ProceduralRule) -> usize {
        let mut density = self.cfg.density;
        if self.cfg.mode == GenerationMode::HighDensity {
            density *= self.cfg.high_density_factor;
        }
        let measure = match rule.geometry {
            RuleGeometry::Rect { .. } => rule.area_m2(),
            _ => rule.path().map_or(0.0, |p| p.length() / 100.0),
        };
        ((density * measure).round() as usize).clamp(t.min_count, t.max_count)
    }

    fn footprint_extent(&self, assets: &[String]) -> f64 {
        assets
            .iter()
            .filter_map(|a| self.world.catalog().get(a).ok())
            .map(|a| {
                let e = a.extent();
                e.x.max(e.y)
            })
            .fold(1.0, f64::max)
    }

    /// Gaussian scatter around one cluster center inside the rect. Centers
    /// of clusters sharing a rule are kept about six scatter widths apart
    /// when the area allows it.
    fn sample_cluster(
        &self,
        rule: &ProceduralRule,
        assets: &[String],
        n: usize,
        seed: u64,
        centers: &mut Vec<Vec3>,
    ) -> Result<Vec<Placement>> {
        let RuleGeometry::Rect { center, half_extents, yaw } = rule.geometry else {
            unreachable!("clusters are only sampled in areas");
        };
        let sigma = self.cfg.cluster_sigma * self.footprint_extent(assets);
        let mut rng = stream(seed, &format!("cluster/{}", rule.rule_id), 0);
        let mut best: Option<(f64, Vec3)> = None;
        for _ in 0..ATTEMPTS_PER_SAMPLE {
            let c = uniform_in_rect(&mut rng, center, half_extents, yaw);
            let d = centers.iter().map(|o| o.distance(c)).fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, c));
            }
            if d >= 6.0 * sigma {
                break;
            }
        }
        let c = best.expect("at least one draw").1;
        centers.push(c);
        let normal = Normal::new(0.0, sigma).expect("positive sigma");
        let mut out: Vec<Placement> = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = stream(seed, &format!("cluster/{}/member", rule.rule_id), i as u64);
            let mut placed = false;
            for _ in 0..ATTEMPTS_PER_SAMPLE {
                let p = Vec3::new(c.x + normal.sample(&mut rng), c.y + normal.sample(&mut rng), c.z);
                let yaw = 180.0 - rng.random_range(0.0..360.0);
                if rule.contains(p, 0.0) && out.iter().all(|o| o.position.distance(p) >= self.cfg.min_spacing) {
                    out.push(Placement { position: p, yaw });
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(SimError::Infeasible(format!("rule {}: cluster member {i} could not be placed", rule.rule_id)));
            }
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn spawn_batch(
        &mut self,
        target: &TargetSpec,
        rule: &ProceduralRule,
        assets: &[String],
        placements: &[Placement],
        role: PlacementRole,
        cluster: Option<usize>,
        seed: u64,
    ) {
        let tol = if rule.category.is_area() { 1e-6 } else { CONTAINMENT_TOLERANCE };
        let mut finals: Vec<Vec3> = Vec::new();
        for (k, p) in placements.iter().enumerate() {
            let mut rng = stream(seed, &format!("asset/{}", rule.rule_id), k as u64);
            let asset = &assets[rng.random_range(0..assets.len())];
            let obj_id = format!("{}_{}_{}_{k}", self.cfg.id_prefix, target.category, rule.rule_id);
            let req = SpawnRequest::new(&obj_id, asset)
                .at(p.position)
                .rotated(Rotator::new(0.0, p.yaw, 0.0))
                .mode(CollisionHandling::AdjustIfPossible);
            let mut rec = PlacementRecord {
                obj_id: obj_id.clone(),
                asset_path: asset.clone(),
                category: target.category.clone(),
                rule_id: Some(rule.rule_id.clone()),
                role,
                cluster,
                sampled: p.position,
                yaw: p.yaw,
                final_location: None,
                status: "ok".into(),
            };
            match self.world.spawn_object(&req) {
                Ok(out) => {
                    let spaced = finals.iter().all(|f| f.distance(out.location) >= self.cfg.min_spacing);
                    if !rule.contains(out.location, tol) {
                        self.world.delete_object(&obj_id).expect("just spawned");
                        rec.status = "out_of_region".into();
                    } else if !spaced {
                        self.world.delete_object(&obj_id).expect("just spawned");
                        rec.status = "spacing_violation".into();
                    } else {
                        finals.push(out.location);
                        rec.final_location = Some(out.location);
                    }
                }
                Err(e) => rec.status = e.code().into(),
            }
            self.report.placements.push(rec);
        }
    }

    fn camera_template(&self) -> CameraState {
        match &self.cfg.camera {
            Some(c) => c.clone(),
            None => self.world.get_camera(0).cloned().unwrap_or_else(|_| CameraState::default_for(0)),
        }
    }

    fn occlude(&mut self, rules: &[ProceduralRule]) -> Result<()> {
        let spec = &self.cfg.occlusion;
        let first = self.report.spawned().next().map(|r| r.obj_id.clone());
        let target = match &spec.target {
            Some(t) => t.clone(),
            None => match first {
                Some(id) => id,
                None => {
                    self.report.failures.push(SamplerFailure {
                        category: String::new(),
                        rule_id: String::new(),
                        reason: "occluded_view: no target object".into(),
                    });
                    return Ok(());
                }
            },
        };
        let taabb = self.world.world_aabb(&target)?;
        let tc = taabb.center();
        let ext = taabb.extent();
        let mut rng = stream(self.cfg.seed, "occluded_view", 0);
        let camera = match &self.cfg.camera {
            Some(c) => c.clone(),
            None => {
                let d = (4.0 * ext.max_element()).max(300.0);
                let az = rng.random_range(-180.0f64..180.0).to_radians();
                let el = 15f64.to_radians();
                let loc = tc + Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * d;
                CameraState { location: loc, rotation: Rotator::look_along(tc - loc), ..self.camera_template() }
            }
        };
        self.world.put_camera(camera.clone())?;
        self.report.camera = Some(camera.clone());

        let occluder_cat = spec
            .occluder_category
            .clone()
            .unwrap_or_else(|| self.cfg.targets.first().map(|t| t.category.clone()).unwrap_or_default());
        let occluders: Vec<String> = self.world.catalog().by_category(&occluder_cat).map(|a| a.asset_path.clone()).collect();
        if occluders.is_empty() {
            return Err(SimError::invalid(format!("no catalog assets of occluder category {occluder_cat:?}")));
        }
        let _ = rules;
        let mut ratio = self.measure_occlusion(&camera, &target)?;
        let mut attempts = 0;
        while ratio < spec.threshold && attempts < spec.max_attempts {
            let f = rng.random_range(0.4..=0.8);
            let asset = &occluders[rng.random_range(0..occluders.len())];
            let jitter = Vec3::new(rng.random_range(-0.25..=0.25), rng.random_range(-0.25..=0.25), 0.0) * ext.x.max(ext.y);
            let p = camera.location + (tc - camera.location) * f + jitter;
            let oext = self.world.catalog().get(asset)?.extent();
            let location = p - Vec3::new(0.0, 0.0, oext.z / 2.0);
            let yaw = 180.0 - rng.random_range(0.0..360.0);
            let obj_id = format!("{}_occluder_{attempts}", self.cfg.id_prefix);
            attempts += 1;
            let req = SpawnRequest::new(&obj_id, asset)
                .at(location)
                .rotated(Rotator::new(0.0, yaw, 0.0))
                .mode(CollisionHandling::AdjustIfPossible);
            let mut rec = PlacementRecord {
                obj_id: obj_id.clone(),
                asset_path: asset.clone(),
                category: occluder_cat.clone(),
                rule_id: None,
                role: PlacementRole::Occluder,
                cluster: None,
                sampled: location,
                yaw,
                final_location: None,
                status: "ok".into(),
            };
            match self.world.spawn_object(&req) {
                Ok(out) => rec.final_location = Some(out.location),
                Err(e) => rec.status = e.code().into(),
            }
            self.report.placements.push(rec);
            ratio = self.measure_occlusion(&camera, &target)?;
        }
        let reached = ratio >= spec.threshold;
        self.report.occlusion = Some(OcclusionOutcome {
            target,
            threshold: spec.threshold,
            achieved_ratio: ratio,
            attempts,
            reached,
            budget_exhausted: !reached,
        });
        Ok(())
    }

    fn measure_occlusion(&self, camera: &CameraState, target: &str) -> Result<f64> {
        let view = self.world.view();
        let obj = view.object(target)?;
        let geom = view.geometry(obj.instance_id).expect("view has geometry");
        let full = render_camera(&view, camera, Channels::DEPTH | Channels::INSTANCE, Exec::default());
        let alone = render_geometry_alone(geom, target, camera, 1, false, Exec::default());
        occlusion_ratio(&full, &alone)
    }

    fn uncommon_viewpoint(&mut self, rules: &[ProceduralRule]) -> Result<()> {
        let spawned: Vec<String> = self.report.spawned().map(|r| r.obj_id.clone()).collect();
        let (look_at, floor) = if spawned.is_empty() {
            let c = rules
                .iter()
                .find_map(|r| match r.geometry {
                    RuleGeometry::Rect { center, .. } => Some(center),
                    _ => None,
                })
                .or_else(|| rules.first().map(|r| r.anchors()[0]))
                .unwrap_or(Vec3::ZERO);
            (c, c.z)
        } else {
            let boxes: Vec<_> = spawned.iter().map(|id| self.world.world_aabb(id)).collect::<Result<_>>()?;
            let sum = boxes.iter().fold(Vec3::ZERO, |acc, b| acc + b.center());
            (sum / boxes.len() as f64, boxes.iter().map(|b| b.min.z).fold(f64::INFINITY, f64::min))
        };
        let vp = &self.cfg.viewpoint;
        let mut rng = stream(self.cfg.seed, "uncommon_viewpoint", 0);
        let kind = match vp.kind {
            ViewpointKind::Either => {
                if rng.random_bool(0.5) {
                    ViewpointKind::High
                } else {
                    ViewpointKind::Low
                }
            }
            k => k,
        };
        let az = rng.random_range(-180.0f64..180.0).to_radians();
        let d = rng.random_range(vp.distance[0]..=vp.distance[1]);
        let location = match kind {
            ViewpointKind::High => {
                let el = rng.random_range(vp.min_elevation..=vp.max_elevation).to_radians();
                look_at + Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * d
            }
            _ => {
                let h = rng.random_range(0.2 * vp.max_height..=vp.max_height);
                Vec3::new(look_at.x + d * az.cos(), look_at.y + d * az.sin(), floor + h)
            }
        };
        let dir = look_at - location;
        let elevation = (-dir.z).atan2(dir.x.hypot(dir.y)).to_degrees();
        let camera = CameraState { location, rotation: Rotator::look_along(dir), ..self.camera_template() };
        self.world.put_camera(camera.clone())?;
        self.report.camera = Some(camera);
        self.report.viewpoint = Some(ViewpointOutcome { kind, look_at, elevation, height_above_floor: location.z - floor });
        Ok(())
    }
}
