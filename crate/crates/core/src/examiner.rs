//! Adversarial viewpoint search: a Gaussian policy over spherical camera
//! poses around a target, refined by the cross-entropy method to drive a
//! segmenter's IoU against ground truth as low as possible.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::exec::Exec;
use crate::geometry::{Rotator, Vec3};
use crate::render::{render_camera, Channels};
use crate::rng::stream;
use crate::world::{CameraState, SceneView};

pub const STD_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewpointParams {
    /// Degrees in [0, 360).
    pub azimuth: f64,
    /// Degrees above the target's horizontal plane.
    pub elevation: f64,
    /// Distance from the target center, cm.
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewpointBounds {
    pub elevation: [f64; 2],
    pub radius: [f64; 2],
}

impl ViewpointBounds {
    fn validate(&self) -> Result<()> {
        let [e0, e1] = self.elevation;
        let [r0, r1] = self.radius;
        if !(-89.0 <= e0 && e0 <= e1 && e1 <= 89.0) {
            return Err(SimError::invalid("elevation bounds must lie in [-89, 89] with min <= max"));
        }
        if !(r0 > 0.0 && r0 <= r1 && r1.is_finite()) {
            return Err(SimError::invalid("radius bounds must be positive with min <= max"));
        }
        Ok(())
    }

    pub fn contains(&self, v: &ViewpointParams) -> bool {
        (0.0..360.0).contains(&v.azimuth)
            && (self.elevation[0]..=self.elevation[1]).contains(&v.elevation)
            && (self.radius[0]..=self.radius[1]).contains(&v.radius)
    }

    fn clamp(&self, v: ViewpointParams) -> ViewpointParams {
        ViewpointParams {
            azimuth: v.azimuth.rem_euclid(360.0),
            elevation: reflect(v.elevation, self.elevation),
            radius: reflect(v.radius, self.radius),
        }
    }
}

/// Folds `x` back into `[lo, hi]` by mirroring at the bounds.
fn reflect(x: f64, [lo, hi]: [f64; 2]) -> f64 {
    let w = hi - lo;
    if w <= 0.0 {
        return lo;
    }
    let t = (x - lo).rem_euclid(2.0 * w);
    let r = if t > w { 2.0 * w - t } else { t };
    (lo + r).clamp(lo, hi)
}

fn wrap180(a: f64) -> f64 {
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 { 180.0 } else { w }
}

/// Camera location on the sphere, looking at `center` with zero roll.
pub fn sphere_pose(center: Vec3, v: &ViewpointParams) -> (Vec3, Rotator) {
    let (a, e) = (v.azimuth.to_radians(), v.elevation.to_radians());
    let loc = center + Vec3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin()) * v.radius;
    (loc, Rotator::look_along(center - loc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: ViewpointParams,
    /// Standard deviations of (azimuth, elevation, radius).
    pub std: [f64; 3],
    pub bounds: ViewpointBounds,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub params: ViewpointParams,
    /// Negated IoU, in [-1, 0].
    pub reward: f64,
    pub iou: f64,
    /// Ground-truth mask was empty; the sample carries no information.
    pub vacuous: bool,
}

impl Evaluation {
    /// Sort key: lower is more adversarial; vacuous samples rank last.
    fn fitness(&self) -> f64 {
        if self.vacuous { f64::INFINITY } else { self.iou }
    }
}

impl GaussianPolicy {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> ViewpointParams {
        let mut n = || -> f64 { StandardNormal.sample(rng) };
        let raw = ViewpointParams {
            azimuth: self.mean.azimuth + self.std[0] * n(),
            elevation: self.mean.elevation + self.std[1] * n(),
            radius: self.mean.radius + self.std[2] * n(),
        };
        self.bounds.clamp(raw)
    }

    /// One smoothed cross-entropy update. Elites are the `ceil(rho * P)`
    /// lowest-IoU samples plus any tied with the last of them. The elite
    /// spread is capped at the current spread so the policy never widens.
    pub fn step(&self, population: &[Evaluation], elite_fraction: f64, smoothing: f64) -> GaussianPolicy {
        let mut sorted: Vec<&Evaluation> = population.iter().collect();
        sorted.sort_by(|a, b| a.fitness().total_cmp(&b.fitness()));
        let k = ((elite_fraction * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len().max(1));
        let mut elites: Vec<&Evaluation> = sorted[..k.min(sorted.len())].to_vec();
        if let Some(last) = elites.last().map(|e| e.fitness()) {
            elites.extend(sorted[elites.len()..].iter().take_while(|e| e.fitness() == last));
        }
        if elites.is_empty() {
            return GaussianPolicy { iteration: self.iteration + 1, ..self.clone() };
        }
        let n = elites.len() as f64;
        let (s, c) = elites.iter().fold((0.0, 0.0), |(s, c), e| {
            let a = e.params.azimuth.to_radians();
            (s + a.sin(), c + a.cos())
        });
        let az_mean = if s.hypot(c) < 1e-12 { self.mean.azimuth } else { s.atan2(c).to_degrees() };
        let el_mean = elites.iter().map(|e| e.params.elevation).sum::<f64>() / n;
        let r_mean = elites.iter().map(|e| e.params.radius).sum::<f64>() / n;
        let sd = |f: &dyn Fn(&Evaluation) -> f64| (elites.iter().map(|e| f(e).powi(2)).sum::<f64>() / n).sqrt();
        let elite_std = [
            sd(&|e| wrap180(e.params.azimuth - az_mean)),
            sd(&|e| e.params.elevation - el_mean),
            sd(&|e| e.params.radius - r_mean),
        ];
        let a = smoothing;
        let mean = ViewpointParams {
            azimuth: (self.mean.azimuth + a * wrap180(az_mean - self.mean.azimuth)).rem_euclid(360.0),
            elevation: a * el_mean + (1.0 - a) * self.mean.elevation,
            radius: a * r_mean + (1.0 - a) * self.mean.radius,
        };
        let mut std = [0.0; 3];
        for i in 0..3 {
            std[i] = (a * elite_std[i].min(self.std[i]) + (1.0 - a) * self.std[i]).max(STD_FLOOR);
        }
        GaussianPolicy { mean, std, bounds: self.bounds, iteration: self.iteration + 1 }
    }
}

/// Input handed to a segmenter. `hint` is the ground-truth mask, which
/// learned models may ignore and test doubles may use.
pub struct SegmentRequest<'a> {
    pub lit: &'a [[u8; 3]],
    pub width: u32,
    pub height: u32,
    pub hint: &'a [bool],
    pub viewpoint: ViewpointParams,
}

pub trait Segmenter {
    /// Returns a mask with `width * height` entries.
    fn segment(&mut self, req: &SegmentRequest<'_>) -> Vec<bool>;
}

/// Returns the ground truth unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerfectOracle;

impl Segmenter for PerfectOracle {
    fn segment(&mut self, req: &SegmentRequest<'_>) -> Vec<bool> {
        req.hint.to_vec()
    }
}

/// Fails at grazing views: below `elevation_threshold` the mask is shifted
/// by `shift_fraction` of its bounding box on both image axes, otherwise it
/// is eroded by one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlawedOracle {
    pub elevation_threshold: f64,
    pub shift_fraction: f64,
}

impl Default for FlawedOracle {
    fn default() -> Self {
        FlawedOracle { elevation_threshold: 15.0, shift_fraction: 0.35 }
    }
}

impl Segmenter for FlawedOracle {
    fn segment(&mut self, req: &SegmentRequest<'_>) -> Vec<bool> {
        let (w, h) = (req.width as usize, req.height as usize);
        if req.viewpoint.elevation < self.elevation_threshold {
            shift_mask(req.hint, w, h, self.shift_fraction)
        } else {
            erode_mask(req.hint, w, h)
        }
    }
}

fn mask_bbox(mask: &[bool], w: usize) -> Option<(usize, usize, usize, usize)> {
    let mut b: Option<(usize, usize, usize, usize)> = None;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let (x, y) = (i % w, i / w);
        b = Some(match b {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    b
}

pub fn shift_mask(mask: &[bool], w: usize, h: usize, fraction: f64) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    let Some((x0, y0, x1, y1)) = mask_bbox(mask, w) else {
        return out;
    };
    let dx = ((x1 - x0 + 1) as f64 * fraction).round() as usize;
    let dy = ((y1 - y0 + 1) as f64 * fraction).round() as usize;
    for y in 0..h.saturating_sub(dy) {
        for x in 0..w.saturating_sub(dx) {
            out[(y + dy) * w + x + dx] = mask[y * w + x];
        }
    }
    out
}

/// 4-neighbour erosion; pixels outside the image count as background.
pub fn erode_mask(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let at = |x: isize, y: isize| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && mask[y as usize * w + x as usize];
    (0..mask.len())
        .map(|i| {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            at(x, y) && at(x - 1, y) && at(x + 1, y) && at(x, y - 1) && at(x, y + 1)
        })
        .collect()
}

/// Intersection over union; `None` when both masks are empty.
pub fn iou(pred: &[bool], gt: &[bool]) -> Result<Option<f64>> {
    if pred.len() != gt.len() {
        return Err(SimError::ResolutionMismatch(format!("mask sizes {} and {}", pred.len(), gt.len())));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    Ok((union > 0).then(|| inter as f64 / union as f64))
}

/// Negated IoU; two empty masks score 0.
pub fn reward(pred: &[bool], gt: &[bool]) -> Result<f64> {
    Ok(-iou(pred, gt)?.unwrap_or(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExaminerConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub smoothing: f64,
    pub iterations: usize,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub fov: f64,
    /// Defaults to elevation [-89, 89] and radius [2, 10] times the
    /// target's largest extent.
    pub bounds: Option<ViewpointBounds>,
    /// Defaults to azimuth 0 +- 60, elevation 30 +- 45, radius at the
    /// middle of its range +- a quarter of it.
    pub initial: Option<GaussianPolicy>,
    pub gallery_size: usize,
}

impl Default for ExaminerConfig {
    fn default() -> Self {
        ExaminerConfig {
            population: 16,
            elite_fraction: 0.25,
            smoothing: 0.7,
            iterations: 50,
            seed: 0,
            width: 320,
            height: 240,
            fov: 90.0,
            bounds: None,
            initial: None,
            gallery_size: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub samples: Vec<Evaluation>,
    /// Lowest non-vacuous IoU seen up to and including this iteration.
    pub best_iou_so_far: Option<f64>,
    pub policy: GaussianPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExaminerReport {
    pub target: String,
    pub seed: u64,
    /// Most adversarial non-vacuous sample.
    pub best: Option<Evaluation>,
    pub best_iteration: Option<usize>,
    pub trace: Vec<IterationTrace>,
    pub total_renders: usize,
    pub initial_policy: GaussianPolicy,
    pub final_policy: GaussianPolicy,
    /// Lowest-IoU samples, ascending.
    pub gallery: Vec<Evaluation>,
}

impl ExaminerReport {
    pub fn best_iou(&self) -> Option<f64> {
        self.best.map(|b| b.iou)
    }
}

impl ExaminerConfig {
    fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(SimError::invalid("population must be at least 4"));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(SimError::invalid("elite_fraction must be in (0, 1]"));
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(SimError::invalid("smoothing must be in (0, 1]"));
        }
        crate::world::validate_resolution(self.width, self.height)
    }
}

/// Runs the search against `target` in `view`. Deterministic for a given
/// seed when the segmenter is.
pub fn run_examiner(
    view: &SceneView,
    target: &str,
    segmenter: &mut dyn Segmenter,
    config: &ExaminerConfig,
    exec: Exec,
) -> Result<ExaminerReport> {
    config.validate()?;
    let obj = view.object(target)?;
    let instance = obj.instance_id;
    let geom = view.geometry(instance).expect("view holds geometry for objects");
    let center = geom.aabb().center();
    let extent = geom.aabb().extent().max_element().max(1.0);
    let bounds = config.bounds.unwrap_or(ViewpointBounds { elevation: [-89.0, 89.0], radius: [2.0 * extent, 10.0 * extent] });
    bounds.validate()?;
    let initial = match &config.initial {
        Some(p) => GaussianPolicy { bounds, ..p.clone() },
        None => {
            let [r0, r1] = bounds.radius;
            GaussianPolicy {
                mean: ViewpointParams { azimuth: 0.0, elevation: 30.0f64.clamp(bounds.elevation[0], bounds.elevation[1]), radius: (r0 + r1) / 2.0 },
                std: [60.0, 45.0, ((r1 - r0) / 4.0).max(STD_FLOOR)],
                bounds,
                iteration: 0,
            }
        }
    };
    let template = CameraState { fov: config.fov, width: config.width, height: config.height, ..CameraState::default_for(0) };
    template.validate()?;

    let mut policy = initial.clone();
    let mut trace = Vec::with_capacity(config.iterations);
    let mut all: Vec<Evaluation> = Vec::new();
    let mut best: Option<(Evaluation, usize)> = None;
    for it in 0..config.iterations {
        let mut rng = stream(config.seed, "examiner", it as u64);
        let params: Vec<ViewpointParams> = (0..config.population).map(|_| policy.sample(&mut rng)).collect();
        let frames = exec.map(params.len(), |i| {
            let (location, rotation) = sphere_pose(center, &params[i]);
            let cam = CameraState { location, rotation, ..template.clone() };
            render_camera(view, &cam, Channels::LIT | Channels::INSTANCE, Exec::Sequential)
        });
        let mut samples = Vec::with_capacity(params.len());
        for (p, f) in params.iter().zip(&frames) {
            let gt: Vec<bool> = f.instance.as_ref().expect("instance requested").iter().map(|&i| i == instance).collect();
            let req = SegmentRequest { lit: f.lit.as_ref().expect("lit requested"), width: f.width, height: f.height, hint: &gt, viewpoint: *p };
            let pred = segmenter.segment(&req);
            let score = iou(&pred, &gt)?;
            let vacuous = !gt.iter().any(|&g| g);
            let iou_v = score.unwrap_or(0.0);
            let e = Evaluation { params: *p, reward: -iou_v, iou: iou_v, vacuous };
            if !vacuous && best.is_none_or(|(b, _)| e.iou < b.iou) {
                best = Some((e, it));
            }
            samples.push(e);
        }
        policy = policy.step(&samples, config.elite_fraction, config.smoothing);
        all.extend(samples.iter().copied());
        trace.push(IterationTrace { iteration: it, samples, best_iou_so_far: best.map(|(b, _)| b.iou), policy: policy.clone() });
    }
    let mut gallery: Vec<Evaluation> = all.iter().filter(|e| !e.vacuous).copied().collect();
    gallery.sort_by(|a, b| a.iou.total_cmp(&b.iou));
    gallery.truncate(config.gallery_size);
    Ok(ExaminerReport {
        target: target.to_string(),
        seed: config.seed,
        best: best.map(|(b, _)| b),
        best_iteration: best.map(|(_, i)| i),
        trace,
        total_renders: config.population * config.iterations,
        initial_policy: initial,
        final_policy: policy,
        gallery,
    })
}
