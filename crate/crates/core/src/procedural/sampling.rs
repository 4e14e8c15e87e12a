//! Placement samplers along trajectories and inside areas.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rules::{ProceduralRule, RuleGeometry};
use crate::error::{Result, SimError};
use crate::geometry::Vec3;
use crate::rng::stream;

/// Rejection attempts allowed per requested sample.
pub const ATTEMPTS_PER_SAMPLE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub position: Vec3,
    /// Degrees; +X of the object faces this way.
    pub yaw: f64,
}

fn far_enough(p: Vec3, others: &[Placement], min_spacing: f64) -> bool {
    others.iter().all(|o| o.position.distance(p) >= min_spacing)
}

/// `count` poses along a line or spline rule, facing along the tangent and
/// pairwise at least `min_spacing` apart.
///
/// Arc-length positions come from sorted uniform draws shifted by
/// `i * min_spacing`, which guarantees arc spacing; draws whose straight-line
/// spacing is still too small (curved paths) are redrawn.
pub fn sample_on_trajectory(rule: &ProceduralRule, count: usize, min_spacing: f64, seed: u64) -> Result<Vec<Placement>> {
    let path = rule.path().ok_or_else(|| SimError::InvalidRule {
        rule_id: rule.rule_id.clone(),
        reason: "not a trajectory rule".into(),
    })?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let min_spacing = min_spacing.max(0.0);
    let length = path.length();
    if count as f64 * min_spacing > length {
        return Err(SimError::Infeasible(format!(
            "rule {}: {count} samples at spacing {min_spacing} need more than length {length:.3}",
            rule.rule_id
        )));
    }
    let slack = length - (count - 1) as f64 * min_spacing;
    let mut rng = stream(seed, &format!("trajectory/{}", rule.rule_id), 0);
    for _ in 0..ATTEMPTS_PER_SAMPLE * count {
        let mut u: Vec<f64> = (0..count).map(|_| rng.random_range(0.0..=slack)).collect();
        u.sort_by(f64::total_cmp);
        let mut out: Vec<Placement> = Vec::with_capacity(count);
        let mut ok = true;
        for (i, ui) in u.iter().enumerate() {
            let (position, tangent) = path.at_length(ui + i as f64 * min_spacing);
            if !far_enough(position, &out, min_spacing) {
                ok = false;
                break;
            }
            out.push(Placement { position, yaw: tangent.y.atan2(tangent.x).to_degrees() });
        }
        if ok {
            return Ok(out);
        }
    }
    Err(SimError::Infeasible(format!("rule {}: rejection budget exhausted", rule.rule_id)))
}

/// Uniform point in a rect rule, from `rng`.
pub(crate) fn uniform_in_rect<R: Rng>(rng: &mut R, center: Vec3, half: [f64; 2], yaw: f64) -> Vec3 {
    let a = rng.random_range(-half[0]..=half[0]);
    let b = rng.random_range(-half[1]..=half[1]);
    let (s, c) = yaw.to_radians().sin_cos();
    Vec3::new(center.x + c * a - s * b, center.y + s * a + c * b, center.z)
}

/// `count` poses uniformly inside a rect rule with random yaw, pairwise at
/// least `min_spacing` apart. Sample `i` draws from its own stream.
pub fn sample_in_area(rule: &ProceduralRule, count: usize, min_spacing: f64, seed: u64) -> Result<Vec<Placement>> {
    let RuleGeometry::Rect { center, half_extents, yaw } = rule.geometry else {
        return Err(SimError::InvalidRule { rule_id: rule.rule_id.clone(), reason: "not an area rule".into() });
    };
    let min_spacing = min_spacing.max(0.0);
    let diagonal = 2.0 * half_extents[0].hypot(half_extents[1]);
    if count >= 2 && min_spacing > diagonal {
        return Err(SimError::Infeasible(format!(
            "rule {}: spacing {min_spacing} exceeds the area diagonal {diagonal:.3}",
            rule.rule_id
        )));
    }
    let mut out: Vec<Placement> = Vec::with_capacity(count);
    let mut budget = ATTEMPTS_PER_SAMPLE * count;
    for i in 0..count {
        let mut rng = stream(seed, &format!("area/{}", rule.rule_id), i as u64);
        loop {
            if budget == 0 {
                return Err(SimError::Infeasible(format!("rule {}: rejection budget exhausted", rule.rule_id)));
            }
            budget -= 1;
            let p = uniform_in_rect(&mut rng, center, half_extents, yaw);
            let yaw_deg = 180.0 - rng.random_range(0.0..360.0);
            if far_enough(p, &out, min_spacing) {
                out.push(Placement { position: p, yaw: yaw_deg });
                break;
            }
        }
    }
    Ok(out)
}
