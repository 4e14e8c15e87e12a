//! Reader for markdown scene specifications: an asset list, room geometry,
//! a final camera pose and placement options.

use std::collections::BTreeMap;

use crate::error::{Result, SimError};
use crate::geometry::{Rotator, Vec3};
use crate::procedural::{ProceduralRule, RuleCategory, RuleGeometry};
use crate::world::CollisionHandling;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneSpec {
    pub title: String,
    /// (label, asset_path) in document order.
    pub assets: Vec<(String, String)>,
    pub floor_corners: Vec<Vec3>,
    pub floor_z: Option<f64>,
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
    pub final_camera_location: Option<Vec3>,
    /// The three numbers exactly as written; see [`SceneSpec::final_camera_rotator`].
    pub final_camera_rotation: Option<[f64; 3]>,
    pub placement_options: BTreeMap<String, String>,
}

const SOURCE: &str = "scene spec";

fn numbers<const N: usize>(s: &str, what: &str, line: usize) -> Result<[f64; N]> {
    let v: Vec<f64> = s
        .split_whitespace()
        .filter(|t| *t != "--")
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| SimError::parse(SOURCE, line, format!("{what}: expected numbers, got {s:?}")))?;
    v.try_into().map_err(|_| SimError::parse(SOURCE, line, format!("{what}: expected {N} numbers")))
}

impl SceneSpec {
    pub fn parse(text: &str) -> Result<SceneSpec> {
        let mut spec = SceneSpec::default();
        let mut section = String::new();
        let mut in_code = false;
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.starts_with("```") {
                in_code = !in_code;
                continue;
            }
            if in_code {
                if section == "room geometry" && !line.is_empty() {
                    spec.floor_corners.push(Vec3::from(numbers::<3>(line, "floor corner", n)?));
                }
                continue;
            }
            if let Some(t) = line.strip_prefix("# ") {
                spec.title = t.trim_start_matches("Scene:").trim().to_string();
                continue;
            }
            if let Some(h) = line.strip_prefix("## ") {
                section = h.trim().to_ascii_lowercase();
                continue;
            }
            let Some((key, value)) = line.trim_start_matches("- ").split_once(':') else {
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            let bullet = line.starts_with("- ");
            match (section.as_str(), key.to_ascii_lowercase().as_str()) {
                ("assets", _) if bullet => spec.assets.push((key.to_string(), value.to_string())),
                (_, "floor z") => spec.floor_z = Some(numbers::<1>(value, key, n)?[0]),
                (_, "x range") => spec.x_range = Some(numbers::<2>(value, key, n)?.into()),
                (_, "y range") => spec.y_range = Some(numbers::<2>(value, key, n)?.into()),
                (_, "final camera location") => spec.final_camera_location = Some(Vec3::from(numbers::<3>(value, key, n)?)),
                (_, "final camera rotation") => spec.final_camera_rotation = Some(numbers::<3>(value, key, n)?),
                ("placement options", k) if bullet => {
                    spec.placement_options.insert(k.to_string(), value.to_string());
                }
                _ => {}
            }
        }
        if in_code {
            return Err(SimError::parse(SOURCE, text.lines().count(), "unterminated code block"));
        }
        Ok(spec)
    }

    pub fn asset(&self, label: &str) -> Option<&str> {
        self.assets.iter().find(|(l, _)| l.eq_ignore_ascii_case(label)).map(|(_, p)| p.as_str())
    }

    /// The final camera rotation read in the wire order [pitch, yaw, roll].
    /// The document does not state its order; this reading is a convention.
    pub fn final_camera_rotator(&self) -> Option<Rotator> {
        self.final_camera_rotation.map(|[p, y, r]| Rotator::new(p, y, r))
    }

    pub fn collision_handling(&self) -> Result<CollisionHandling> {
        match self.placement_options.get("collision_handling").map(String::as_str) {
            None | Some("default") => Ok(CollisionHandling::Default),
            Some("skip_if_colliding") => Ok(CollisionHandling::SkipIfColliding),
            Some("adjust_if_possible") => Ok(CollisionHandling::AdjustIfPossible),
            Some(other) => Err(SimError::invalid(format!("unknown collision_handling {other:?}"))),
        }
    }

    pub fn flag(&self, key: &str) -> bool {
        self.placement_options.get(key).is_some_and(|v| v == "true")
    }

    /// Navigable area spanning the floor corners.
    pub fn floor_rule(&self, rule_id: &str) -> Result<ProceduralRule> {
        if self.floor_corners.len() < 2 {
            return Err(SimError::invalid("scene spec has no floor corners"));
        }
        let (lo, hi) = self.floor_corners.iter().fold(
            (Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY)),
            |(lo, hi), &p| (lo.min(p), hi.max(p)),
        );
        let z = self.floor_z.unwrap_or(lo.z);
        let rule = ProceduralRule {
            rule_id: rule_id.to_string(),
            category: RuleCategory::NavigableArea,
            geometry: RuleGeometry::Rect {
                center: Vec3::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0, z),
                half_extents: [(hi.x - lo.x) / 2.0, (hi.y - lo.y) / 2.0],
                yaw: 0.0,
            },
        };
        rule.validate()?;
        Ok(rule)
    }
}
