//! Procedural rule files.
//!
//! Line-oriented text; `#` starts a comment. The first record must be
//! `version 1`. Each following record is one of
//!
//! ```text
//! line   <rule_id> <category> x y z ; x y z
//! spline <rule_id> <category> x y z ; x y z ; ...
//! rect   <rule_id> <category> center x y z half hx hy [yaw deg]
//! rect   <rule_id> <category> corners x y z ; x y z ; ...
//! ```
//!
//! `corners` takes the axis-aligned bounds of the listed points, which must
//! share one Z. Categories are `road_area`, `navigable_area`,
//! `vehicle_trajectory` and `pedestrian_trajectory`.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spline::{point_segment_distance, Spline};
use crate::error::{Result, SimError};
use crate::geometry::Vec3;

pub const RULE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleCategory {
    RoadArea,
    NavigableArea,
    VehicleTrajectory,
    PedestrianTrajectory,
}

impl RuleCategory {
    pub fn parse(s: &str) -> Option<RuleCategory> {
        Some(match s {
            "road_area" => RuleCategory::RoadArea,
            "navigable_area" => RuleCategory::NavigableArea,
            "vehicle_trajectory" => RuleCategory::VehicleTrajectory,
            "pedestrian_trajectory" => RuleCategory::PedestrianTrajectory,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            RuleCategory::RoadArea => "road_area",
            RuleCategory::NavigableArea => "navigable_area",
            RuleCategory::VehicleTrajectory => "vehicle_trajectory",
            RuleCategory::PedestrianTrajectory => "pedestrian_trajectory",
        }
    }

    pub fn is_area(self) -> bool {
        matches!(self, RuleCategory::RoadArea | RuleCategory::NavigableArea)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleGeometry {
    Line { start: Vec3, end: Vec3 },
    Spline { anchors: Vec<Vec3> },
    Rect { center: Vec3, half_extents: [f64; 2], yaw: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProceduralRule {
    pub rule_id: String,
    pub category: RuleCategory,
    pub geometry: RuleGeometry,
}

impl ProceduralRule {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| SimError::InvalidRule { rule_id: self.rule_id.clone(), reason };
        let is_area_geom = matches!(self.geometry, RuleGeometry::Rect { .. });
        if self.category.is_area() != is_area_geom {
            return Err(bad(format!(
                "category {} is incompatible with {} geometry",
                self.category.name(),
                if is_area_geom { "rect" } else { "trajectory" }
            )));
        }
        match &self.geometry {
            RuleGeometry::Line { start, end } => {
                if !start.is_finite() || !end.is_finite() || start.distance(*end) <= 1e-9 {
                    return Err(bad("line needs two distinct finite anchors".into()));
                }
            }
            RuleGeometry::Spline { anchors } => {
                if anchors.len() < 2 {
                    return Err(bad("spline needs at least two anchors".into()));
                }
                if anchors.iter().any(|a| !a.is_finite()) || anchors.windows(2).any(|w| w[0].distance(w[1]) <= 1e-9) {
                    return Err(bad("consecutive spline anchors must be distinct and finite".into()));
                }
            }
            RuleGeometry::Rect { center, half_extents, yaw } => {
                if !center.is_finite() || !yaw.is_finite() || half_extents.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
                    return Err(bad("rect needs a finite center and positive half extents".into()));
                }
            }
        }
        Ok(())
    }

    pub fn anchors(&self) -> Vec<Vec3> {
        match &self.geometry {
            RuleGeometry::Line { start, end } => vec![*start, *end],
            RuleGeometry::Spline { anchors } => anchors.clone(),
            RuleGeometry::Rect { center, .. } => vec![*center],
        }
    }

    /// Area in square meters (rect rules) or 0.
    pub fn area_m2(&self) -> f64 {
        match self.geometry {
            RuleGeometry::Rect { half_extents, .. } => 4.0 * half_extents[0] * half_extents[1] / 1e4,
            _ => 0.0,
        }
    }

    /// Path for trajectory rules.
    pub fn path(&self) -> Option<Path3> {
        match &self.geometry {
            RuleGeometry::Line { start, end } => Some(Path3::Line(*start, *end)),
            RuleGeometry::Spline { anchors } => Spline::new(anchors).ok().map(Path3::Spline),
            RuleGeometry::Rect { .. } => None,
        }
    }

    /// Whether `p` lies in the rule's region: inside the rect (XY, with a
    /// tolerance in cm) or within `tol` of the trajectory.
    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        match &self.geometry {
            RuleGeometry::Rect { center, half_extents, yaw } => {
                let l = to_rect_local(p, *center, *yaw);
                l.0.abs() <= half_extents[0] + tol && l.1.abs() <= half_extents[1] + tol
            }
            _ => self.path().is_some_and(|path| path.distance_to(p) <= tol),
        }
    }
}

/// XY offset of `p` from `center` in the frame rotated by `yaw`.
pub(crate) fn to_rect_local(p: Vec3, center: Vec3, yaw: f64) -> (f64, f64) {
    let (s, c) = yaw.to_radians().sin_cos();
    let (dx, dy) = (p.x - center.x, p.y - center.y);
    (c * dx + s * dy, -s * dx + c * dy)
}

/// A trajectory: straight line or spline.
#[derive(Debug, Clone)]
pub enum Path3 {
    Line(Vec3, Vec3),
    Spline(Spline),
}

impl Path3 {
    pub fn length(&self) -> f64 {
        match self {
            Path3::Line(a, b) => a.distance(*b),
            Path3::Spline(s) => s.length(),
        }
    }

    /// Point and unit tangent at arc length `len`.
    pub fn at_length(&self, len: f64) -> (Vec3, Vec3) {
        match self {
            Path3::Line(a, b) => {
                let d = (*b - *a).normalize();
                (*a + d * len.clamp(0.0, self.length()), d)
            }
            Path3::Spline(s) => s.point_at_length(len),
        }
    }

    pub fn distance_to(&self, p: Vec3) -> f64 {
        match self {
            Path3::Line(a, b) => point_segment_distance(p, *a, *b),
            Path3::Spline(s) => s.distance_to(p),
        }
    }
}

fn parse_vec3(tokens: &[&str]) -> std::result::Result<Vec3, String> {
    if tokens.len() != 3 {
        return Err(format!("expected 3 coordinates, got {}", tokens.len()));
    }
    let mut v = [0.0; 3];
    for (slot, t) in v.iter_mut().zip(tokens) {
        *slot = t.parse::<f64>().map_err(|_| format!("bad number {t:?}"))?;
        if !slot.is_finite() {
            return Err(format!("non-finite number {t:?}"));
        }
    }
    Ok(Vec3::from(v))
}

fn parse_points(rest: &[&str]) -> std::result::Result<Vec<Vec3>, String> {
    let joined = rest.join(" ");
    joined
        .split(';')
        .map(|chunk| parse_vec3(&chunk.split_whitespace().collect::<Vec<_>>()))
        .collect()
}

fn parse_number(tok: Option<&&str>, what: &str) -> std::result::Result<f64, String> {
    let t = tok.ok_or_else(|| format!("missing {what}"))?;
    let v = t.parse::<f64>().map_err(|_| format!("bad {what} {t:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite {what}"))
    }
}

fn parse_rect(rest: &[&str]) -> std::result::Result<RuleGeometry, String> {
    match rest.first().copied() {
        Some("center") => {
            let center = parse_vec3(rest.get(1..4).ok_or("center needs x y z")?)?;
            if rest.get(4).copied() != Some("half") {
                return Err("expected `half hx hy` after center".into());
            }
            let hx = parse_number(rest.get(5), "half extent")?;
            let hy = parse_number(rest.get(6), "half extent")?;
            let yaw = match rest.get(7).copied() {
                None => 0.0,
                Some("yaw") => parse_number(rest.get(8), "yaw")?,
                Some(t) => return Err(format!("unexpected token {t:?}")),
            };
            let used = if rest.len() > 7 { 9 } else { 7 };
            if rest.len() > used {
                return Err(format!("unexpected token {:?}", rest[used]));
            }
            Ok(RuleGeometry::Rect { center, half_extents: [hx, hy], yaw })
        }
        Some("corners") => {
            let pts = parse_points(&rest[1..])?;
            if pts.len() < 2 {
                return Err("corners needs at least two points".into());
            }
            let z = pts[0].z;
            if pts.iter().any(|p| (p.z - z).abs() > 1e-9) {
                return Err("corner points must share one Z".into());
            }
            let (lo, hi) = pts.iter().fold((pts[0], pts[0]), |(lo, hi), p| (lo.min(*p), hi.max(*p)));
            Ok(RuleGeometry::Rect {
                center: Vec3::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0, z),
                half_extents: [(hi.x - lo.x) / 2.0, (hi.y - lo.y) / 2.0],
                yaw: 0.0,
            })
        }
        _ => Err("rect needs `center ...` or `corners ...`".into()),
    }
}

/// Parses and validates a rule file.
pub fn parse_rules(text: &str, source_name: &str) -> Result<Vec<ProceduralRule>> {
    let mut rules = Vec::new();
    let mut ids = HashSet::new();
    let mut version_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| SimError::parse(source_name, lineno, m);
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if !version_seen {
            if tokens.len() == 2 && tokens[0] == "version" {
                let v: u32 = tokens[1].parse().map_err(|_| err(format!("bad version {:?}", tokens[1])))?;
                if v != RULE_FORMAT_VERSION {
                    return Err(SimError::VersionMismatch { found: v, expected: RULE_FORMAT_VERSION });
                }
                version_seen = true;
                continue;
            }
            return Err(err("rule file must start with `version 1`".into()));
        }
        if tokens.len() < 3 {
            return Err(err("expected `<kind> <rule_id> <category> ...`".into()));
        }
        let (kind, rule_id, cat) = (tokens[0], tokens[1], tokens[2]);
        let category = RuleCategory::parse(cat).ok_or_else(|| err(format!("unknown category {cat:?}")))?;
        let rest = &tokens[3..];
        let geometry = match kind {
            "line" => {
                let pts = parse_points(rest).map_err(err)?;
                if pts.len() != 2 {
                    return Err(err(format!("line needs exactly 2 points, got {}", pts.len())));
                }
                RuleGeometry::Line { start: pts[0], end: pts[1] }
            }
            "spline" => RuleGeometry::Spline { anchors: parse_points(rest).map_err(err)? },
            "rect" => parse_rect(rest).map_err(err)?,
            other => return Err(err(format!("unknown rule kind {other:?}"))),
        };
        if !ids.insert(rule_id.to_string()) {
            return Err(err(format!("duplicate rule_id {rule_id:?}")));
        }
        let rule = ProceduralRule { rule_id: rule_id.to_string(), category, geometry };
        rule.validate()?;
        rules.push(rule);
    }
    if !version_seen {
        return Err(SimError::parse(source_name, 1, "rule file must start with `version 1`"));
    }
    Ok(rules)
}

pub fn load_rules(path: impl AsRef<Path>) -> Result<Vec<ProceduralRule>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    parse_rules(&text, &path.display().to_string())
}

/// Renders rules back into the file format.
pub fn write_rules(rules: &[ProceduralRule]) -> String {
    let pts = |v: &[Vec3]| v.iter().map(|p| format!("{} {} {}", p.x, p.y, p.z)).collect::<Vec<_>>().join(" ; ");
    let mut out = format!("version {RULE_FORMAT_VERSION}\n");
    for r in rules {
        let body = match &r.geometry {
            RuleGeometry::Line { start, end } => format!("line {} {} {}", r.rule_id, r.category.name(), pts(&[*start, *end])),
            RuleGeometry::Spline { anchors } => format!("spline {} {} {}", r.rule_id, r.category.name(), pts(anchors)),
            RuleGeometry::Rect { center, half_extents, yaw } => format!(
                "rect {} {} center {} half {} {} yaw {}",
                r.rule_id,
                r.category.name(),
                pts(&[*center]),
                half_extents[0],
                half_extents[1],
                yaw
            ),
        };
        out.push_str(&body);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_area_rule() {
        let r = parse_rules("version 1\nrect floor navigable_area center 0 0 0 half 200 200\n", "t").unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].category, RuleCategory::NavigableArea);
    }

    #[test]
    fn incompatible_category_rejected() {
        let err = parse_rules("version 1\nrect r vehicle_trajectory center 0 0 0 half 1 1\n", "t").unwrap_err();
        assert_eq!(err.code(), "invalid_rule");
        let err = parse_rules("version 1\nline r road_area 0 0 0 ; 1 0 0\n", "t").unwrap_err();
        assert_eq!(err.code(), "invalid_rule");
    }

    #[test]
    fn loft_floor_from_corners() {
        let text = "version 1\n# loft floor\nrect floor navigable_area corners 420 -410 -20 ; 420 180 -20 ; 869 180 -20 ; 869 -410 -20\n";
        let r = parse_rules(text, "t").unwrap();
        match r[0].geometry {
            RuleGeometry::Rect { center, half_extents, yaw } => {
                assert_eq!(center, Vec3::new(644.5, -115.0, -20.0));
                assert_eq!(half_extents, [224.5, 295.0]);
                assert_eq!(yaw, 0.0);
            }
            ref g => panic!("{g:?}"),
        }
        assert!((r[0].area_m2() - 26.491).abs() < 1e-3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        for (text, line) in [
            ("version 1\n\nline a vehicle_trajectory 0 0 ; 1 0 0\n", 3),
            ("line a vehicle_trajectory 0 0 0 ; 1 0 0\n", 1),
            ("version 1\nline a vehicle_trajectory 0 0 0 ; 1 0 0\nline a vehicle_trajectory 0 0 0 ; 1 0 0\n", 3),
            ("version 1\nblob a road_area\n", 2),
            ("version 1\nrect a road_area center 0 0 0 half 1\n", 2),
        ] {
            match parse_rules(text, "t").unwrap_err() {
                SimError::Parse { line: l, .. } => assert_eq!(l, line, "{text}"),
                e => panic!("{text}: {e:?}"),
            }
        }
        assert_eq!(parse_rules("version 2\n", "t").unwrap_err().code(), "version_mismatch");
        assert_eq!(
            parse_rules("version 1\nspline s pedestrian_trajectory 0 0 0 ; 0 0 0\n", "t").unwrap_err().code(),
            "invalid_rule"
        );
    }

    #[test]
    fn write_then_parse_round_trips() {
        let text = "version 1\nline l vehicle_trajectory 0 0 0 ; 1000 0 0\nspline s pedestrian_trajectory 0 0 0 ; 100 50 0 ; 200 0 0\nrect r road_area center 1 2 3 half 4 5 yaw 30\n";
        let rules = parse_rules(text, "t").unwrap();
        assert_eq!(parse_rules(&write_rules(&rules), "t").unwrap(), rules);
    }

    #[test]
    fn containment() {
        let rules = parse_rules("version 1\nrect r road_area center 0 0 0 half 100 10 yaw 90\n", "t").unwrap();
        assert!(rules[0].contains(Vec3::new(5.0, 90.0, 0.0), 0.0));
        assert!(!rules[0].contains(Vec3::new(90.0, 5.0, 0.0), 0.0));
    }
}
