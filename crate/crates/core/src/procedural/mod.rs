//! Rule-driven procedural placement and scene generation.

pub mod generate;
pub mod rules;
pub mod sampling;
pub mod spline;

pub use generate::{
    generate_scene, GenerationConfig, GenerationMode, GenerationReport, OcclusionOutcome, OcclusionSpec, PlacementRecord,
    PlacementRole, TargetSpec, ViewpointKind, ViewpointSpec,
};
pub use rules::{load_rules, parse_rules, write_rules, Path3, ProceduralRule, RuleCategory, RuleGeometry};
pub use sampling::{sample_in_area, sample_on_trajectory, Placement};
pub use spline::{spline_point, Spline};
