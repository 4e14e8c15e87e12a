pub mod accel;
pub mod catalog;
pub mod error;
pub mod examiner;
pub mod exec;
pub mod fixtures;
pub mod geometry;
pub mod mesh;
pub mod obj;
pub mod procedural;
pub mod render;
pub mod rng;
pub mod scene_spec;
pub mod truth;
pub mod world;

pub use error::{Result, SimError};
