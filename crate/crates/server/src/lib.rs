//! Network and MCP front ends for a simulation world.

pub mod dispatch;
pub mod mcp;
pub mod protocol;
pub mod schema;
pub mod serve;

pub use dispatch::Dispatcher;
pub use protocol::{Request, Response, Tensor};
