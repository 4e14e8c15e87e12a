use thiserror::Error;

/// Every failure the simulation core reports. [`SimError::code`] gives the
/// stable status string clients see on the wire.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("asset not found: {0}")]
    AssetNotFound(String),
    #[error("asset has no geometry: {0}")]
    AssetEmpty(String),
    #[error("mesh extent unavailable for {0}")]
    MeshExtentUnavailable(String),
    #[error("an object named {0:?} already exists")]
    DuplicateObject(String),
    #[error("failed to spawn {obj_id}: {reason}")]
    SpawnFailed { obj_id: String, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("object not found: {0}")]
    ObjectNotFound(String),
    #[error("rotation of {0} is locked")]
    RotationLocked(String),
    #[error("camera not found: {0}")]
    CameraNotFound(u32),
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("world is not empty")]
    WorldNotEmpty,
    #[error("{source_name}:{line}: {message}")]
    Parse { source_name: String, line: usize, message: String },
    #[error("invalid rule {rule_id}: {reason}")]
    InvalidRule { rule_id: String, reason: String },
    #[error("infeasible sampling request: {0}")]
    Infeasible(String),
    #[error("buffer resolution mismatch: {0}")]
    ResolutionMismatch(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::AssetNotFound(_) => "asset_not_found",
            SimError::AssetEmpty(_) => "asset_empty",
            SimError::MeshExtentUnavailable(_) => "mesh_extent_unavailable",
            SimError::DuplicateObject(_) => "object_with_same_name_already_exists",
            SimError::SpawnFailed { .. } => "failed_to_spawn_actor",
            SimError::InvalidArgument(_) => "unknown_argument_format",
            SimError::ObjectNotFound(_) => "object_not_found",
            SimError::RotationLocked(_) => "rotation_locked",
            SimError::CameraNotFound(_) => "camera_not_found",
            SimError::VersionMismatch { .. } => "version_mismatch",
            SimError::WorldNotEmpty => "world_not_empty",
            SimError::Parse { .. } => "parse_error",
            SimError::InvalidRule { .. } => "invalid_rule",
            SimError::Infeasible(_) => "infeasible",
            SimError::ResolutionMismatch(_) => "resolution_mismatch",
            SimError::Degenerate(_) => "degenerate_geometry",
            SimError::Io(_) => "io_error",
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> SimError {
        SimError::Parse { source_name: source_name.into(), line, message: message.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> SimError {
        SimError::InvalidArgument(msg.into())
    }
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
