use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A scene, rig, or config file failed to parse or violated an invariant.
    /// `entity` names the offending object (file, box index, mount name).
    #[error("failed to load {entity}: {reason}")]
    Load { entity: String, reason: String },

    /// A queried object does not exist (e.g. classify on an absent voxel).
    #[error("not found: {0}")]
    NotFound(String),

    /// The planner could not find a collision-free sample within its attempt
    /// budget; the episode cannot continue.
    #[error("planning stuck: {0}")]
    PlanningStuck(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn load(entity: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Load {
            entity: entity.into(),
            reason: reason.into(),
        }
    }
}
