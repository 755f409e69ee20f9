//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty target cloud")]
    EmptyTargetCloud,

    #[error("empty point cloud: {0}")]
    EmptyCloud(&'static str),

    #[error("invalid turbine parameters: {0}")]
    InvalidTurbineParams(&'static str),

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("nothing to match")]
    NothingToMatch,

    #[error("unsafe standoff: {0}")]
    UnsafeStandoff(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("malformed {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
