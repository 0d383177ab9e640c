//! Error type shared across the crate.

use thiserror::Error;

/// All recoverable failures. Proposal kernels downgrade geometry and render
/// errors to rejections; everything else surfaces to the caller.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid binding: {0}")]
    InvalidBinding(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("observation contour has no on pixels")]
    EmptyObservation,

    #[error("rendered contour has no on pixels")]
    EmptyRender,

    #[error("depth buffers share no covered pixels")]
    NoOverlap,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
