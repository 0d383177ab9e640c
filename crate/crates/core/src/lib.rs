//! Scene reconstruction from single contour images by MCMC inversion of
//! procedural CAD models.
//!
//! Two generative programs (lathed objects and articulated bodies) define
//! priors over scenes; a deterministic software rasterizer renders depth
//! and contours; a chamfer-based Gaussian likelihood scores renders against
//! the observed contour; and a mixture of Metropolis-Hastings kernels
//! (single-site, block, data-driven, Hamiltonian) explores the posterior.
//!
//! All numeric code is generic over the scalar type ([`Scalar`]); the
//! aliases below fix the default precision used by the binaries.

pub mod config;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod metrics;
pub mod proposal;
pub mod render;
pub mod scalar;
pub mod scene;

pub use config::ModelConfig;
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default working precision.
pub type Real = f64;

/// Scene trace at default precision.
pub type Trace = scene::SceneTrace<Real>;
/// Triangle mesh at default precision.
pub type Mesh = geometry::TriangleMesh<Real>;
/// Rendered view at default precision.
pub type View = render::RenderedView<Real>;
/// Observation image at default precision.
pub type Observation = likelihood::ObservationImage<Real>;
