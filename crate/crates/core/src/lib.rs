//! Differentiable 4D Gaussian splatting for sparse-camera dynamic scenes,
//! with visibility-gated, learned opacity decay.

pub mod bounds;
pub mod camera;
pub mod decaynet;
pub mod error;
pub mod gaussian;
pub mod gradcheck;
pub mod image;
pub mod io;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod raster;
pub mod scalar;
pub mod scenegen;
pub mod sh;
pub mod trainer;
pub mod visibility;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision Gaussian, the training and storage type.
pub type Gaussian4Df = gaussian::Gaussian4D<f32>;
/// Double-precision Gaussian, used by oracles and gradient checks.
pub type Gaussian4Dd = gaussian::Gaussian4D<f64>;
pub type DecayNetF = decaynet::DecayNet<f32>;
pub type DecayNetD = decaynet::DecayNet<f64>;
pub type TrainerF = trainer::Trainer<f32>;
pub type TrainerD = trainer::Trainer<f64>;
pub type ImageF = image::Image<f32>;
pub type ImageD = image::Image<f64>;
