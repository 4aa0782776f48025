pub mod error;
pub mod augmentation;
pub mod data;
pub mod evaluation;
pub mod geometry;
pub mod image;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod rng;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Homography in double precision.
pub type Homography = geometry::HomographyMatrix<f64>;
/// Transform parameters in double precision.
pub type Params = geometry::TransformParams<f64>;
/// Single-precision model, the default for training.
pub type Bundle = model::ModelBundle<f32>;
pub type Bundle64 = model::ModelBundle<f64>;
pub type Trainer32 = training::Trainer<f32>;
pub type Trainer64 = training::Trainer<f64>;
