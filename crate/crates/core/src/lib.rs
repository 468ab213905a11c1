pub mod autonet;
pub mod channel;
pub mod codebook;
pub mod config;
pub mod datapipe;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod sensing;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix64 = linalg::ComplexMatrix<f64>;
pub type Matrix32 = linalg::ComplexMatrix<f32>;
pub type Params64 = autonet::AutoPrecoderParams<f64>;
pub type Params32 = autonet::AutoPrecoderParams<f32>;
