pub mod data;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod predictor;
pub mod prior;
pub mod sampler;
pub mod schedule;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
