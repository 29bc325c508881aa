pub mod baselines;
pub mod cli;
pub mod config;
pub mod data;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod memory;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensor_core;
pub mod trainer;

pub use error::{ChimeError, Result};
