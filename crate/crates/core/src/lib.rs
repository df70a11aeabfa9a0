pub mod acquisition;
pub mod benchmarks;
pub mod cli;
pub mod engine;
pub mod error;
pub mod generative;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod nnet;
pub mod rng;
pub mod scalarize;

pub use error::{Error, Result};
