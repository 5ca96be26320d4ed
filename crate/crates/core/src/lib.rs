#![no_std]
extern crate alloc;

pub mod audit;
pub mod baselines;
pub mod error;
pub mod estimator;
pub mod hermite;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod multigraph;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
