//! Zeroth-order stochastic gradient estimation with truncated-Cauchy smoothing.

pub mod analysis;
pub mod bench;
pub mod error;
pub mod estimators;
pub mod objectives;
pub mod optimizer;
pub mod perturbations;
pub mod rng;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use rng::Stream;
