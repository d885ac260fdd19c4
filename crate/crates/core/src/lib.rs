//! Mark–recapture–recovery models with a continuous, time-varying individual
//! covariate, evaluated as a discretized hidden Markov model.

pub mod domain;
pub mod error;
pub mod inference;
pub mod io;
pub mod kernels;
pub mod likelihood;
pub mod simulation;
pub mod study;

pub use error::{Error, Result};
