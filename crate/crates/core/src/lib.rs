//! Covering-number generalization bounds for constant-step SGD.

pub mod bounds;
pub mod cover;
pub mod data;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod rng;
pub mod sgd;

pub use error::{Error, Result};
