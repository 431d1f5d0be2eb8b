//! Covariate-adjusted average causal effects on the survival scale.

pub mod adjust;
pub mod error;
pub mod estimators;
pub mod inference;
#[cfg(feature = "cli")]
pub mod io;
pub mod rng;
pub mod simulation;
pub mod survival;

pub use error::{Error, Result};
