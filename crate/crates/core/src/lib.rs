//! Pairwise-contrast regression estimators for completely randomized experiments.

pub mod analysis;
pub mod contrasts;
pub mod error;
pub mod estimators;
pub mod lsq;
pub mod oracle;
pub mod pairs;
pub mod simlab;
pub mod validation;
pub mod variance;
pub mod workflow;

pub use error::{Error, Result};
