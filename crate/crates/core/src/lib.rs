//! Density evolution, potential-function thresholds, outer bounds and a
//! finite-size peeling simulator for coded Poisson receivers and their
//! spatially coupled (convolutional) extension.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod evolution;
pub mod explore;
pub mod mcsim;
pub mod models;
pub mod numeric;
pub mod par;
pub mod potential;

pub use error::{Error, Result};

/// Library version, recorded in every CLI artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
