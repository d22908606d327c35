//! Context-conditioned anomaly detection for categorical tabular data.
//!
//! The crate trains a conditional autoencoder whose latent code is pushed
//! toward a Gaussian prior with an MMD penalty, scores rows by their
//! reconstruction negative log-likelihood, and normalizes scores within
//! automatically selected context groups. It also ships the dataset
//! complexity metrics used to compare benchmark difficulty.

pub mod complexity;
pub mod diff;
pub mod error;
pub mod eval;
pub mod exec;
pub mod model;
pub mod select;
pub mod synth;
pub mod tabular;
pub mod train;

pub use error::{Error, ErrorClass, Result};
