//! Top-down statistical modelling of power line communication channels.
//!
//! A reference ensemble of measured channel frequency responses (SISO or
//! MIMO) is reduced to a small set of statistics: the mean and covariance of
//! the log-amplitude, the normalized covariance of the wrapped phase (SISO),
//! and the distribution of unwrapped phase slopes (MIMO). New realizations
//! are drawn from those statistics so that the synthetic ensemble matches the
//! reference in covariance structure, delay spread, coherence bandwidth and
//! capacity distribution.
//!
//! Pipeline: [`data_model`] (ingest, log transform, MIMO flattening) →
//! [`estimation`] → [`generator`] (built on [`copula`]) → [`metrics`] →
//! [`validation`].

pub mod copula;
pub mod data_model;
pub mod error;
pub mod estimation;
pub mod fixtures;
pub mod generator;
pub mod metrics;
pub mod rng;
pub mod validation;

pub use error::{Error, Result};

pub use num_complex::Complex64;
