//! Injury-severity discrete choice estimation.
//!
//! Multinomial logit and mixed (random-parameters) logit models over a three-level
//! severity choice set, fitted by (simulated) maximum likelihood with Halton draws,
//! plus marginal effects, normal-share decompositions of random coefficients, and the
//! likelihood-ratio battery used to decide whether area/lighting segment models are
//! warranted over pooled ones.
//!
//! Module map:
//!
//! - [`domain`]: severity scales, segment keys, datasets, partitioning, descriptive statistics
//! - [`ingest`]: CSV parsing against a declared schema, covariate transforms, validation
//! - [`numeric`]: Halton sequences, normal CDF/quantile, chi-square quantiles
//! - [`model`]: utilities, MNL and simulated probabilities, log-likelihood and gradient
//! - [`estimate`]: BFGS fitting, covariance, t/p values, pseudo-R², retention rules
//! - [`inference`]: marginal effects and random-coefficient shares
//! - [`modeltests`]: partition and transfer LR tests, Hausman–McFadden IIA test, battery
//! - [`synth`]: synthetic data generation and independent oracles

pub mod domain;
pub mod error;
pub mod estimate;
pub mod inference;
pub mod ingest;
pub mod model;
pub mod modeltests;
pub mod numeric;
pub mod synth;

mod linalg;
mod sum;

pub use error::{Error, Result};
