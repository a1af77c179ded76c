//! Efficient interim analysis for two-arm randomized trials with a binary
//! primary endpoint.
//!
//! The crate covers the whole decision pipeline of a trial with a single
//! interim look:
//!
//! - [`glm`]: canonical GLM fitting (IRLS) used for the outcome working
//!   models, plus the normal CDF/quantile shared by every formula.
//! - [`estimator`]: cohort partition of an interim snapshot and the augmented
//!   estimator that imputes missing primary outcomes from baseline covariates
//!   and a short-term endpoint, with its influence-function variance.
//! - [`monitoring`]: information fractions (unblinded and blinded), Z and B
//!   statistics, conditional power and futility boundaries.
//! - [`adaptive`]: inverse-normal combination test and conditional-power based
//!   sample size reassessment.
//! - [`sim`]: generative model, recruitment calendar and a reproducible
//!   Monte Carlo harness for operating characteristics.

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod error;
pub mod estimator;
pub mod glm;
pub mod monitoring;
pub mod sim;

pub use error::{Error, Result};
pub use glm::normal;
