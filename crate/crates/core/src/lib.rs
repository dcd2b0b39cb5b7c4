//! Bayesian inference for naive Bayes log-linear parameters when only
//! Laplace-noised two-way marginal tables are released.
//!
//! The crate is organised bottom-up:
//!
//! * [`statdist`]: special functions, samplers and densities.
//! * [`nbmodel`]: model shapes, parameters, sufficient statistics and the
//!   synthetic data generator.
//! * [`dpmech`]: the Laplace mechanism releasing the K marginal tables.
//! * [`simplexopt`]: a first-order interior-point ascent method on the simplex.
//! * [`vbengine`]: mean-field coordinate ascent on the variational bound.
//! * [`estimators`]: naive, variational and non-private Bayes estimators.
//! * [`expharness`]: the end-to-end simulation study, summaries and plots.
//! * [`io`]: JSON document formats for datasets, releases and posteriors.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dpmech;
pub mod error;
pub mod estimators;
pub mod expharness;
pub mod io;
pub mod nbmodel;
pub mod simplexopt;
pub mod statdist;
pub mod vbengine;

pub use error::{Error, Result};
