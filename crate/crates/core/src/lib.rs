//! Bayesian latent-class phenotyping from electronic health records.
//!
//! Each patient carries a binary latent phenotype `D_i` that drives biomarker
//! availability, biomarker values, clinical codes and medications. The crate
//! provides the marginal likelihood, a Metropolis-within-Gibbs sampler, a
//! mean-field stochastic variational engine with best-iterate stopping, a
//! synthetic cohort generator, and posterior / goodness-of-fit diagnostics.

pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod draws;
pub mod error;
pub mod fit_io;
pub mod gibbs;
pub mod math;
pub mod model;
pub mod report;
pub mod synth;
pub mod vb;

pub use error::{Error, Result};
