//! Permutation-test driven variable selection for multivariate calibration
//! data, with multivariate-Lasso and Ridge baselines and a benchmark harness.
//!
//! The crate is organized as a small pipeline:
//!
//! 1. [`dataset`] — sample/repetition/variable containers, CSV ingestion,
//!    train/validation splitting, repetition averaging.
//! 2. [`synth`] — synthetic design-of-experiments mixture spectra with known
//!    informative variables.
//! 3. [`permtest`] — exact and Monte-Carlo two-sample permutation tests over
//!    all training-sample pairs.
//! 4. [`multiplicity`] — Benjamini-Hochberg FDR adjustment, significance
//!    counting, cutoff selection, band summaries.
//! 5. [`linmod`] — standardization, Ridge and coordinate-descent Lasso,
//!    cross-validated regularization, MAE evaluation.
//! 6. [`pipeline`] — end-to-end orchestration, strategy comparison, and
//!    report emission; [`cli`] exposes it as a command-line tool.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod linmod;
pub mod multiplicity;
pub mod permtest;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
