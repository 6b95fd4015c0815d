//! Hedged forecast combinations.
//!
//! Combination weights are chosen by minimizing the estimated mean squared
//! error `(w'mu)^2 + w'Sigma w` of the combined forecast subject to
//! `sum(w) = 1` and a gross-exposure bound `||w||_1 <= kappa`. The crate
//! applies this to the trees of a regression random forest and ships the
//! experiment harness used to compare the result against plain averaging and
//! an out-of-bag error weighting.
//!
//! Modules, bottom up:
//!
//! * [`data`]: datasets, TSV ingestion, synthetic Friedman data, splits.
//! * [`forest`]: CART regression trees and the bagged forest.
//! * [`moments`]: mean and covariance estimators for forecast errors.
//! * [`hedge`]: the constrained weight solver, closed-form oracle, baselines.
//! * [`bench`]: repeated train/test evaluation, ratios and summaries.

pub mod bench;
pub mod data;
mod error;
pub mod forest;
pub mod hedge;
pub mod moments;

pub use error::{Error, Result};
