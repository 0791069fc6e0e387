//! Forecasting the success rate of workforce-reintegration programmes from
//! regional labour demand and supply.
//!
//! The pipeline runs in stages, each a module:
//!
//! - [`ingest`]: parse and validate the employment, unemployment, population
//!   and programme-record files;
//! - [`perf`]: per-person success rule and per-region, per-year rates;
//! - [`features`]: demand and supply proxies;
//! - [`model`]: two-predictor least-squares fit (on [`linalg`]);
//! - [`eval`]: leave-one-out evaluation against the historical mean;
//! - [`synth`]: synthetic panels with a known ground truth;
//! - [`report`]: baselined plot data and summaries;
//! - [`cli`]: the `wf` executable.

pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod perf;
pub mod report;
pub mod synth;

pub use error::{Error, Result};

/// Shortest text that parses back to exactly `v`, using an exponent for
/// very small or large magnitudes.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
