//! Field-normalised citation impact (MNLCS) with Fieller-type confidence
//! intervals, and the temporal stability experiment built on top of them.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the shared domain types (records, cohorts, estimates).
//! * [`counting`] assigns articles to national groups (inclusive/exclusive).
//! * [`indicator`] computes log statistics and the MNLCS ratio.
//! * [`fieller`] turns a ratio into a 95% interval, including the Student-t
//!   quantile numerics.
//! * [`bootstrap`] estimates the no-change (lag-0) coverage by split-half
//!   resampling, and the two-sample normal coverage simulation.
//! * [`stability`] runs the year-offset comparisons and builds curves/series.
//! * [`synth`] generates synthetic cohorts under the capability model.
//! * [`io`] and [`experiment`] handle CSV files, manifests and the full run.
//!
//! Data-parallel loops go through [`exec`]; with the `parallel` feature
//! disabled everything runs sequentially and produces identical output.

pub mod bootstrap;
pub mod counting;
pub mod countries;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod fieller;
pub mod indicator;
pub mod io;
pub mod model;
pub mod rng;
pub mod stability;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{
    CitationRecord, Cohort, CountryCode, GroupSelection, LogStats, MnlcsEstimate, Scheme, Validity,
};
