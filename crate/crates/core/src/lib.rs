//! Spectral backtests of forecast distributions from reported PIT values.
//!
//! A forecast model reports, for each day, the probability level of the
//! realized loss in the prior day's predictive distribution (the PIT value).
//! Under an ideal forecaster these values are iid uniform. This crate
//! implements weighted-exceedance transforms of PIT values driven by kernel
//! measures on the unit interval, together with the test statistics built on
//! them:
//!
//! - [`kernels`]: kernel measures, the transform `W = G(P)`, and exact
//!   null moments and cross-moments;
//! - [`unconditional`]: Z-tests (mono- and multi-spectral), the binomial
//!   score test, Pearson and multinomial likelihood-ratio tests, the censored
//!   probitnormal LR test and the truncated probitnormal score test;
//! - [`conditional`]: martingale-difference regression tests of conditional
//!   coverage with configurable conditioning-variable transformations;
//! - [`simulation`]: data-generating processes and a reproducible Monte
//!   Carlo size/power harness;
//! - [`ingestion`]: CSV loading, spurious-PIT detection and imputation;
//! - [`special`]: the scalar special functions everything else rests on.

pub mod conditional;
pub mod error;
pub mod ingestion;
pub mod kernels;
pub mod quad;
pub mod series;
pub mod simulation;
pub mod special;
pub mod unconditional;

pub use error::Error;
pub use series::PitSeries;
pub use unconditional::TestResult;
