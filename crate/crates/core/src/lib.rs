//! Mediation analysis for randomized trials where the mediator is not
//! randomized.
//!
//! Sequential ignorability, the assumption behind standard mediation
//! estimators, fails whenever unmeasured confounders drive both mediator
//! and outcome. This crate instead exploits treatment-effect heterogeneity:
//! interactions between baseline covariates and the random assignment serve
//! as instruments for the mediator in a two-stage least-squares fit. The
//! accompanying modules supply weak-instrument diagnostics, a sensitivity
//! analysis over departures from the required homogeneity assumptions, and
//! a simulation lab for validating the estimators against known truth.
//!
//! Entry points:
//! - [`dataset::load_csv`] and [`dataset::build_designs`] for data ingestion
//! - [`estimators::fit_standard`] and [`estimators::fit_two_stage`] for the
//!   regression and instrumented estimators
//! - [`sensitivity::run_grid`] for the sensitivity surface
//! - [`simlab::run_monte_carlo`] for simulation studies

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod sensitivity;
pub mod simlab;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, LeastSquaresSolution, LogisticFit};
