//! Heterogeneity in integration and prediction.
//!
//! Jointly factorizes several data views measured on the same subjects,
//! split into known subgroups, while predicting a multi-class, Poisson or
//! zero-inflated Poisson outcome from the shared low-dimensional scores.
//! Loadings are decomposed into a common part and a subgroup-specific part
//! with block L2,1 penalties on both, so variables can be ranked as common
//! or subgroup-specific signals.
//!
//! The crate is organised around the estimation pipeline:
//!
//! - [`data`]: datasets, outcomes, parameters, standardization and initialization
//! - [`losses`]: objective terms and their closed-form gradients
//! - [`optim`]: the alternating minimization loop and its inner solvers
//! - [`selection`]: variable ranking, subset refits, eBIC and the lambda search
//! - [`predict`]: test-time scores, outcome prediction and evaluation metrics
//! - [`simulate`]: synthetic multi-view benchmark generator
//! - [`io`]: CSV/JSON formats shared with the command-line tool
//! - [`experiment`]: Monte Carlo runner tying the above together

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod losses;
pub mod optim;
pub mod predict;
pub mod selection;
pub mod simulate;

pub use config::{Family, FitConfig, SolverSettings, Standardization};
pub use data::{HipParams, MultiViewDataset, OutcomeData, Subgroup, ViewInfo};
pub use error::{HipError, Result};
