//! Causal effect estimation when a binary exposure is missing at random.
//!
//! The pipeline multiply imputes the missing exposure, fits a propensity
//! score model on every completed dataset, estimates the effect by inverse
//! probability weighting or the doubly robust estimator, and pools across
//! imputations. Candidate (imputation model, propensity model) pairs are
//! scored by weighted imputation accuracy, outcome-model BIC, balance
//! statistics and the rank score, and the best pair is selected.

pub mod bootstrap;
pub mod cli;
pub mod criteria;
pub mod data;
pub mod error;
pub mod formula;
pub mod estimators;
pub mod glm;
pub mod imputation;
pub mod seed;
pub mod selection;
pub mod simulation;

pub use error::{Error, Result};
