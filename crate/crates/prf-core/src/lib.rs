//! Simulation laboratory for purely random forest regression.
//!
//! The crate has three layers:
//!
//! - samplers for random-partition models of the unit cube ([`models`]) and
//!   the regressogram/forest estimators built on them ([`estimators`]);
//! - closed-form moment and bound oracles for those models ([`oracles`]);
//! - Monte Carlo engines that estimate the bias/variance decomposition of
//!   forests ([`bias`]), the equivalent smoothing kernel ([`kernel`]) and
//!   log-log convergence rates ([`rates`]), all deterministic for a fixed
//!   master seed at any worker count ([`seeding`]).

pub mod bias;
pub mod checks;
pub mod error;
pub mod estimators;
pub mod functions;
pub mod geometry;
pub mod kernel;
pub mod models;
pub mod oracles;
pub mod quad;
pub mod rates;
pub mod seeding;

pub use error::{Error, Result};
