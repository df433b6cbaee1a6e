//! Monte Carlo and convex-duality machinery for utility maximization in
//! continuous-semimartingale markets, together with diagnostics that measure
//! how optimal wealth and value functions react to perturbations of the
//! market price of risk.
//!
//! The crate is organised bottom-up:
//!
//! * [`market`] simulates Brownian drivers, deflators, asset and wealth paths.
//! * [`preferences`] holds utility functions and their convex conjugates.
//! * [`duality`] solves complete markets via the budget multiplier and bounds
//!   incomplete-market dual values with parametric orthogonal densities.
//! * [`stability`] measures convergence in probability and uniform
//!   integrability across sequences of markets.
//! * [`worked_examples`] contains the log-investor identity and the
//!   instability counterexample.
//! * [`config`] is the serializable experiment description used by the CLI.

pub mod config;
pub mod duality;
mod error;
pub mod market;
pub mod normal;
pub mod preferences;
pub mod stability;
pub mod stats;
pub mod worked_examples;

pub use error::{Error, PartialSums, Result};

/// Crate version, echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
