//! Brownian-driven market family `S = 1 + M + ∫λ d⟨M⟩` on a discrete grid.
//!
//! Every quantity is computed pathwise on a shared [`PathEnsemble`], so two
//! markets evaluated on the same ensemble are coupled and their terminal
//! quantities can be compared sample by sample.

mod ensemble;
mod grid;
mod norms;
mod paths;
mod risk;

pub use ensemble::{simulate_driver, simulate_driver_tilted, DriftMixture, DriverPath, PathEnsemble};
pub use grid::TimeGrid;
pub use norms::{l2_mu_m_distance_squared, l2_mu_m_monte_carlo, l2_mu_m_norm_squared, ucp_distance};
pub use paths::{
    asset_path, log_terminal_deflator, stochastic_exponential, terminal_deflator, wealth_path,
    AssetForm, AssetPaths, ProcessPaths, Strategy, StrategyState, WealthPaths,
};
pub use risk::RiskProcess;
