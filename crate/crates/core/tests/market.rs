mod common;

use umstab::market::{
    asset_path, simulate_driver, stochastic_exponential, terminal_deflator, wealth_path, AssetForm, RiskProcess,
    Strategy, TimeGrid,
};
use umstab::stats::weighted_mean;

#[test]
fn terminal_driver_mean_within_clt_band() {
    let n = 1_000_000;
    let ens = simulate_driver(&TimeGrid::uniform(1.0, 1).unwrap(), n, 11, false).unwrap();
    let mean = weighted_mean(&ens.terminal_driver(), None).mean;
    assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "{mean}");
}

#[test]
fn multiplicative_asset_mean_matches_quadrature() {
    let (lambda, horizon) = (0.2, 1.0);
    let ens = simulate_driver(&TimeGrid::uniform(horizon, 8).unwrap(), 200_000, 12, false).unwrap();
    let s = asset_path(&RiskProcess::Constant(lambda), &ens, AssetForm::Multiplicative).unwrap();
    assert!(!s.any_negative());
    let oracle = common::gaussian_expectation(|b| ((lambda - 0.5) * horizon + horizon.sqrt() * b).exp());
    assert!((oracle - (lambda * horizon).exp()).abs() < 1e-10);
    let est = weighted_mean(&s.paths.terminal(), None);
    assert!(est.within(oracle, 3.0), "{est:?} vs {oracle}");
}

fn log_optimal_rms_error(steps: usize) -> f64 {
    let lambda = RiskProcess::Constant(0.3);
    let ens = simulate_driver(&TimeGrid::uniform(1.0, steps).unwrap(), 4000, 13, false).unwrap();
    let x = 2.0;
    let w = wealth_path(&Strategy::LogOptimal(lambda.clone()), &lambda, &ens, x, AssetForm::Multiplicative).unwrap();
    assert!(w.all_admissible());
    let z = terminal_deflator(&lambda, &ens).unwrap();
    let sq: Vec<f64> = w
        .paths
        .terminal()
        .iter()
        .zip(&z)
        .map(|(v, z)| (v * z / x - 1.0).powi(2))
        .collect();
    weighted_mean(&sq, None).mean.sqrt()
}

#[test]
fn log_optimal_wealth_converges_to_inverse_deflator() {
    let coarse = log_optimal_rms_error(16);
    let fine = log_optimal_rms_error(256);
    assert!(fine < 0.02, "{fine}");
    assert!(fine < coarse / 2.0, "{coarse} -> {fine}");
}

#[test]
fn deflator_starts_at_one_for_state_dependent_lambda() {
    let ens = simulate_driver(&TimeGrid::uniform(2.0, 32).unwrap(), 500, 14, false).unwrap();
    let lambda = RiskProcess::state(|t, m| 0.1 + 0.2 * t - 0.5 * m.tanh());
    let z = stochastic_exponential(&lambda, &ens).unwrap();
    assert!(z.column(0).iter().all(|&v| v == 1.0));
    assert!((0..z.n_paths()).all(|i| z.path(i).iter().all(|&v| v > 0.0)));
}
