use rayon::prelude::*;

use super::{PathEnsemble, RiskProcess};
use crate::stability::ky_fan_distance_weighted;
use crate::stats::{weighted_mean, Estimate};
use crate::{Error, Result};

const SIMPSON_PANELS: usize = 2048;

fn simpson(f: impl Fn(f64) -> f64, horizon: f64) -> f64 {
    let h = horizon / SIMPSON_PANELS as f64;
    let mut acc = f(0.0) + f(horizon);
    for j in 1..SIMPSON_PANELS {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(j as f64 * h);
    }
    acc * h / 3.0
}

/// Monte Carlo estimate of `E Σ_k (λᵃ_k - λᵇ_k)² Δ⟨M⟩_k` on the ensemble,
/// regardless of whether a closed form exists.
pub fn l2_mu_m_monte_carlo(a: &RiskProcess, b: &RiskProcess, ens: &PathEnsemble) -> Result<Estimate> {
    if !a.is_path_level() || !b.is_path_level() {
        return Err(Error::Unsupported("l2_mu_m distance"));
    }
    let times = ens.grid().times();
    let per_path: Vec<f64> = (0..ens.n_paths())
        .into_par_iter()
        .map(|i| {
            let path = ens.path(i);
            let la = a.interval_values(times, path);
            let lb = b.interval_values(times, path);
            la.iter()
                .zip(&lb)
                .zip(path.qv_increments)
                .map(|((x, y), dq)| (x - y) * (x - y) * dq)
                .sum()
        })
        .collect();
    Ok(weighted_mean(&per_path, ens.weights()))
}

/// `‖λᵃ - λᵇ‖²` in `L²(μ^M)`, i.e. `E ∫ (λᵃ - λᵇ)² d⟨M⟩`.
///
/// Two constants give `(a - b)² T` exactly; other deterministic pairs are
/// integrated in time with composite Simpson (exact for linear `λ`);
/// anything path-dependent falls back to [`l2_mu_m_monte_carlo`].
pub fn l2_mu_m_distance_squared(
    a: &RiskProcess,
    b: &RiskProcess,
    ens: &PathEnsemble,
) -> Result<Estimate> {
    let horizon = ens.grid().horizon();
    match (a, b) {
        (RiskProcess::Constant(x), RiskProcess::Constant(y)) => {
            Ok(Estimate::exact((x - y) * (x - y) * horizon))
        }
        _ if a.is_deterministic() && b.is_deterministic() => Ok(Estimate::exact(simpson(
            |t| {
                let d = a.deterministic_at(t).unwrap() - b.deterministic_at(t).unwrap();
                d * d
            },
            horizon,
        ))),
        _ => l2_mu_m_monte_carlo(a, b, ens),
    }
}

/// Squared `L²(μ^M)` norm `E ∫ λ² d⟨M⟩`.
pub fn l2_mu_m_norm_squared(lambda: &RiskProcess, ens: &PathEnsemble) -> Result<f64> {
    Ok(l2_mu_m_distance_squared(lambda, &RiskProcess::zero(), ens)?.mean)
}

/// Ky Fan functional of `sup_{t ∈ grid} |λᵃ_t - λᵇ_t|` across paths.
pub fn ucp_distance(a: &RiskProcess, b: &RiskProcess, ens: &PathEnsemble) -> Result<f64> {
    if !a.is_path_level() || !b.is_path_level() {
        return Err(Error::Unsupported("ucp_distance"));
    }
    let times = ens.grid().times();
    let sups: Vec<f64> = (0..ens.n_paths())
        .into_par_iter()
        .map(|i| {
            let path = ens.path(i);
            a.point_values(times, path)
                .iter()
                .zip(b.point_values(times, path))
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        })
        .collect();
    let zeros = vec![0.0; sups.len()];
    ky_fan_distance_weighted(&sups, &zeros, ens.weights())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{simulate_driver, TimeGrid};

    fn ens() -> PathEnsemble {
        simulate_driver(&TimeGrid::uniform(1.0, 64).unwrap(), 20_000, 21, false).unwrap()
    }

    #[test]
    fn constant_norm_is_exact() {
        let e = ens();
        assert_eq!(l2_mu_m_norm_squared(&RiskProcess::zero(), &e).unwrap(), 0.0);
        assert!((l2_mu_m_norm_squared(&RiskProcess::Constant(0.2), &e).unwrap() - 0.04).abs() < 1e-16);
    }

    #[test]
    fn linear_norm_is_one_third_and_monte_carlo_agrees() {
        let e = ens();
        let lam = RiskProcess::Linear {
            intercept: 0.0,
            slope: 1.0,
        };
        let exact = l2_mu_m_norm_squared(&lam, &e).unwrap();
        assert!((exact - 1.0 / 3.0).abs() < 1e-14);
        let closure = RiskProcess::deterministic(|t| t);
        assert!((l2_mu_m_norm_squared(&closure, &e).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        // Left-endpoint Riemann sum: Σ t_k² Δt = 1/3 - 1/(2K) + 1/(6K²).
        let mc = l2_mu_m_monte_carlo(&lam, &RiskProcess::zero(), &e).unwrap();
        let k = 64.0;
        assert!((mc.mean - (1.0 / 3.0 - 0.5 / k + 1.0 / (6.0 * k * k))).abs() < 1e-12);
    }

    #[test]
    fn state_dependent_norm_matches_closed_form() {
        // E ∫ (0.5 M_t)² dt = 0.25 ∫ t dt = 1/8, up to the left-endpoint bias.
        let e = ens();
        let lam = RiskProcess::AffineState {
            level: 0.0,
            time_slope: 0.0,
            state_slope: 0.5,
        };
        let est = l2_mu_m_distance_squared(&lam, &RiskProcess::zero(), &e).unwrap();
        let k = 64.0;
        let riemann = 0.25 * (0.5 - 0.5 / k);
        assert!(est.within(riemann, 3.0), "{est:?}");
    }

    #[test]
    fn ucp_examples() {
        let e = ens();
        let a = RiskProcess::Constant(0.2);
        assert_eq!(ucp_distance(&a, &a, &e).unwrap(), 0.0);
        let d = ucp_distance(&a, &RiskProcess::Constant(0.3), &e).unwrap();
        assert!((d - 0.1).abs() < 1e-15);
        let base = RiskProcess::Linear {
            intercept: 0.1,
            slope: 0.5,
        };
        for n in [1u32, 4, 16] {
            let shifted = RiskProcess::Linear {
                intercept: 0.1 + 1.0 / n as f64,
                slope: 0.5,
            };
            assert!(ucp_distance(&base, &shifted, &e).unwrap() <= 1.0 / n as f64 + 1e-15);
        }
    }
}
