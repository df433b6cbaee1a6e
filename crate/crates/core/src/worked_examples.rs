//! The log-investor identity and the instability counterexample.
//!
//! The counterexample works at the level of terminal densities: for `n ≥ 2`
//! the deflator of market `n` is `Zⁿ_1 = cₙ fⁿ(B₁)` with
//!
//! ```text
//! fⁿ(b) = n     if b ≥ αₙ        Φ(αₙ) = 1 - n⁻⁵/2
//!         1     if βₙ < b < αₙ
//!         1/n   if b ≤ βₙ        Φ(βₙ) = n⁻³/2
//! ```
//!
//! and `cₙ = 1 / E[fⁿ]`. For power utility with `γ = ¾` every such market
//! has optimal wealth near `2/3` while the limit market has optimum `1`.

use crate::market::{
    l2_mu_m_norm_squared, log_terminal_deflator, simulate_driver_tilted, DriftMixture, PathEnsemble, RiskProcess,
    TimeGrid,
};
use crate::normal::{quantile, upper_quantile};
use crate::stability::ky_fan_to_constant;
use crate::stats::{mean_of_terms, weighted_mean, Estimate};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CounterexampleParams {
    pub n: u64,
    pub alpha: f64,
    pub beta: f64,
    /// `P(B₁ ≥ αₙ) = n⁻⁵/2`.
    pub upper_tail: f64,
    /// `P(B₁ ≤ βₙ) = n⁻³/2`.
    pub lower_tail: f64,
    pub mean_f: f64,
    pub c: f64,
}

impl CounterexampleParams {
    pub fn middle_mass(&self) -> f64 {
        1.0 - self.upper_tail - self.lower_tail
    }

    pub fn f(&self, b: f64) -> f64 {
        if b >= self.alpha {
            self.n as f64
        } else if b <= self.beta {
            1.0 / self.n as f64
        } else {
            1.0
        }
    }

    /// `y⁴ = c⁻³ E[f⁻³]`.
    pub fn multiplier_fourth_power(&self) -> f64 {
        let n = self.n as f64;
        let e = n.powi(-3) * self.upper_tail + self.middle_mass() + n.powi(3) * self.lower_tail;
        e / self.c.powi(3)
    }

    /// `n² E[(cₙ fⁿ - 1)²]`.
    pub fn norm_bound(&self) -> f64 {
        let (n, c) = (self.n as f64, self.c);
        let e = (n * c - 1.0).powi(2) * self.upper_tail
            + (c - 1.0).powi(2) * self.middle_mass()
            + (c / n - 1.0).powi(2) * self.lower_tail;
        n * n * e
    }
}

pub fn counterexample_params(n: u64) -> Result<CounterexampleParams> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "counterexample index must be at least 2, got {n}"
        )));
    }
    let nf = n as f64;
    let upper_tail = 0.5 * nf.powi(-5);
    let lower_tail = 0.5 * nf.powi(-3);
    let mean_f = 1.0 + nf.powi(-4) - 0.5 * nf.powi(-5) - 0.5 * nf.powi(-3);
    Ok(CounterexampleParams {
        n,
        alpha: upper_quantile(upper_tail),
        beta: quantile(lower_tail),
        upper_tail,
        lower_tail,
        mean_f,
        c: 1.0 / mean_f,
    })
}

/// `cₙ fⁿ(b)`: the terminal deflator of market `n` at `B₁ = b`.
pub fn counterexample_density(n: u64, b: f64) -> Result<f64> {
    if b.is_nan() {
        return Err(Error::Domain {
            function: "counterexample_density",
            value: b,
        });
    }
    let p = counterexample_params(n)?;
    Ok(p.c * p.f(b))
}

/// The budget multiplier `yₙ` for `γ = ¾` and `x = 1`.
pub fn counterexample_multiplier(n: u64) -> Result<f64> {
    Ok(counterexample_params(n)?.multiplier_fourth_power().powf(0.25))
}

pub fn counterexample_norm_bound(n: u64) -> Result<f64> {
    Ok(counterexample_params(n)?.norm_bound())
}

/// Drift mixture with half its mass untilted and the rest centring the
/// standardized terminal driver on each `αₙ` and `βₙ`.
pub fn counterexample_mixture(indices: &[u64], horizon: f64) -> Result<DriftMixture> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("no counterexample indices".into()));
    }
    let share = 0.25 / indices.len() as f64;
    let root = horizon.sqrt();
    let mut comps = vec![(0.5, 0.0)];
    for &n in indices {
        let p = counterexample_params(n)?;
        comps.push((share, p.alpha / root));
        comps.push((share, p.beta / root));
    }
    DriftMixture::new(comps)
}

/// Importance-sampled driver paths that resolve the rare bands of every
/// listed market.
pub fn counterexample_ensemble(grid: &TimeGrid, n_paths: usize, seed: u64, indices: &[u64]) -> Result<PathEnsemble> {
    let mixture = counterexample_mixture(indices, grid.horizon())?;
    simulate_driver_tilted(grid, n_paths, seed, false, &mixture)
}

fn terminal_samples(n: u64, n_samples: usize, seed: u64) -> Result<(CounterexampleParams, Vec<f64>, Vec<f64>)> {
    let p = counterexample_params(n)?;
    let grid = TimeGrid::uniform(1.0, 1)?;
    let ens = counterexample_ensemble(&grid, n_samples, seed, &[n])?;
    let b = ens.terminal_driver();
    let w = ens.weights().expect("tilted ensemble carries weights").to_vec();
    Ok((p, b, w))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CounterexampleEstimates {
    pub mean_f: Estimate,
    pub multiplier_fourth_power: Estimate,
    pub norm_bound: Estimate,
}

/// Monte Carlo estimates of `E[fⁿ]`, `yₙ⁴` and the norm bound.
pub fn counterexample_monte_carlo(n: u64, n_samples: usize, seed: u64) -> Result<CounterexampleEstimates> {
    let (p, b, w) = terminal_samples(n, n_samples, seed)?;
    let f: Vec<f64> = b.iter().map(|&b| p.f(b)).collect();
    let inv3: Vec<f64> = f.iter().zip(&w).map(|(f, w)| w * f.powi(-3) / p.c.powi(3)).collect();
    let nf = n as f64;
    let sq: Vec<f64> = f
        .iter()
        .zip(&w)
        .map(|(f, w)| w * nf * nf * (p.c * f - 1.0).powi(2))
        .collect();
    Ok(CounterexampleEstimates {
        mean_f: weighted_mean(&f, Some(&w)),
        multiplier_fourth_power: mean_of_terms(&inv3),
        norm_bound: mean_of_terms(&sq),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleWealth {
    pub params: CounterexampleParams,
    pub multiplier: f64,
    pub deflator: Vec<f64>,
    /// `X̂ⁿ = yₙ⁻⁴ (Zⁿ)⁻⁴`.
    pub wealth: Vec<f64>,
    pub weights: Vec<f64>,
    pub ky_fan_to_two_thirds: f64,
    pub budget: Estimate,
    pub budget_residual: f64,
}

/// Optimal terminal wealth of market `n` for `γ = ¾`, `x = 1`.
pub fn counterexample_wealth(n: u64, n_samples: usize, seed: u64) -> Result<CounterexampleWealth> {
    let (p, b, w) = terminal_samples(n, n_samples, seed)?;
    let y4 = p.multiplier_fourth_power();
    let deflator: Vec<f64> = b.iter().map(|&b| p.c * p.f(b)).collect();
    let wealth: Vec<f64> = deflator.iter().map(|z| 1.0 / (y4 * z.powi(4))).collect();
    let spent: Vec<f64> = deflator.iter().zip(&wealth).map(|(z, x)| z * x).collect();
    let budget = weighted_mean(&spent, Some(&w));
    Ok(CounterexampleWealth {
        params: p,
        multiplier: y4.powf(0.25),
        ky_fan_to_two_thirds: ky_fan_to_constant(&wealth, 2.0 / 3.0, Some(&w))?,
        budget_residual: (budget.mean - 1.0).abs(),
        budget,
        deflator,
        wealth,
        weights: w,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LogValue {
    /// `E[log(x / Z_T)]` on the ensemble.
    pub monte_carlo: Estimate,
    /// `log x + ½‖λ‖²`.
    pub closed_form: f64,
    pub gap: Estimate,
}

/// Value of a log investor, by simulation and by the closed form.
pub fn log_value_function(lambda: &RiskProcess, x: f64, ens: &PathEnsemble) -> Result<LogValue> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("initial wealth must be positive, got {x}")));
    }
    let logs = log_terminal_deflator(lambda, ens)?;
    let values: Vec<f64> = logs.iter().map(|l| x.ln() - l).collect();
    let monte_carlo = weighted_mean(&values, ens.weights());
    let closed_form = x.ln() + 0.5 * l2_mu_m_norm_squared(lambda, ens)?;
    Ok(LogValue {
        monte_carlo,
        closed_form,
        gap: Estimate {
            mean: monte_carlo.mean - closed_form,
            std_error: monte_carlo.std_error,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::simulate_driver;
    use crate::normal::cdf;

    #[test]
    fn n_equal_two_closed_forms() {
        let p = counterexample_params(2).unwrap();
        assert_eq!(p.mean_f, 0.984375);
        assert!((p.c - 1.015873015873016).abs() < 1e-14);
        assert!((cdf(p.alpha) - 0.984375).abs() < 1e-12);
        assert!((cdf(p.beta) - 0.0625).abs() < 1e-12);
        assert!((p.multiplier_fourth_power() - 1.3581236).abs() < 1e-6);
        assert!((p.norm_bound() - 0.1279919).abs() < 1e-6);
    }

    #[test]
    fn degenerate_index_rejected() {
        assert!(counterexample_params(1).is_err());
        assert!(counterexample_params(0).is_err());
        assert!(counterexample_density(3, f64::NAN).is_err());
    }

    #[test]
    fn thresholds_ordered() {
        for n in [2, 3, 10, 1000, 100_000] {
            let p = counterexample_params(n).unwrap();
            assert!(p.beta < p.alpha);
        }
    }

    #[test]
    fn density_bands() {
        let p = counterexample_params(10).unwrap();
        assert_eq!(counterexample_density(10, 0.0).unwrap(), p.c);
        assert_eq!(counterexample_density(10, p.alpha + 1.0).unwrap(), 10.0 * p.c);
        assert_eq!(counterexample_density(10, p.beta - 1.0).unwrap(), 0.1 * p.c);
    }

    #[test]
    fn log_value_zero_market_is_exact() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let ens = simulate_driver(&grid, 100, 1, false).unwrap();
        let v = log_value_function(&RiskProcess::zero(), 2.0, &ens).unwrap();
        assert!((v.monte_carlo.mean - 2f64.ln()).abs() < 1e-15);
        assert!(v.monte_carlo.std_error < 1e-15);
        assert_eq!(v.closed_form, 2f64.ln());
    }

    #[test]
    fn small_monte_carlo_matches_closed_forms() {
        let est = counterexample_monte_carlo(10, 50_000, 3).unwrap();
        let p = counterexample_params(10).unwrap();
        assert!(est.mean_f.within(p.mean_f, 4.0), "{est:?}");
        assert!(est.multiplier_fourth_power.within(p.multiplier_fourth_power(), 4.0));
        assert!(est.norm_bound.within(p.norm_bound(), 4.0));
    }
}
