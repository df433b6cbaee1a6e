use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use super::{PathEnsemble, RiskProcess};
use crate::worked_examples::counterexample_density;
use crate::{Error, Result};

/// Per-path values on every grid point, stored path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessPaths {
    n_paths: usize,
    n_points: usize,
    values: Vec<f64>,
}

impl ProcessPaths {
    pub fn from_rows(n_points: usize, values: Vec<f64>) -> Result<Self> {
        if n_points == 0 || values.len() % n_points != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not split into rows of {n_points}",
                values.len()
            )));
        }
        Ok(Self {
            n_paths: values.len() / n_points,
            n_points,
            values,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn path(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_points..(i + 1) * self.n_points]
    }

    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.n_points + k]
    }

    /// Column `k` across all paths.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.at(i, k)).collect()
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.column(self.n_points - 1)
    }

    /// Pointwise product with another process on the same grid.
    pub fn product(&self, other: &ProcessPaths) -> Result<ProcessPaths> {
        if self.values.len() != other.values.len() || self.n_points != other.n_points {
            return Err(Error::LengthMismatch {
                left: self.values.len(),
                right: other.values.len(),
            });
        }
        Ok(ProcessPaths {
            n_paths: self.n_paths,
            n_points: self.n_points,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        })
    }
}

fn require_path_level(lambda: &RiskProcess, what: &'static str) -> Result<()> {
    if lambda.is_path_level() {
        Ok(())
    } else {
        Err(Error::Unsupported(what))
    }
}

fn collect_rows<F>(ens: &PathEnsemble, n_points: usize, row: F) -> Result<ProcessPaths>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync,
{
    let mut values = vec![0.0; ens.n_paths() * n_points];
    values
        .par_chunks_mut(n_points)
        .enumerate()
        .map(|(i, out)| row(i, out))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<()>>()?;
    ProcessPaths::from_rows(n_points, values)
}

/// `Z = E(-λ·M)` by exponential Euler:
/// `Z_{k+1} = Z_k exp(-λ_k ΔM_k - ½ λ_k² Δ⟨M⟩_k)`.
pub fn stochastic_exponential(lambda: &RiskProcess, ens: &PathEnsemble) -> Result<ProcessPaths> {
    require_path_level(lambda, "stochastic_exponential")?;
    let times = ens.grid().times();
    collect_rows(ens, ens.grid().n_points(), |i, out| {
        let path = ens.path(i);
        let lam = lambda.interval_values(times, path);
        let mut z = 1.0;
        out[0] = z;
        for k in 0..lam.len() {
            let l = lam[k];
            z *= (-l * path.m_increments[k] - 0.5 * l * l * path.qv_increments[k]).exp();
            if !(z > 0.0) || !z.is_finite() {
                return Err(Error::Overflow { path: i });
            }
            out[k + 1] = z;
        }
        Ok(())
    })
}

/// `log Z_T = -Σ λ_k ΔM_k - ½ Σ λ_k² Δ⟨M⟩_k` for path-level `λ`.
pub fn log_terminal_deflator(lambda: &RiskProcess, ens: &PathEnsemble) -> Result<Vec<f64>> {
    require_path_level(lambda, "log_terminal_deflator")?;
    let times = ens.grid().times();
    Ok((0..ens.n_paths())
        .into_par_iter()
        .map(|i| {
            let path = ens.path(i);
            let lam = lambda.interval_values(times, path);
            let mut stochastic = 0.0;
            let mut qv = 0.0;
            for k in 0..lam.len() {
                stochastic += lam[k] * path.m_increments[k];
                qv += lam[k] * lam[k] * path.qv_increments[k];
            }
            -stochastic - 0.5 * qv
        })
        .collect())
}

/// Terminal deflator `Z_T` on every path. Works for every kind of `λ`; the
/// counterexample kind uses the standardized terminal driver `M_T / √⟨M⟩_T`.
pub fn terminal_deflator(lambda: &RiskProcess, ens: &PathEnsemble) -> Result<Vec<f64>> {
    if let RiskProcess::TerminalDensity { n } = lambda {
        let scale = ens.qv_increments().iter().sum::<f64>().sqrt();
        return ens
            .terminal_driver()
            .into_iter()
            .map(|m| counterexample_density(*n, m / scale))
            .collect();
    }
    let logs = log_terminal_deflator(lambda, ens)?;
    logs.into_iter()
        .enumerate()
        .map(|(i, l)| {
            let z = l.exp();
            if z > 0.0 && z.is_finite() {
                Ok(z)
            } else {
                Err(Error::Overflow { path: i })
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssetForm {
    /// `S = 1 + M + Σ λ Δ⟨M⟩`
    Additive,
    /// `log S_{k+1} = log S_k + (λ_k - ½) Δ⟨M⟩_k + ΔM_k`, i.e. `dS = S(λ dt + dB)`
    Multiplicative,
}

#[derive(Debug, Clone)]
pub struct AssetPaths {
    pub form: AssetForm,
    pub paths: ProcessPaths,
    /// Paths on which the additive asset went below zero somewhere.
    pub negative: Vec<bool>,
}

impl AssetPaths {
    pub fn any_negative(&self) -> bool {
        self.negative.iter().any(|&b| b)
    }
}

fn asset_row(
    lambda: &RiskProcess,
    ens: &PathEnsemble,
    form: AssetForm,
    i: usize,
    out: &mut [f64],
) -> Result<()> {
    let path = ens.path(i);
    let lam = lambda.interval_values(ens.grid().times(), path);
    let mut s = 1.0;
    out[0] = s;
    for k in 0..lam.len() {
        let dq = path.qv_increments[k];
        let dm = path.m_increments[k];
        s = match form {
            AssetForm::Additive => s + dm + lam[k] * dq,
            AssetForm::Multiplicative => s * ((lam[k] - 0.5) * dq + dm).exp(),
        };
        if !s.is_finite() || (form == AssetForm::Multiplicative && !(s > 0.0)) {
            return Err(Error::Overflow { path: i });
        }
        out[k + 1] = s;
    }
    Ok(())
}

/// Asset price paths `S^λ`. Negative additive prices are flagged, not rejected.
pub fn asset_path(lambda: &RiskProcess, ens: &PathEnsemble, form: AssetForm) -> Result<AssetPaths> {
    require_path_level(lambda, "asset_path")?;
    let paths = collect_rows(ens, ens.grid().n_points(), |i, out| {
        asset_row(lambda, ens, form, i, out)
    })?;
    let negative = (0..paths.n_paths())
        .map(|i| paths.path(i).iter().any(|&s| s < 0.0))
        .collect();
    Ok(AssetPaths {
        form,
        paths,
        negative,
    })
}

/// Left-endpoint information handed to a custom strategy.
#[derive(Debug, Clone, Copy)]
pub struct StrategyState {
    pub step: usize,
    pub t: f64,
    pub asset: f64,
    pub wealth: f64,
    pub driver: f64,
}

/// Predictable trading rule `H`: number of asset units held over `[t_k, t_{k+1})`.
#[derive(Clone)]
pub enum Strategy {
    Hold(f64),
    /// Wealth-proportional exposure `π`: `H = π X` for the additive asset and
    /// `H = π X / S` for the multiplicative one.
    WealthFraction(f64),
    /// Growth-optimal exposure, `π_k = λ_k`.
    LogOptimal(RiskProcess),
    Custom(Arc<dyn Fn(StrategyState) -> f64 + Send + Sync>),
}

impl fmt::Debug for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Hold(h) => write!(f, "Hold({h})"),
            Self::WealthFraction(p) => write!(f, "WealthFraction({p})"),
            Self::LogOptimal(l) => write!(f, "LogOptimal({l:?})"),
            Self::Custom(_) => write!(f, "Custom(<fn>)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WealthPaths {
    pub paths: ProcessPaths,
    /// `X ≥ 0` at every grid point.
    pub admissible: Vec<bool>,
}

impl WealthPaths {
    pub fn all_admissible(&self) -> bool {
        self.admissible.iter().all(|&a| a)
    }
}

/// Self-financing wealth `X = x + Σ H_k ΔS_k` with `H_k` chosen from
/// information at `t_k`.
pub fn wealth_path(
    strategy: &Strategy,
    lambda: &RiskProcess,
    ens: &PathEnsemble,
    x: f64,
    form: AssetForm,
) -> Result<WealthPaths> {
    require_path_level(lambda, "wealth_path")?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            function: "wealth_path",
            value: x,
        });
    }
    if let Strategy::LogOptimal(l) = strategy {
        require_path_level(l, "log-optimal strategy")?;
    }
    let times = ens.grid().times();
    let n_points = ens.grid().n_points();
    let paths = collect_rows(ens, n_points, |i, out| {
        let mut s_row = vec![0.0; n_points];
        asset_row(lambda, ens, form, i, &mut s_row)?;
        let path = ens.path(i);
        let pi = match strategy {
            Strategy::LogOptimal(l) => Some(l.interval_values(times, path)),
            _ => None,
        };
        let mut wealth = x;
        let mut m = 0.0;
        out[0] = wealth;
        for k in 0..n_points - 1 {
            let scale = match form {
                AssetForm::Additive => 1.0,
                AssetForm::Multiplicative => s_row[k],
            };
            let units = match strategy {
                Strategy::Hold(h) => *h,
                Strategy::WealthFraction(p) => p * wealth / scale,
                Strategy::LogOptimal(_) => pi.as_ref().unwrap()[k] * wealth / scale,
                Strategy::Custom(f) => f(StrategyState {
                    step: k,
                    t: times[k],
                    asset: s_row[k],
                    wealth,
                    driver: m,
                }),
            };
            wealth += units * (s_row[k + 1] - s_row[k]);
            m += path.m_increments[k];
            out[k + 1] = wealth;
        }
        Ok(())
    })?;
    let admissible = (0..paths.n_paths())
        .map(|i| paths.path(i).iter().all(|&v| v >= 0.0))
        .collect();
    Ok(WealthPaths { paths, admissible })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{simulate_driver, TimeGrid};
    use crate::stats::weighted_mean;

    fn ens(n: usize, steps: usize, seed: u64) -> PathEnsemble {
        simulate_driver(&TimeGrid::uniform(1.0, steps).unwrap(), n, seed, false).unwrap()
    }

    #[test]
    fn zero_lambda_gives_unit_deflator() {
        let e = ens(200, 8, 1);
        let z = stochastic_exponential(&RiskProcess::zero(), &e).unwrap();
        assert!(z.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn exponential_euler_log_identity() {
        let e = ens(500, 32, 2);
        let lam = RiskProcess::AffineState {
            level: 0.3,
            time_slope: -0.2,
            state_slope: 0.5,
        };
        let z = stochastic_exponential(&lam, &e).unwrap();
        let logs = log_terminal_deflator(&lam, &e).unwrap();
        for (zt, l) in z.terminal().iter().zip(&logs) {
            assert!((zt.ln() - l).abs() < 1e-12 * l.abs().max(1.0));
        }
    }

    #[test]
    fn constant_lambda_deflator_is_a_martingale() {
        let e = ens(100_000, 4, 3);
        let z = terminal_deflator(&RiskProcess::Constant(0.2), &e).unwrap();
        assert!(weighted_mean(&z, None).within(1.0, 3.0));
    }

    #[test]
    fn overflow_reports_path() {
        let e = ens(4, 2, 4);
        let lam = RiskProcess::Constant(1e200);
        match stochastic_exponential(&lam, &e) {
            Err(Error::Overflow { .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn additive_asset_with_zero_lambda_is_one_plus_driver() {
        let e = ens(50, 8, 5);
        let s = asset_path(&RiskProcess::zero(), &e, AssetForm::Additive).unwrap();
        for i in 0..50 {
            let m = e.path(i).m_values();
            for (a, b) in s.paths.path(i).iter().zip(&m) {
                assert!((a - (1.0 + b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn additive_asset_goes_negative_on_long_horizons() {
        let e = simulate_driver(&TimeGrid::uniform(25.0, 50).unwrap(), 2000, 6, false).unwrap();
        let s = asset_path(&RiskProcess::zero(), &e, AssetForm::Additive).unwrap();
        assert!(s.any_negative());
        let s = asset_path(&RiskProcess::zero(), &e, AssetForm::Multiplicative).unwrap();
        assert!(!s.any_negative());
    }

    #[test]
    fn hold_zero_keeps_wealth() {
        let e = ens(100, 8, 7);
        let w = wealth_path(&Strategy::Hold(0.0), &RiskProcess::Constant(0.3), &e, 2.5, AssetForm::Multiplicative)
            .unwrap();
        assert!(w.paths.values.iter().all(|&v| v == 2.5));
        assert!(w.all_admissible());
    }

    #[test]
    fn hold_one_in_additive_market_tracks_driver() {
        let e = ens(100, 8, 8);
        let w = wealth_path(&Strategy::Hold(1.0), &RiskProcess::zero(), &e, 1.0, AssetForm::Additive).unwrap();
        for i in 0..100 {
            let m = e.path(i).m_values();
            for (x, b) in w.paths.path(i).iter().zip(&m) {
                assert!((x - (1.0 + b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_positive_initial_wealth() {
        let e = ens(4, 2, 9);
        assert!(wealth_path(&Strategy::Hold(0.0), &RiskProcess::zero(), &e, 0.0, AssetForm::Additive).is_err());
    }

    #[test]
    fn terminal_density_has_no_paths() {
        let e = ens(4, 2, 9);
        let lam = RiskProcess::TerminalDensity { n: 4 };
        assert!(matches!(stochastic_exponential(&lam, &e), Err(Error::Unsupported(_))));
        assert_eq!(terminal_deflator(&lam, &e).unwrap().len(), 4);
    }
}
