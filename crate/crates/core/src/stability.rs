//! Convergence-in-probability metrics, uniform-integrability diagnostics and
//! the stability sweep over a coupled sequence of markets.

use std::sync::Arc;

use rayon::prelude::*;

use crate::duality::{solve_complete, CompleteMarketProblem, Solution};
use crate::market::{l2_mu_m_distance_squared, terminal_deflator, ucp_distance, PathEnsemble, RiskProcess};
use crate::preferences::UtilityPair;
use crate::stats::probabilities;
use crate::worked_examples::counterexample_norm_bound;
use crate::{Error, Result};

/// Empirical Ky Fan distance `inf{ε ≥ 0 : P(|a - b| > ε) ≤ ε}` between
/// pathwise-coupled samples.
pub fn ky_fan_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    ky_fan_distance_weighted(a, b, None)
}

/// Ky Fan distance under importance weights (self-normalized).
///
/// With `d_(1) ≥ d_(2) ≥ ...` the sorted gaps and `W_k` the probability of
/// the `k` largest, the infimum is `min_k max(d_(k+1), W_k)`.
pub fn ky_fan_distance_weighted(a: &[f64], b: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if let Some(w) = weights {
        if w.len() != a.len() {
            return Err(Error::LengthMismatch {
                left: a.len(),
                right: w.len(),
            });
        }
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let probs = probabilities(a.len(), weights);
    let mut gaps: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .zip(&probs)
        .map(|((x, y), p)| ((x - y).abs(), *p))
        .collect();
    if gaps.iter().any(|g| g.0.is_nan()) {
        return Err(Error::InvalidArgument("samples contain NaN".into()));
    }
    gaps.sort_by(|l, r| r.0.total_cmp(&l.0));
    let mut best = gaps[0].0;
    let mut mass = 0.0;
    for k in 0..gaps.len() {
        mass += gaps[k].1;
        let next = gaps.get(k + 1).map_or(0.0, |g| g.0);
        best = best.min(next.max(mass));
    }
    Ok(best)
}

/// Ky Fan distance of `a` to the constant `c`.
pub fn ky_fan_to_constant(a: &[f64], c: f64, weights: Option<&[f64]>) -> Result<f64> {
    ky_fan_distance_weighted(a, &vec![c; a.len()], weights)
}

/// Terminal samples of one market, with optional importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

impl SampleSet {
    pub fn plain(values: Vec<f64>) -> Self {
        Self { values, weights: None }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UiConfig {
    /// Increasing truncation levels `K`.
    pub k_grid: Vec<f64>,
    /// The family passes when the tail at the largest `K` is below this.
    pub threshold: f64,
}

impl Default for UiConfig {
    fn default() -> Self {
        Self {
            k_grid: vec![1.0, 10.0, 100.0, 1000.0],
            threshold: 1e-2,
        }
    }
}

/// Tail-expectation curve of `{V⁺(Z_T)}` over a family of markets.
/// The verdict is a diagnostic on finite samples, not a proof.
#[derive(Debug, Clone, PartialEq)]
pub struct UiCertificate {
    pub k_grid: Vec<f64>,
    /// `sup_family E[V⁺(Z) 1{V⁺(Z) > K}]` per level.
    pub tail_curve: Vec<f64>,
    /// Family member attaining the supremum at each level.
    pub worst_member: Vec<usize>,
    pub threshold: f64,
    pub passed: bool,
}

pub fn v_relative_compactness_diag(
    family: &[SampleSet],
    u: &UtilityPair,
    cfg: &UiConfig,
) -> Result<UiCertificate> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("UI diagnostic needs a nonempty family".into()));
    }
    if cfg.k_grid.is_empty() || cfg.k_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("k_grid must be nonempty and increasing".into()));
    }
    let mut positives = Vec::with_capacity(family.len());
    for member in family {
        if member.values.iter().any(|&z| !(z > 0.0) || !z.is_finite()) {
            return Err(Error::InvalidArgument("UI family samples must be positive".into()));
        }
        let v_plus: Vec<f64> = member.values.iter().map(|&z| u.conjugate_raw(z).max(0.0)).collect();
        let w = match &member.weights {
            Some(w) => w.clone(),
            None => vec![1.0; v_plus.len()],
        };
        positives.push((v_plus, w));
    }
    let mut tail_curve = Vec::with_capacity(cfg.k_grid.len());
    let mut worst_member = Vec::with_capacity(cfg.k_grid.len());
    for &k in &cfg.k_grid {
        let (mut sup, mut arg) = (0.0f64, 0usize);
        for (j, (v, w)) in positives.iter().enumerate() {
            let total: f64 = v
                .iter()
                .zip(w)
                .filter(|(v, _)| **v > k)
                .map(|(v, w)| v * w)
                .sum();
            let tail = total / v.len() as f64;
            if tail > sup {
                sup = tail;
                arg = j;
            }
        }
        tail_curve.push(sup);
        worst_member.push(arg);
    }
    let passed = *tail_curve.last().unwrap() < cfg.threshold;
    Ok(UiCertificate {
        k_grid: cfg.k_grid.clone(),
        tail_curve,
        worst_member,
        threshold: cfg.threshold,
        passed,
    })
}

/// Markets `λⁿ → λ⁰` evaluated on one shared ensemble.
#[derive(Debug, Clone)]
pub struct MarketSequence {
    pub limit: RiskProcess,
    pub terms: Vec<(u64, RiskProcess)>,
    pub ensemble: Arc<PathEnsemble>,
}

impl MarketSequence {
    /// `λⁿ = base · (1 + 1/n)`.
    pub fn relative_shift(base: f64, indices: &[u64], ensemble: Arc<PathEnsemble>) -> Self {
        Self {
            limit: RiskProcess::Constant(base),
            terms: indices
                .iter()
                .map(|&n| (n, RiskProcess::Constant(base * (1.0 + 1.0 / n as f64))))
                .collect(),
            ensemble,
        }
    }

    /// `λⁿ = base + 1/n`.
    pub fn additive_shift(base: f64, indices: &[u64], ensemble: Arc<PathEnsemble>) -> Self {
        Self {
            limit: RiskProcess::Constant(base),
            terms: indices
                .iter()
                .map(|&n| (n, RiskProcess::Constant(base + 1.0 / n as f64)))
                .collect(),
            ensemble,
        }
    }

    /// Counterexample markets converging to `λ⁰ ≡ 0`.
    pub fn counterexample(indices: &[u64], ensemble: Arc<PathEnsemble>) -> Self {
        Self {
            limit: RiskProcess::zero(),
            terms: indices
                .iter()
                .map(|&n| (n, RiskProcess::TerminalDensity { n }))
                .collect(),
            ensemble,
        }
    }

    /// Terminal deflators of the limit followed by every term.
    pub fn deflator_family(&self) -> Result<Vec<SampleSet>> {
        let weights = self.ensemble.weights().map(|w| w.to_vec());
        std::iter::once(&self.limit)
            .chain(self.terms.iter().map(|t| &t.1))
            .map(|l| {
                Ok(SampleSet {
                    values: terminal_deflator(l, &self.ensemble)?,
                    weights: weights.clone(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowMetrics {
    /// `‖λⁿ - λ⁰‖` in `L²(μ^M)` (NaN when not computable).
    pub l2_distance: f64,
    /// `l2_distance` is the square root of the counterexample's upper bound.
    pub l2_is_bound: bool,
    pub ucp_distance: f64,
    pub value: f64,
    pub value_gap: f64,
    pub multiplier: f64,
    pub multiplier_std_error: f64,
    pub wealth_kyfan: f64,
    pub deflator_kyfan: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: u64,
    pub outcome: std::result::Result<RowMetrics, Error>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub limit_multiplier: f64,
    pub limit_value: f64,
    pub rows: Vec<ConvergenceRow>,
}

fn l2_between(term: &RiskProcess, limit: &RiskProcess, ens: &PathEnsemble) -> Result<(f64, bool)> {
    if term.is_path_level() && limit.is_path_level() {
        return Ok((l2_mu_m_distance_squared(term, limit, ens)?.mean.sqrt(), false));
    }
    match (term, limit) {
        (RiskProcess::TerminalDensity { n }, RiskProcess::Constant(c)) if *c == 0.0 => {
            Ok((counterexample_norm_bound(*n)?.sqrt(), true))
        }
        _ => Ok((f64::NAN, false)),
    }
}

fn solve_on(lambda: &RiskProcess, ens: &PathEnsemble, u: &UtilityPair, x: f64) -> Result<(Vec<f64>, Solution)> {
    let z = terminal_deflator(lambda, ens)?;
    let p = CompleteMarketProblem::new(z.clone(), ens.weights().map(|w| w.to_vec()), u.clone(), x)?;
    Ok((z, solve_complete(&p)?))
}

/// Solves every market of the sequence on the shared ensemble and measures
/// how far each term's value, multiplier, wealth and deflator are from the
/// limit's. Failures of individual terms are recorded in their row.
pub fn stability_sweep(seq: &MarketSequence, u: &UtilityPair, x: f64) -> Result<ConvergenceReport> {
    let ens = seq.ensemble.as_ref();
    let weights = ens.weights();
    let (z0, limit) = solve_on(&seq.limit, ens, u, x)?;
    let rows = seq
        .terms
        .par_iter()
        .map(|(n, lambda)| {
            let outcome = (|| {
                let (z, sol) = solve_on(lambda, ens, u, x)?;
                let (l2_distance, l2_is_bound) = l2_between(lambda, &seq.limit, ens)?;
                let ucp = if lambda.is_path_level() && seq.limit.is_path_level() {
                    ucp_distance(lambda, &seq.limit, ens)?
                } else {
                    f64::NAN
                };
                Ok(RowMetrics {
                    l2_distance,
                    l2_is_bound,
                    ucp_distance: ucp,
                    value: sol.primal_value.mean,
                    value_gap: (sol.primal_value.mean - limit.primal_value.mean).abs(),
                    multiplier: sol.y,
                    multiplier_std_error: sol.y_std_error,
                    wealth_kyfan: ky_fan_distance_weighted(&sol.wealth, &limit.wealth, weights)?,
                    deflator_kyfan: ky_fan_distance_weighted(&z, &z0, weights)?,
                })
            })();
            ConvergenceRow { n: *n, outcome }
        })
        .collect();
    Ok(ConvergenceReport {
        limit_multiplier: limit.y,
        limit_value: limit.primal_value.mean,
        rows,
    })
}

/// Ky Fan distances between `Zⁿ_T` and `Z⁰_T` along the sequence.
pub fn fatou_check(seq: &MarketSequence) -> Result<Vec<(u64, f64)>> {
    let ens = seq.ensemble.as_ref();
    let z0 = terminal_deflator(&seq.limit, ens)?;
    seq.terms
        .iter()
        .map(|(n, l)| Ok((*n, ky_fan_distance_weighted(&terminal_deflator(l, ens)?, &z0, ens.weights())?)))
        .collect()
}
