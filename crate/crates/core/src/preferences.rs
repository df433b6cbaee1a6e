//! Utility functions `U` bundled with `U'`, `I = (U')^{-1}`, the convex
//! conjugate `V(y) = sup_x (U(x) - xy)` and `V'`.
//!
//! `U` lives on `(0, ∞)`; evaluating any member of the bundle at a
//! non-positive argument is a [`Error::Domain`] error rather than `-∞`.

use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied five-function bundle. Nothing is derived numerically;
/// [`UtilityPair::validate`] checks the pieces against each other.
#[derive(Clone)]
pub struct CustomUtility {
    pub utility: ScalarFn,
    pub marginal: ScalarFn,
    pub inverse_marginal: ScalarFn,
    pub conjugate: ScalarFn,
    pub conjugate_derivative: ScalarFn,
    /// Whether `U(∞) < ∞`. `None` lets the elasticity check guess.
    pub bounded_above: Option<bool>,
}

#[derive(Clone)]
enum Kind {
    Log,
    Power { gamma: f64, conj: f64 },
    Custom(Arc<CustomUtility>),
}

#[derive(Clone)]
pub struct UtilityPair {
    kind: Kind,
    label: String,
}

impl fmt::Debug for UtilityPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UtilityPair").field("label", &self.label).finish()
    }
}

/// `U = log`.
pub fn make_log() -> UtilityPair {
    UtilityPair {
        kind: Kind::Log,
        label: "log".into(),
    }
}

/// `U(x) = x^γ / γ`, `V(y) = y^{-γ'} / γ'` with `γ' = γ / (1 - γ)`.
pub fn make_power(gamma: f64) -> Result<UtilityPair> {
    if !gamma.is_finite() || gamma >= 1.0 || gamma == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "power utility needs γ in (-∞, 1) without 0, got {gamma}"
        )));
    }
    Ok(UtilityPair {
        kind: Kind::Power {
            gamma,
            conj: gamma / (1.0 - gamma),
        },
        label: format!("power({gamma})"),
    })
}

fn positive(function: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain { function, value })
    }
}

impl UtilityPair {
    pub fn custom(label: impl Into<String>, bundle: CustomUtility) -> Self {
        Self {
            kind: Kind::Custom(Arc::new(bundle)),
            label: label.into(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Risk-aversion exponent `γ` of a power utility.
    pub fn gamma(&self) -> Option<f64> {
        match self.kind {
            Kind::Power { gamma, .. } => Some(gamma),
            _ => None,
        }
    }

    /// `γ' = γ / (1 - γ)` of a power utility.
    pub fn conjugate_exponent(&self) -> Option<f64> {
        match self.kind {
            Kind::Power { conj, .. } => Some(conj),
            _ => None,
        }
    }

    pub fn is_log(&self) -> bool {
        matches!(self.kind, Kind::Log)
    }

    /// Whether `lim_{x→∞} U(x)` is finite. Custom bundles without a hint
    /// are judged by the sign of `U` at `probe`.
    pub fn bounded_above(&self, probe: f64) -> bool {
        match &self.kind {
            Kind::Log => false,
            Kind::Power { gamma, .. } => *gamma < 0.0,
            Kind::Custom(c) => c.bounded_above.unwrap_or_else(|| (c.utility)(probe) <= 0.0),
        }
    }

    #[inline]
    pub(crate) fn u_raw(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Log => x.ln(),
            Kind::Power { gamma, .. } => x.powf(*gamma) / gamma,
            Kind::Custom(c) => (c.utility)(x),
        }
    }

    #[inline]
    pub(crate) fn marginal_raw(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Log => 1.0 / x,
            Kind::Power { gamma, .. } => x.powf(gamma - 1.0),
            Kind::Custom(c) => (c.marginal)(x),
        }
    }

    #[inline]
    pub(crate) fn inverse_marginal_raw(&self, y: f64) -> f64 {
        match &self.kind {
            Kind::Log => 1.0 / y,
            Kind::Power { gamma, .. } => y.powf(1.0 / (gamma - 1.0)),
            Kind::Custom(c) => (c.inverse_marginal)(y),
        }
    }

    #[inline]
    pub(crate) fn conjugate_raw(&self, y: f64) -> f64 {
        match &self.kind {
            Kind::Log => -y.ln() - 1.0,
            Kind::Power { conj, .. } => y.powf(-conj) / conj,
            Kind::Custom(c) => (c.conjugate)(y),
        }
    }

    #[inline]
    pub(crate) fn conjugate_derivative_raw(&self, y: f64) -> f64 {
        match &self.kind {
            Kind::Log => -1.0 / y,
            Kind::Power { conj, .. } => -y.powf(-conj - 1.0),
            Kind::Custom(c) => (c.conjugate_derivative)(y),
        }
    }

    pub fn utility(&self, x: f64) -> Result<f64> {
        Ok(self.u_raw(positive("U", x)?))
    }

    pub fn marginal(&self, x: f64) -> Result<f64> {
        Ok(self.marginal_raw(positive("U'", x)?))
    }

    pub fn inverse_marginal(&self, y: f64) -> Result<f64> {
        Ok(self.inverse_marginal_raw(positive("I", y)?))
    }

    pub fn conjugate(&self, y: f64) -> Result<f64> {
        Ok(self.conjugate_raw(positive("V", y)?))
    }

    pub fn conjugate_derivative(&self, y: f64) -> Result<f64> {
        Ok(self.conjugate_derivative_raw(positive("V'", y)?))
    }

    /// Numerical regularity checks on geometric grids.
    ///
    /// Errors are measured as `|a - b| / max(1, |b|)`, so large conjugate
    /// values near the ends of the grid are compared in relative terms.
    pub fn validate(&self, x_grid: &[f64], y_grid: &[f64], tol: f64) -> Result<Validation> {
        if x_grid.len() < 3 || y_grid.is_empty() {
            return Err(Error::InvalidArgument("validation grids are too small".into()));
        }
        for &x in x_grid.iter().chain(y_grid) {
            positive("validate", x)?;
        }
        let marg: Vec<f64> = x_grid.iter().map(|&x| self.marginal_raw(x)).collect();
        let monotone = marg.iter().all(|&m| m > 0.0) && marg.windows(2).all(|w| w[1] < w[0]);
        // Inada, as far as a finite grid can tell: U' at least doubles from the
        // middle of the grid to its left end and at least halves to its right end.
        let mid = marg[marg.len() / 2];
        let inada = marg[0] >= 2.0 * mid && marg[marg.len() - 1] <= 0.5 * mid;

        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        let mut conjugacy_error = 0.0f64;
        let mut derivative_error = 0.0f64;
        let mut inequality = true;
        for &y in y_grid {
            let v = self.conjugate_raw(y);
            let x_star = self.inverse_marginal_raw(y);
            conjugacy_error = conjugacy_error.max(rel(self.u_raw(x_star) - x_star * y, v));
            derivative_error = derivative_error.max(rel(-self.conjugate_derivative_raw(y), x_star));
            for &x in x_grid.iter().step_by((x_grid.len() / 50).max(1)) {
                let slack = tol * v.abs().max(1.0);
                if self.u_raw(x) - x * y > v + slack {
                    inequality = false;
                }
            }
        }
        Ok(Validation {
            monotone_marginal: monotone,
            inada,
            conjugacy_error,
            derivative_error,
            conjugate_dominates: inequality,
            passed: monotone && inada && inequality && conjugacy_error < tol && derivative_error < tol,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub monotone_marginal: bool,
    pub inada: bool,
    pub conjugacy_error: f64,
    pub derivative_error: f64,
    pub conjugate_dominates: bool,
    pub passed: bool,
}

/// `n` log-spaced points from `lo` to `hi`, endpoints included.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2, "bad geometric grid");
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    g[0] = lo;
    g[n - 1] = hi;
    g
}

/// Heuristic estimate of `AE[U] = limsup x U'(x) / U(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticityEstimate {
    pub estimate: f64,
    pub below_one: bool,
    /// `(x, sup_{s ≥ x, s in grid} s U'(s) / U(s))` over the tail of the grid.
    pub tail_sup: Vec<(f64, f64)>,
    pub bounded_branch: bool,
}

/// Tail starts at `x = 100`; the reported estimate is the supremum of the
/// ratio over the last decade of the grid. Bounded utilities take the
/// `AE = 0` branch of the definition.
pub fn asymptotic_elasticity(u: &UtilityPair, grid: &[f64]) -> Result<ElasticityEstimate> {
    const TAIL_START: f64 = 1e2;
    let x_max = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(x_max >= 1e6) {
        return Err(Error::InvalidArgument(format!(
            "elasticity grid must reach 1e6, largest point is {x_max}"
        )));
    }
    if u.bounded_above(x_max) {
        return Ok(ElasticityEstimate {
            estimate: 0.0,
            below_one: true,
            tail_sup: Vec::new(),
            bounded_branch: true,
        });
    }
    let mut tail: Vec<f64> = grid.iter().cloned().filter(|&x| x >= TAIL_START).collect();
    tail.sort_by(f64::total_cmp);
    let ratios: Vec<f64> = tail
        .iter()
        .map(|&x| x * u.marginal_raw(x) / u.u_raw(x))
        .collect();
    let mut tail_sup = vec![(0.0, 0.0); tail.len()];
    let mut running = f64::NEG_INFINITY;
    for k in (0..tail.len()).rev() {
        running = running.max(ratios[k]);
        tail_sup[k] = (tail[k], running);
    }
    let estimate = tail_sup
        .iter()
        .find(|(x, _)| *x >= x_max / 10.0)
        .map(|p| p.1)
        .unwrap_or(running);
    Ok(ElasticityEstimate {
        estimate,
        below_one: estimate < 1.0,
        tail_sup,
        bounded_branch: false,
    })
}
