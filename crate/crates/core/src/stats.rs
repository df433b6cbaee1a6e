//! Weighted Monte Carlo means with standard errors.
//!
//! Weights are likelihood ratios with unit mean under the sampling measure
//! (importance sampling). `None` means plain equally weighted sampling.
//! All reductions run sequentially in index order so results are
//! bit-stable regardless of how the inputs were produced.

use serde::Serialize;

/// A Monte Carlo mean together with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            std_error: 0.0,
        }
    }

    /// `|self.mean - target| <= k * std_error`, with a tiny absolute slack
    /// for estimates whose standard error collapses to zero.
    pub fn within(&self, target: f64, k: f64) -> bool {
        let slack = 1e-12 * target.abs().max(1.0);
        (self.mean - target).abs() <= k * self.std_error + slack
    }
}

/// Pairwise summation; fixed evaluation order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 128;
    if values.len() <= LEAF {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and standard error of `w_i * v_i`.
pub fn weighted_mean(values: &[f64], weights: Option<&[f64]>) -> Estimate {
    let n = values.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            std_error: f64::NAN,
        };
    }
    let terms: Vec<f64> = match weights {
        Some(w) => values.iter().zip(w).map(|(v, w)| v * w).collect(),
        None => values.to_vec(),
    };
    mean_of_terms(&terms)
}

/// Mean and standard error of already-weighted terms.
pub fn mean_of_terms(terms: &[f64]) -> Estimate {
    let n = terms.len();
    let mean = pairwise_sum(terms) / n as f64;
    if n < 2 {
        return Estimate {
            mean,
            std_error: f64::NAN,
        };
    }
    let sq: Vec<f64> = terms.iter().map(|t| (t - mean) * (t - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    Estimate {
        mean,
        std_error: (var / n as f64).sqrt(),
    }
}

/// Normalized probability weights (summing to one).
pub fn probabilities(n: usize, weights: Option<&[f64]>) -> Vec<f64> {
    match weights {
        Some(w) => {
            let total = pairwise_sum(w);
            w.iter().map(|x| x / total).collect()
        }
        None => vec![1.0 / n as f64; n],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unweighted_mean_and_error() {
        let e = weighted_mean(&[1.0, 2.0, 3.0, 4.0], None);
        assert_eq!(e.mean, 2.5);
        let var: f64 = (2.25 + 0.25 + 0.25 + 2.25) / 3.0;
        assert!((e.std_error - (var / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn weights_multiply_terms() {
        let e = weighted_mean(&[1.0, 1.0], Some(&[0.5, 1.5]));
        assert_eq!(e.mean, 1.0);
    }

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }

    #[test]
    fn within_handles_zero_error() {
        assert!(Estimate::exact(1.0).within(1.0, 3.0));
        assert!(!Estimate::exact(1.0).within(1.1, 3.0));
    }
}
