//! Independent reference values shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

/// `∫ g(b) φ(b) db` by composite Simpson on `[-14, 14]`.
pub fn gaussian_expectation(g: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi, panels) = (-14.0f64, 14.0f64, 20_000usize);
    let h = (hi - lo) / panels as f64;
    let density = |b: f64| (-0.5 * b * b).exp() / (2.0 * PI).sqrt();
    let mut acc = 0.0;
    for k in 0..=panels {
        let b = lo + h * k as f64;
        let w = if k == 0 || k == panels {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * g(b) * density(b);
    }
    acc * h / 3.0
}

/// `E[Z^p]` for `Z = exp(-λ B_T - λ²T/2)`, by quadrature.
pub fn lognormal_moment(lambda: f64, horizon: f64, p: f64) -> f64 {
    gaussian_expectation(|b| (p * (-lambda * horizon.sqrt() * b - 0.5 * lambda * lambda * horizon)).exp())
}

/// Budget multiplier of a power investor in the constant-λ market,
/// from `x = E[Z (yZ)^{1/(γ-1)}]`.
pub fn power_multiplier(gamma: f64, lambda: f64, horizon: f64, x: f64) -> f64 {
    let m = lognormal_moment(lambda, horizon, gamma / (gamma - 1.0));
    (x / m).powf(gamma - 1.0)
}

/// The multiplier as `((1/x) E[Z^{γ/(γ-1)}])^{γ-1}`.
pub fn power_multiplier_displayed(gamma: f64, lambda: f64, horizon: f64, x: f64) -> f64 {
    let m = lognormal_moment(lambda, horizon, gamma / (gamma - 1.0));
    (m / x).powf(gamma - 1.0)
}

/// Optimal expected utility `x^γ m^{1-γ} / γ` of a power investor.
pub fn power_value(gamma: f64, lambda: f64, horizon: f64, x: f64) -> f64 {
    let m = lognormal_moment(lambda, horizon, gamma / (gamma - 1.0));
    x.powf(gamma) * m.powf(1.0 - gamma) / gamma
}

/// Band probabilities `(upper, middle, lower)` of the three-level density.
pub fn bands(n: f64) -> (f64, f64, f64) {
    let upper = 0.5 * n.powi(-5);
    let lower = 0.5 * n.powi(-3);
    (upper, 1.0 - upper - lower, lower)
}

pub fn band_mean_f(n: f64) -> f64 {
    let (u, m, l) = bands(n);
    n * u + m + l / n
}

pub fn band_y4(n: f64) -> f64 {
    let (u, m, l) = bands(n);
    let c = 1.0 / band_mean_f(n);
    (u * (n * c).powi(-3) + m * c.powi(-3) + l * (c / n).powi(-3)) * 1.0
}

pub fn band_norm_bound(n: f64) -> f64 {
    let (u, m, l) = bands(n);
    let c = 1.0 / band_mean_f(n);
    n * n * (u * (n * c - 1.0).powi(2) + m * (c - 1.0).powi(2) + l * (c / n - 1.0).powi(2))
}

/// Ky Fan distance by scanning every candidate `ε` in the sample.
pub fn brute_force_ky_fan(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    let n = d.len() as f64;
    let frac = |eps: f64| d.iter().filter(|&&v| v > eps).count() as f64 / n;
    let mut candidates: Vec<f64> = d.clone();
    candidates.extend((0..=d.len()).map(|k| k as f64 / n));
    candidates.push(0.0);
    candidates
        .into_iter()
        .filter(|&e| frac(e) <= e)
        .fold(f64::INFINITY, f64::min)
}
