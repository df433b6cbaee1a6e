use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::TimeGrid;
use crate::{Error, Result};

/// One realization of the driver: increments of `M` and of `⟨M⟩`.
#[derive(Debug, Clone, Copy)]
pub struct DriverPath<'a> {
    pub m_increments: &'a [f64],
    pub qv_increments: &'a [f64],
}

impl DriverPath<'_> {
    /// `M` at every grid point, starting from 0.
    pub fn m_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.m_increments.len() + 1);
        let mut m = 0.0;
        out.push(m);
        for dm in self.m_increments {
            m += dm;
            out.push(m);
        }
        out
    }

    pub fn terminal(&self) -> f64 {
        self.m_increments.iter().sum()
    }
}

/// Mixture of constant drifts used as an importance-sampling proposal for
/// the driver. Component `j` is chosen with probability `p_j` and adds
/// `θ_j dt` to every increment; each path then carries the likelihood ratio
/// `dP/dQ = 1 / Σ_j p_j exp(θ_j M_T - θ_j² T / 2)` back to the Brownian law.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftMixture {
    components: Vec<(f64, f64)>,
}

impl DriftMixture {
    /// `(probability, drift)` pairs. Probabilities are normalized.
    pub fn new(components: Vec<(f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("drift mixture needs a component".into()));
        }
        if components
            .iter()
            .any(|&(p, d)| !(p > 0.0) || !p.is_finite() || !d.is_finite())
        {
            return Err(Error::InvalidArgument(
                "mixture probabilities must be positive and drifts finite".into(),
            ));
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        Ok(Self {
            components: components.into_iter().map(|(p, d)| (p / total, d)).collect(),
        })
    }

    pub fn components(&self) -> &[(f64, f64)] {
        &self.components
    }

    fn pick(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for &(p, d) in &self.components {
            acc += p;
            if u < acc {
                return d;
            }
        }
        self.components[self.components.len() - 1].1
    }

    /// Likelihood ratio of the Brownian law against the mixture, given `M_T`.
    pub fn likelihood_ratio(&self, m_terminal: f64, horizon: f64) -> f64 {
        let exponents: Vec<f64> = self
            .components
            .iter()
            .map(|&(p, d)| p.ln() + d * m_terminal - 0.5 * d * d * horizon)
            .collect();
        let top = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = exponents.iter().map(|e| (e - top).exp()).sum();
        (-(top + sum.ln())).exp()
    }
}

/// Coupled Monte Carlo realizations of the driver on a shared grid.
///
/// Path `i` of the main driver draws from ChaCha stream `2i` and the
/// orthogonal driver from stream `2i + 1`, so any path can be regenerated
/// from `(seed, i)` alone and the two drivers never share random numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    qv: Vec<f64>,
    dm: Vec<f64>,
    dw: Option<Vec<f64>>,
    weights: Option<Vec<f64>>,
}

impl PathEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn qv_increments(&self) -> &[f64] {
        &self.qv
    }

    pub fn path(&self, i: usize) -> DriverPath<'_> {
        let k = self.steps();
        DriverPath {
            m_increments: &self.dm[i * k..(i + 1) * k],
            qv_increments: &self.qv,
        }
    }

    pub fn has_second_driver(&self) -> bool {
        self.dw.is_some()
    }

    /// Increments of the orthogonal driver `W` on path `i`.
    pub fn second_increments(&self, i: usize) -> Option<&[f64]> {
        let k = self.steps();
        self.dw.as_ref().map(|w| &w[i * k..(i + 1) * k])
    }

    /// Importance weights (`None` for plain Brownian sampling).
    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn terminal_driver(&self) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.path(i).terminal()).collect()
    }

    pub fn terminal_second_driver(&self) -> Option<Vec<f64>> {
        self.dw.as_ref()?;
        Some(
            (0..self.n_paths)
                .map(|i| self.second_increments(i).unwrap().iter().sum())
                .collect(),
        )
    }
}

fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64], qv: &[f64], drift: f64) {
    for (x, dt) in out.iter_mut().zip(qv) {
        let z: f64 = rng.sample(StandardNormal);
        *x = drift * dt + dt.sqrt() * z;
    }
}

fn build(
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    with_second_driver: bool,
    mixture: Option<&DriftMixture>,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    let steps = grid.steps();
    let qv = grid.increments();
    let mut dm = vec![0.0; n_paths * steps];
    dm.par_chunks_mut(steps).enumerate().for_each(|(i, row)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2 * i as u64);
        let drift = match mixture {
            Some(m) => m.pick(rng.random::<f64>()),
            None => 0.0,
        };
        fill_normals(&mut rng, row, &qv, drift);
    });
    let dw = with_second_driver.then(|| {
        let mut dw = vec![0.0; n_paths * steps];
        dw.par_chunks_mut(steps).enumerate().for_each(|(i, row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2 * i as u64 + 1);
            fill_normals(&mut rng, row, &qv, 0.0);
        });
        dw
    });
    let weights = mixture.map(|m| {
        let horizon = grid.horizon();
        dm.par_chunks(steps)
            .map(|row| m.likelihood_ratio(row.iter().sum(), horizon))
            .collect()
    });
    Ok(PathEnsemble {
        grid: grid.clone(),
        n_paths,
        seed,
        qv,
        dm,
        dw,
        weights,
    })
}

/// Brownian driver paths with `N(0, Δt)` increments and `Δ⟨M⟩ = Δt`.
pub fn simulate_driver(
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    with_second_driver: bool,
) -> Result<PathEnsemble> {
    build(grid, n_paths, seed, with_second_driver, None)
}

/// Driver paths sampled under a drift mixture and reweighted to the
/// Brownian law. The second driver, when requested, stays untilted.
pub fn simulate_driver_tilted(
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    with_second_driver: bool,
    mixture: &DriftMixture,
) -> Result<PathEnsemble> {
    build(grid, n_paths, seed, with_second_driver, Some(mixture))
}
