//! Python bindings: utilities, driver ensembles, risk processes, the
//! complete-market solver, stability metrics and the counterexample.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use umstab::duality;
use umstab::market::{self, PathEnsemble, RiskProcess, TimeGrid};
use umstab::preferences::{self, UtilityPair};
use umstab::stability::{self, MarketSequence, SampleSet, UiConfig};
use umstab::worked_examples;

fn py_err(e: umstab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Utility", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyUtility {
    inner: UtilityPair,
}

#[pymethods]
impl PyUtility {
    #[staticmethod]
    fn log() -> Self {
        Self {
            inner: preferences::make_log(),
        }
    }

    #[staticmethod]
    fn power(gamma: f64) -> PyResult<Self> {
        Ok(Self {
            inner: preferences::make_power(gamma).map_err(py_err)?,
        })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label().to_string()
    }

    fn utility(&self, x: f64) -> PyResult<f64> {
        self.inner.utility(x).map_err(py_err)
    }

    fn marginal(&self, x: f64) -> PyResult<f64> {
        self.inner.marginal(x).map_err(py_err)
    }

    fn inverse_marginal(&self, y: f64) -> PyResult<f64> {
        self.inner.inverse_marginal(y).map_err(py_err)
    }

    fn conjugate(&self, y: f64) -> PyResult<f64> {
        self.inner.conjugate(y).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Utility({})", self.inner.label())
    }
}

#[pyclass(name = "Risk", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyRisk {
    inner: RiskProcess,
}

#[pymethods]
impl PyRisk {
    #[staticmethod]
    fn zero() -> Self {
        Self {
            inner: RiskProcess::zero(),
        }
    }

    #[staticmethod]
    fn constant(value: f64) -> Self {
        Self {
            inner: RiskProcess::Constant(value),
        }
    }

    #[staticmethod]
    fn linear(intercept: f64, slope: f64) -> Self {
        Self {
            inner: RiskProcess::Linear { intercept, slope },
        }
    }

    #[staticmethod]
    fn affine(level: f64, time_slope: f64, state_slope: f64) -> Self {
        Self {
            inner: RiskProcess::AffineState {
                level,
                time_slope,
                state_slope,
            },
        }
    }

    /// Terminal-density market `n` of the instability counterexample.
    #[staticmethod]
    fn counterexample(n: u64) -> Self {
        Self {
            inner: RiskProcess::TerminalDensity { n },
        }
    }

    fn __repr__(&self) -> String {
        format!("Risk({:?})", self.inner)
    }
}

#[pyclass(name = "Ensemble", frozen)]
pub struct PyEnsemble {
    inner: Arc<PathEnsemble>,
}

#[pymethods]
impl PyEnsemble {
    #[new]
    #[pyo3(signature = (horizon, steps, n_paths, seed, second_driver = false))]
    fn new(horizon: f64, steps: usize, n_paths: usize, seed: u64, second_driver: bool) -> PyResult<Self> {
        let grid = TimeGrid::uniform(horizon, steps).map_err(py_err)?;
        let ens = market::simulate_driver(&grid, n_paths, seed, second_driver).map_err(py_err)?;
        Ok(Self { inner: Arc::new(ens) })
    }

    /// Importance-sampled ensemble resolving the counterexample's rare bands.
    #[staticmethod]
    fn counterexample(horizon: f64, steps: usize, n_paths: usize, seed: u64, indices: Vec<u64>) -> PyResult<Self> {
        let grid = TimeGrid::uniform(horizon, steps).map_err(py_err)?;
        let ens = worked_examples::counterexample_ensemble(&grid, n_paths, seed, &indices).map_err(py_err)?;
        Ok(Self { inner: Arc::new(ens) })
    }

    #[getter]
    fn n_paths(&self) -> usize {
        self.inner.n_paths()
    }

    #[getter]
    fn weights(&self) -> Option<Vec<f64>> {
        self.inner.weights().map(|w| w.to_vec())
    }

    fn terminal_driver(&self) -> Vec<f64> {
        self.inner.terminal_driver()
    }

    fn terminal_deflator(&self, risk: &PyRisk) -> PyResult<Vec<f64>> {
        market::terminal_deflator(&risk.inner, &self.inner).map_err(py_err)
    }
}

#[pyclass(name = "Solution", frozen, get_all)]
pub struct PySolution {
    y: f64,
    y_std_error: f64,
    primal_value: f64,
    primal_std_error: f64,
    dual_value: f64,
    budget_residual: f64,
    converged: bool,
    wealth: Vec<f64>,
}

#[pyfunction]
#[pyo3(signature = (z, utility, x, weights = None))]
fn solve_complete(z: Vec<f64>, utility: &PyUtility, x: f64, weights: Option<Vec<f64>>) -> PyResult<PySolution> {
    let p = duality::CompleteMarketProblem::new(z, weights, utility.inner.clone(), x).map_err(py_err)?;
    let s = duality::solve_complete(&p).map_err(py_err)?;
    Ok(PySolution {
        y: s.y,
        y_std_error: s.y_std_error,
        primal_value: s.primal_value.mean,
        primal_std_error: s.primal_value.std_error,
        dual_value: s.dual_value.mean,
        budget_residual: s.budget_residual,
        converged: s.converged,
        wealth: s.wealth,
    })
}

/// `(mean, standard error)` of `V(y Z)`.
#[pyfunction]
#[pyo3(signature = (z, utility, y, weights = None))]
fn dual_value(z: Vec<f64>, utility: &PyUtility, y: f64, weights: Option<Vec<f64>>) -> PyResult<(f64, f64)> {
    let e = duality::dual_value(&z, weights.as_deref(), &utility.inner, y).map_err(py_err)?;
    Ok((e.mean, e.std_error))
}

#[pyfunction]
#[pyo3(signature = (a, b, weights = None))]
fn ky_fan_distance(a: Vec<f64>, b: Vec<f64>, weights: Option<Vec<f64>>) -> PyResult<f64> {
    stability::ky_fan_distance_weighted(&a, &b, weights.as_deref()).map_err(py_err)
}

/// `(monte carlo mean, standard error, closed form)`.
#[pyfunction]
fn log_value_function(risk: &PyRisk, x: f64, ensemble: &PyEnsemble) -> PyResult<(f64, f64, f64)> {
    let v = worked_examples::log_value_function(&risk.inner, x, &ensemble.inner).map_err(py_err)?;
    Ok((v.monte_carlo.mean, v.monte_carlo.std_error, v.closed_form))
}

#[pyclass(name = "CounterexampleParams", frozen, get_all)]
pub struct PyCounterexampleParams {
    n: u64,
    alpha: f64,
    beta: f64,
    mean_f: f64,
    c: f64,
    y4: f64,
    norm_bound: f64,
}

#[pyfunction]
fn counterexample_params(n: u64) -> PyResult<PyCounterexampleParams> {
    let p = worked_examples::counterexample_params(n).map_err(py_err)?;
    Ok(PyCounterexampleParams {
        n,
        alpha: p.alpha,
        beta: p.beta,
        mean_f: p.mean_f,
        c: p.c,
        y4: p.multiplier_fourth_power(),
        norm_bound: p.norm_bound(),
    })
}

#[pyfunction]
fn counterexample_multiplier(n: u64) -> PyResult<f64> {
    worked_examples::counterexample_multiplier(n).map_err(py_err)
}

#[pyfunction]
fn counterexample_norm_bound(n: u64) -> PyResult<f64> {
    worked_examples::counterexample_norm_bound(n).map_err(py_err)
}

/// `(wealth samples, weights, Ky Fan distance to 2/3, budget residual)`.
#[pyfunction]
fn counterexample_wealth(n: u64, n_samples: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>, f64, f64)> {
    let w = worked_examples::counterexample_wealth(n, n_samples, seed).map_err(py_err)?;
    Ok((w.wealth, w.weights, w.ky_fan_to_two_thirds, w.budget_residual))
}

#[pyclass(name = "SweepRow", frozen, get_all)]
pub struct PySweepRow {
    n: u64,
    error: Option<String>,
    l2_distance: f64,
    ucp_distance: f64,
    value_gap: f64,
    multiplier: f64,
    wealth_kyfan: f64,
    deflator_kyfan: f64,
}

fn sequence(limit: &PyRisk, terms: Vec<(u64, PyRisk)>, ensemble: &PyEnsemble) -> MarketSequence {
    MarketSequence {
        limit: limit.inner.clone(),
        terms: terms.into_iter().map(|(n, r)| (n, r.inner)).collect(),
        ensemble: Arc::clone(&ensemble.inner),
    }
}

#[pyfunction]
fn stability_sweep(
    limit: &PyRisk,
    terms: Vec<(u64, PyRisk)>,
    ensemble: &PyEnsemble,
    utility: &PyUtility,
    x: f64,
) -> PyResult<Vec<PySweepRow>> {
    let seq = sequence(limit, terms, ensemble);
    let report = stability::stability_sweep(&seq, &utility.inner, x).map_err(py_err)?;
    Ok(report
        .rows
        .into_iter()
        .map(|row| match row.outcome {
            Ok(m) => PySweepRow {
                n: row.n,
                error: None,
                l2_distance: m.l2_distance,
                ucp_distance: m.ucp_distance,
                value_gap: m.value_gap,
                multiplier: m.multiplier,
                wealth_kyfan: m.wealth_kyfan,
                deflator_kyfan: m.deflator_kyfan,
            },
            Err(e) => PySweepRow {
                n: row.n,
                error: Some(e.to_string()),
                l2_distance: f64::NAN,
                ucp_distance: f64::NAN,
                value_gap: f64::NAN,
                multiplier: f64::NAN,
                wealth_kyfan: f64::NAN,
                deflator_kyfan: f64::NAN,
            },
        })
        .collect())
}

/// `(tail curve, passed)` for the deflators of the limit and every term.
#[pyfunction]
#[pyo3(signature = (limit, terms, ensemble, utility, k_grid = None, threshold = 1e-2))]
fn ui_diagnostic(
    limit: &PyRisk,
    terms: Vec<(u64, PyRisk)>,
    ensemble: &PyEnsemble,
    utility: &PyUtility,
    k_grid: Option<Vec<f64>>,
    threshold: f64,
) -> PyResult<(Vec<f64>, bool)> {
    let seq = sequence(limit, terms, ensemble);
    let family: Vec<SampleSet> = seq.deflator_family().map_err(py_err)?;
    let cfg = UiConfig {
        k_grid: k_grid.unwrap_or_else(|| UiConfig::default().k_grid),
        threshold,
    };
    let cert = stability::v_relative_compactness_diag(&family, &utility.inner, &cfg).map_err(py_err)?;
    Ok((cert.tail_curve, cert.passed))
}

#[pymodule]
#[pyo3(name = "umstab")]
pub fn umstab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", umstab::VERSION)?;
    m.add_class::<PyUtility>()?;
    m.add_class::<PyRisk>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyCounterexampleParams>()?;
    m.add_class::<PySweepRow>()?;
    m.add_function(wrap_pyfunction!(solve_complete, m)?)?;
    m.add_function(wrap_pyfunction!(dual_value, m)?)?;
    m.add_function(wrap_pyfunction!(ky_fan_distance, m)?)?;
    m.add_function(wrap_pyfunction!(log_value_function, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_params, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_multiplier, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_norm_bound, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_wealth, m)?)?;
    m.add_function(wrap_pyfunction!(stability_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(ui_diagnostic, m)?)?;
    Ok(())
}
