//! Serializable experiment description (TOML: `key = value` lines under
//! `[section]` headers).

use serde::{Deserialize, Serialize};

use crate::duality::DualCandidate;
use crate::market::{AssetForm, RiskProcess, TimeGrid};
use crate::preferences::{make_log, make_power, UtilityPair};
use crate::stability::UiConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarketSpec {
    Zero,
    Constant { lambda: f64 },
    Linear { intercept: f64, slope: f64 },
    Affine { level: f64, time_slope: f64, state_slope: f64 },
    Counterexample { n: u64 },
}

impl MarketSpec {
    pub fn risk_process(&self) -> RiskProcess {
        match *self {
            Self::Zero => RiskProcess::zero(),
            Self::Constant { lambda } => RiskProcess::Constant(lambda),
            Self::Linear { intercept, slope } => RiskProcess::Linear { intercept, slope },
            Self::Affine {
                level,
                time_slope,
                state_slope,
            } => RiskProcess::AffineState {
                level,
                time_slope,
                state_slope,
            },
            Self::Counterexample { n } => RiskProcess::TerminalDensity { n },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    Log,
    Power { gamma: f64 },
}

impl UtilitySpec {
    pub fn build(&self) -> Result<UtilityPair> {
        match *self {
            Self::Log => Ok(make_log()),
            Self::Power { gamma } => make_power(gamma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub horizon: f64,
    pub steps: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            steps: 256,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.horizon, self.steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub paths: usize,
    pub seed: u64,
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        Self {
            paths: 100_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSpec {
    pub form: AssetForm,
    /// Fraction of wealth held in the asset.
    pub wealth_fraction: f64,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            form: AssetForm::Multiplicative,
            wealth_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSpec {
    pub initial_wealth: f64,
}

impl Default for SolveSpec {
    fn default() -> Self {
        Self { initial_wealth: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualSpec {
    pub y_grid: Vec<f64>,
    pub nu_min: f64,
    pub nu_max: f64,
    pub nu_step: f64,
}

impl Default for DualSpec {
    fn default() -> Self {
        Self {
            y_grid: vec![0.5, 1.0, 2.0],
            nu_min: -0.5,
            nu_max: 0.5,
            nu_step: 0.1,
        }
    }
}

impl DualSpec {
    pub fn family(&self) -> Vec<DualCandidate> {
        DualCandidate::constant_grid(self.nu_min, self.nu_max, self.nu_step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepSpec {
    /// `λⁿ = base (1 + 1/n)`.
    RelativeShift { base: f64, indices: Vec<u64> },
    /// `λⁿ = base + 1/n`.
    AdditiveShift { base: f64, indices: Vec<u64> },
    Counterexample { indices: Vec<u64> },
}

impl SweepSpec {
    pub fn indices(&self) -> &[u64] {
        match self {
            Self::RelativeShift { indices, .. }
            | Self::AdditiveShift { indices, .. }
            | Self::Counterexample { indices } => indices,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleSpec {
    pub n_list: Vec<u64>,
}

impl Default for CounterexampleSpec {
    fn default() -> Self {
        Self {
            n_list: vec![2, 10, 100],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub market: MarketSpec,
    pub utility: UtilitySpec,
    pub grid: GridSpec,
    pub monte_carlo: MonteCarloSpec,
    pub simulate: SimulateSpec,
    pub solve: SolveSpec,
    pub dual: DualSpec,
    pub sweep: SweepSpec,
    pub counterexample: CounterexampleSpec,
    pub ui: UiConfig,
    pub output: OutputSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            market: MarketSpec::Constant { lambda: 0.2 },
            utility: UtilitySpec::Log,
            grid: GridSpec::default(),
            monte_carlo: MonteCarloSpec::default(),
            simulate: SimulateSpec::default(),
            solve: SolveSpec::default(),
            dual: DualSpec::default(),
            sweep: SweepSpec::RelativeShift {
                base: 0.2,
                indices: vec![1, 2, 4, 8, 16, 32, 64],
            },
            counterexample: CounterexampleSpec::default(),
            ui: UiConfig::default(),
            output: OutputSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn custom_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.market = MarketSpec::Affine {
            level: 0.1,
            time_slope: -0.3,
            state_slope: 1.0 / 3.0,
        };
        cfg.utility = UtilitySpec::Power { gamma: 0.75 };
        cfg.sweep = SweepSpec::Counterexample { indices: vec![10, 100] };
        cfg.ui.threshold = 0.123456789012345;
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str("[utility]\nkind = \"power\"\ngamma = -1.0\n").unwrap();
        assert_eq!(cfg.utility, UtilitySpec::Power { gamma: -1.0 });
        assert_eq!(cfg.grid, GridSpec::default());
    }

    #[test]
    fn malformed_and_unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("[grid]\nsteps = \"many\"\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[grid]\nwidth = 3\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[nonsense]\n").is_err());
    }
}
