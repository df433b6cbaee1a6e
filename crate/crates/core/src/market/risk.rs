use std::fmt;
use std::sync::Arc;

use super::DriverPath;

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type StateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Market price of risk `λ`.
///
/// Path-level kinds are evaluated at the left endpoint of every grid
/// interval, using only `(t_k, M_{t_k})`. `TerminalDensity` is the
/// counterexample market, known only through its terminal deflator
/// `Z_T = c_n f^n(B_T)`.
#[derive(Clone)]
pub enum RiskProcess {
    Constant(f64),
    /// `λ(t) = intercept + slope · t`
    Linear { intercept: f64, slope: f64 },
    Deterministic(TimeFn),
    /// `λ_t = level + time_slope · t + state_slope · M_t`
    AffineState {
        level: f64,
        time_slope: f64,
        state_slope: f64,
    },
    State(StateFn),
    TerminalDensity { n: u64 },
}

impl fmt::Debug for RiskProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Linear { intercept, slope } => write!(f, "Linear({intercept} + {slope} t)"),
            Self::Deterministic(_) => write!(f, "Deterministic(<fn>)"),
            Self::AffineState {
                level,
                time_slope,
                state_slope,
            } => write!(f, "AffineState({level} + {time_slope} t + {state_slope} M)"),
            Self::State(_) => write!(f, "State(<fn>)"),
            Self::TerminalDensity { n } => write!(f, "TerminalDensity(n = {n})"),
        }
    }
}

impl RiskProcess {
    pub fn zero() -> Self {
        Self::Constant(0.0)
    }

    pub fn deterministic(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Deterministic(Arc::new(f))
    }

    pub fn state(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::State(Arc::new(f))
    }

    pub fn is_path_level(&self) -> bool {
        !matches!(self, Self::TerminalDensity { .. })
    }

    /// Value at time `t` when `λ` does not depend on the path.
    pub fn deterministic_at(&self, t: f64) -> Option<f64> {
        match self {
            Self::Constant(c) => Some(*c),
            Self::Linear { intercept, slope } => Some(intercept + slope * t),
            Self::Deterministic(f) => Some(f(t)),
            _ => None,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(
            self,
            Self::Constant(_) | Self::Linear { .. } | Self::Deterministic(_)
        )
    }

    fn eval(&self, t: f64, m: f64) -> f64 {
        match self {
            Self::AffineState {
                level,
                time_slope,
                state_slope,
            } => level + time_slope * t + state_slope * m,
            Self::State(f) => f(t, m),
            other => other.deterministic_at(t).unwrap_or(f64::NAN),
        }
    }

    /// `λ_{t_k}` for each interval `[t_k, t_{k+1})` of one path. The value for
    /// interval `k` depends on `M` only through `M_{t_k}`.
    pub fn interval_values(&self, times: &[f64], path: DriverPath<'_>) -> Vec<f64> {
        let mut out = Vec::with_capacity(path.m_increments.len());
        let mut m = 0.0;
        for (k, dm) in path.m_increments.iter().enumerate() {
            out.push(self.eval(times[k], m));
            m += dm;
        }
        out
    }

    /// `λ` at every grid point, including the horizon.
    pub fn point_values(&self, times: &[f64], path: DriverPath<'_>) -> Vec<f64> {
        let mut out = Vec::with_capacity(times.len());
        let mut m = 0.0;
        for (k, &t) in times.iter().enumerate() {
            out.push(self.eval(t, m));
            if k < path.m_increments.len() {
                m += path.m_increments[k];
            }
        }
        out
    }
}
