use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{function} is only defined for positive arguments, got {value}")]
    Domain { function: &'static str, value: f64 },

    #[error("stochastic exponential left the positive finite range on path {path}")]
    Overflow { path: usize },

    #[error("{0} needs path-level values, which a terminal-density risk process does not provide")]
    Unsupported(&'static str),

    #[error("ensemble has no second driver")]
    MissingSecondDriver,

    #[error("sample sets have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("budget constraint cannot be met: {0}")]
    BudgetInfeasible(String),

    #[error("budget map is not strictly decreasing near y = {y}")]
    NonMonotoneBudget { y: f64 },

    #[error("{quantity} is not numerically integrable at y = {y} ({diagnostics})")]
    NonIntegrable {
        quantity: &'static str,
        y: f64,
        diagnostics: PartialSums,
    },

    #[error("dual candidate family is empty")]
    EmptyFamily,

    #[error("dual candidate family must contain the zero integrand")]
    MissingZeroCandidate,

    #[error("config: {0}")]
    Config(String),
}

/// Running-sum diagnostics attached to [`Error::NonIntegrable`].
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSums {
    pub n_terms: usize,
    pub n_non_finite: usize,
    /// Partial means after 10%, 20%, ..., 100% of the terms.
    pub partial_means: Vec<f64>,
    /// Largest single |term| divided by the sum of |terms|.
    pub max_term_share: f64,
}

impl PartialSums {
    pub(crate) fn from_terms(terms: &[f64]) -> Self {
        let n = terms.len();
        let n_non_finite = terms.iter().filter(|t| !t.is_finite()).count();
        let mut partial_means = Vec::with_capacity(10);
        let mut acc = 0.0;
        let mut next = 1;
        for (i, t) in terms.iter().enumerate() {
            acc += t;
            while next <= 10 && i + 1 >= (n * next).div_ceil(10) {
                partial_means.push(acc / (i + 1) as f64);
                next += 1;
            }
        }
        let abs_total: f64 = terms.iter().map(|t| t.abs()).sum();
        let max_abs = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let max_term_share = if abs_total > 0.0 { max_abs / abs_total } else { 0.0 };
        Self {
            n_terms: n,
            n_non_finite,
            partial_means,
            max_term_share,
        }
    }
}

impl fmt::Display for PartialSums {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} terms, {} non-finite, max term share {:.3e}, partial means [",
            self.n_terms, self.n_non_finite, self.max_term_share
        )?;
        for (i, m) in self.partial_means.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{m:.6e}")?;
        }
        write!(f, "]")
    }
}
