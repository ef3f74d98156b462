use std::fmt;

/// Which sweep produced a numerical failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Truth,
    Filter,
    Smoother,
    Oracle,
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Pass::Truth => "truth",
            Pass::Filter => "filter",
            Pass::Smoother => "smoother",
            Pass::Oracle => "oracle",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// A state component became non-finite or exceeded the blow-up threshold.
    #[error("{pass} pass diverged at step {step}")]
    Divergence { pass: Pass, step: usize },

    /// A covariance could not be factorized, even after jitter.
    #[error("{what} is not positive definite (step {step})")]
    NotPositiveDefinite { what: &'static str, step: usize },

    #[error("effective sample size collapsed to {ess:.3} at step {step}")]
    EssCollapse { step: usize, ess: f64 },

    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    #[error("underdetermined system: {0}")]
    Underdetermined(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::NotPositiveDefinite { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
