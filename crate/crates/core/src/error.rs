use thiserror::Error;

/// Errors raised by spec loading and the solvers.
///
/// Solver failures that carry mathematical meaning (a singular equilibrium
/// system, an unstable closed loop) are distinct variants so callers can
/// report them as results rather than crashes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("dimension mismatch in {block}: expected {expected}, found {found}")]
    Dimension {
        block: String,
        expected: String,
        found: String,
    },

    #[error("{matrix} is not positive {kind}: minimum eigenvalue {min_eigenvalue:e}")]
    Definiteness {
        matrix: String,
        kind: &'static str,
        min_eigenvalue: f64,
    },

    #[error("invalid value for {field}: {message}")]
    InvalidValue { field: String, message: String },

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("equilibrium system at stage {stage} is singular (condition number {condition_number:e})")]
    SingularEquilibrium { stage: usize, condition_number: f64 },

    #[error("{what} is unstable: spectral radius {spectral_radius}")]
    InstabilityDetected { what: String, spectral_radius: f64 },

    #[error("filter Riccati iteration diverged (residual {residual:e})")]
    FilterRiccatiDiverged { residual: f64 },

    #[error("closed-loop matrix unstable: eigenvalue {re}+{im}i has modulus {modulus}")]
    ClosedLoopUnstable { re: f64, im: f64, modulus: f64 },

    #[error("steady state infeasible: Theta - Sigma has eigenvalue {min_eigenvalue:e}")]
    SteadyStateInfeasible { min_eigenvalue: f64 },

    #[error("mean-field system is singular (condition number {condition_number:e})")]
    SingularMeanField { condition_number: f64 },

    #[error("enumeration of {size} joint profiles exceeds budget {budget}")]
    BudgetExceeded { size: u128, budget: u128 },

    #[error("assumption violated ({assumption}): {detail}")]
    AssumptionViolated { assumption: String, detail: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(
        block: impl Into<String>,
        expected: impl std::fmt::Display,
        found: impl std::fmt::Display,
    ) -> Self {
        Error::Dimension {
            block: block.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Short machine-readable tag, used in CLI failure reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Dimension { .. } => "dimension",
            Error::Definiteness { .. } => "definiteness",
            Error::InvalidValue { .. } => "invalid_value",
            Error::NoConvergence { .. } => "no_convergence",
            Error::SingularEquilibrium { .. } => "singular_equilibrium",
            Error::InstabilityDetected { .. } => "instability_detected",
            Error::FilterRiccatiDiverged { .. } => "filter_riccati_diverged",
            Error::ClosedLoopUnstable { .. } => "closed_loop_unstable",
            Error::SteadyStateInfeasible { .. } => "steady_state_infeasible",
            Error::SingularMeanField { .. } => "singular_mean_field",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::AssumptionViolated { .. } => "assumption_violated",
            Error::Unsupported(_) => "unsupported",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// True for failures that are outcomes of the mathematics rather than
    /// bad input or environment problems.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::SingularEquilibrium { .. }
                | Error::InstabilityDetected { .. }
                | Error::FilterRiccatiDiverged { .. }
                | Error::ClosedLoopUnstable { .. }
                | Error::SteadyStateInfeasible { .. }
                | Error::SingularMeanField { .. }
                | Error::BudgetExceeded { .. }
                | Error::AssumptionViolated { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
