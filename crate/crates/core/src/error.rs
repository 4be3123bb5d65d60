use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("non-finite integrand value at x={x:?}, y={y}")]
    NonFinite { x: Vec<f64>, y: f64 },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error(
        "region violates the recovery condition: Pr(M=1, X in C) = {region_mass:.6e} \
         but at least c1*Pr(M=1) = {required_mass:.6e} is needed"
    )]
    ConditionViolated { region_mass: f64, required_mass: f64 },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("fit did not converge after {iterations} iterations ({reason})")]
    FitNotConverged { iterations: usize, reason: String },

    #[error("recovery oracle failed at row {row}: {reason}")]
    Oracle { row: usize, reason: String },

    #[error("solver did not converge after {iterations} iterations; last iterate {last:?}")]
    SolverNotConverged { iterations: usize, last: Vec<f64> },

    #[error("unsupported criterion: {0}")]
    Unsupported(String),

    #[error("no feasible start: Pr(M=1) = {prob_missing:.6}, best slack = {best_slack:.6e}")]
    Infeasible { prob_missing: f64, best_slack: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("csv parse error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Spec(_)
                | Error::Config(_)
                | Error::Csv { .. }
                | Error::Schema(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Unsupported(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
