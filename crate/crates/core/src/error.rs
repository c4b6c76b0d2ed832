use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("treatment group {0} is empty")]
    EmptyGroup(usize),

    #[error("zero total weight in treatment group {0}")]
    ZeroWeight(usize),

    #[error("degenerate survival fit: {0}")]
    DegenerateSurvival(String),

    #[error("{model}: no convergence after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NoConvergence {
        model: &'static str,
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("{0}: singular or rank-deficient matrix")]
    Singular(&'static str),

    #[error(
        "propensity model: separation detected (coefficient norm {coef_norm:.1}, gradient norm {gradient_norm:.3e}); \
         consider trimming or simplifying the design"
    )]
    Separation { coef_norm: f64, gradient_norm: f64 },

    #[error("censoring weight overflow for unit `{unit}` (G = {value:.3e} below floor)")]
    CensoringWeight { unit: String, value: f64 },

    #[error("risk-set proportion is zero at time {0}")]
    ZeroRiskSet(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad
    /// configuration or data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateSurvival(_)
                | Error::NoConvergence { .. }
                | Error::Singular(_)
                | Error::Separation { .. }
                | Error::CensoringWeight { .. }
                | Error::ZeroRiskSet(_)
                | Error::ZeroWeight(_)
        )
    }
}
