use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone)]
pub enum Error {
    #[error("dimension mismatch: {context} expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numerical instability in {context}: {detail}")]
    NumericalInstability { context: String, detail: String },

    #[error("degenerate pair: u == v is not admissible for a squeezing check")]
    DegeneratePair,

    #[error("degenerate direction: b_{index} = 0, maximal coupling at this level unavailable")]
    DegenerateDirection { index: usize },

    #[error("precondition failed at step {step}: {detail}")]
    Precondition { step: usize, detail: String },

    #[error("grid too narrow: escaping mass {mass:.3e} exceeds 1e-6; widen the grid")]
    GridTooNarrow { mass: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e}); spectral gap may be small{}", lambda_ratio.map(|r| format!(", |lambda2/lambda1| ~ {r:.3}")).unwrap_or_default())]
    NoConvergence {
        iterations: usize,
        residual: f64,
        lambda_ratio: Option<f64>,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("inconclusive statistics: {0}")]
    Inconclusive(String),
}

impl Error {
    pub fn instability(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::NumericalInstability {
            context: context.into(),
            detail: detail.into(),
        }
    }
}
