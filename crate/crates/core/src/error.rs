use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("jacobian of {n} points x {p} parameters exceeds the {limit}-entry limit")]
    TooLarge { n: usize, p: usize, limit: usize },

    #[error("non-finite loss term at {} point {index}", if *.boundary { "boundary" } else { "interior" })]
    NonFiniteLoss { index: usize, boundary: bool },

    #[error("training diverged at epoch {epoch} (loss {loss:e})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("singular path: {0}")]
    SingularPath(String),

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("collocation error: {0}")]
    Collocation(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("problem `{0}` has no closed-form solution")]
    NoExactSolution(String),

    #[error("finite-difference solver did not converge in {steps} steps (last residual {residual:e})")]
    NoConvergence { steps: usize, residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("unknown problem id `{0}`")]
    UnknownProblem(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
