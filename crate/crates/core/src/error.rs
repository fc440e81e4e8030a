use thiserror::Error;

/// Errors produced anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rank zero: operator has no positive eigenvalue")]
    RankZero,

    #[error("index {index} out of range for {len} components")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("not a saddle point: optimality residual {0:e} exceeds 1e-6")]
    NotASaddlePoint(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stepsize condition violated: {0}")]
    StepsizeCondition(String),

    #[error("stochastic CV not supported")]
    StochasticCondatVu,

    #[error("diagnostics require oracle solution")]
    MissingOracle,

    #[error("uninitialized gradient table")]
    UninitializedTable,

    #[error("diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("singular KKT matrix")]
    SingularKkt,

    #[error("no certified reference: {0}")]
    NoCertifiedReference(String),

    #[error("hypothesis unmet: {0}")]
    HypothesisUnmet(String),

    #[error("disconnected graph: gossip matrix kernel is larger than the consensus line")]
    DisconnectedGraph,

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("all configurations diverged: {0}")]
    AllDiverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
