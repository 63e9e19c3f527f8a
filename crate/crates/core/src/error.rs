use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("rank deficient: {0}")]
    Rank(String),

    /// The solver ran out of sweeps. `best` is the last iterate.
    #[error("solver did not converge within {sweeps} sweeps (kkt residual {kkt_residual:e})")]
    NotConverged {
        sweeps: usize,
        kkt_residual: f64,
        best: Vec<f64>,
    },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("inconsistent extended support: F* minimizer gives {fstar:?}, small-xi solve gives {solve:?}")]
    Inconsistent { fstar: Vec<i8>, solve: Vec<i8> },

    #[error("unsupported: {0}")]
    Capability(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("grid point {index}: {source}")]
    AtGridPoint {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
