use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid clustering: {0}")]
    InvalidClustering(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible constraint set: {0}")]
    InfeasibleConstraints(String),

    #[error("instance too large for exhaustive enumeration: {partitions} partitions exceed limit {limit}")]
    TooLarge { partitions: f64, limit: f64 },

    #[error("degenerate clustering: {0}")]
    Degenerate(String),

    #[error("missing ground-truth labels for dataset {0}")]
    MissingLabels(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
