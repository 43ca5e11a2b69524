use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("unknown column `{0}` in input header")]
    UnknownColumn(String),

    #[error("column `{0}` declared in schema is absent from input header")]
    MissingColumn(String),

    #[error("invalid data table: {0}")]
    Table(String),

    #[error("design matrix is rank deficient; collinear column(s): {}", .0.join(", "))]
    Collinear(Vec<String>),

    #[error("too few rows: {rows} rows for {params} parameters")]
    TooFewRows { rows: usize, params: usize },

    #[error("method for `{variable}`: {message}")]
    Method { variable: String, message: String },

    #[error("invalid synthesis plan: {0}")]
    Plan(String),

    #[error("invalid rule: {0}")]
    Rule(String),

    #[error("estimator {0} needs at least two synthetic replicates")]
    NeedsReplicates(&'static str),

    #[error("model fit failed on replicate {replicate}: {source}")]
    ReplicateFit {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid model formula `{formula}`: {message}")]
    Formula { formula: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
