use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("type error: {0}")]
    Type(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("csv error at row {row}, column {column}: {message}")]
    CsvParse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        /// Byte offsets of the offending token.
        span: (usize, usize),
        message: String,
    },

    #[error("bind error: {0}")]
    Bind(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("integer overflow in {0}")]
    Overflow(&'static str),

    #[error("plan error: {0}")]
    Plan(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by user input rather than engine faults.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Plan(_))
    }
}
