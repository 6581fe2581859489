use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// `column` is 1-based and counts characters of the text form being parsed.
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("incompatible grids: {0}")]
    IncompatibleGrid(String),

    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("empty domain")]
    EmptyDomain,

    #[error("degenerate capacity: total capacity of the window is zero")]
    DegenerateCapacity,

    #[error("shape error: {0}")]
    Shape(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("cost guard: {0}")]
    CostGuard(String),
}

impl Error {
    pub(crate) fn parse(column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            column,
            message: message.into(),
        }
    }

    /// True for errors caused by malformed input text or specs rather than by
    /// numerics. The CLI maps these to exit status 1 and everything else to 2.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::InvalidSpec(_))
    }

    /// Shift the column of a parse error by `offset` characters, used when a
    /// sub-form is parsed out of a larger string.
    pub(crate) fn at_offset(self, offset: usize) -> Self {
        match self {
            Error::Parse { column, message } => Error::Parse {
                column: column + offset,
                message,
            },
            other => other,
        }
    }
}
