use thiserror::Error;

/// Errors raised by operators, solvers and problem builders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("inner solver failed at outer step {step}: {source}")]
    InnerSolve {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("image parse error at byte {offset}: {reason}")]
    ImageParse { offset: usize, reason: String },

    #[error("config error at {}: {reason}", location(*line, field))]
    Config {
        /// 1-based line, 0 when the problem is not tied to a line.
        line: usize,
        field: String,
        reason: String,
    },

    #[error("problem too large: {0}")]
    ResourceLimit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn location(line: usize, field: &str) -> String {
    match (line, field.is_empty()) {
        (0, true) => "config".to_owned(),
        (0, false) => format!("field `{field}`"),
        (l, true) => format!("line {l}"),
        (l, false) => format!("line {l}, field `{field}`"),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
