use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by the CLI exit-code contract: usage/config errors
/// map to exit 1, data/parse errors to exit 2, numeric errors to exit 3.
#[derive(Debug, Error)]
pub enum TnError {
    #[error("dimension mismatch: {context} (shapes {lhs:?} vs {rhs:?})")]
    Dimension {
        context: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("axis index out of range: {context}")]
    AxisIndex { context: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    #[error("structural error: {0}")]
    Structure(String),

    #[error("plan integrity error at step {step}: {context}")]
    PlanIntegrity { step: usize, context: String },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("parse error at line {line}: {context}")]
    Parse { line: usize, context: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TnError>;

impl TnError {
    pub fn dimension(context: impl Into<String>, lhs: &[usize], rhs: &[usize]) -> Self {
        TnError::Dimension {
            context: context.into(),
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub fn axis(context: impl Into<String>) -> Self {
        TnError::AxisIndex {
            context: context.into(),
        }
    }

    /// Exit code for the CLI contract: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            TnError::Config(_) | TnError::UnsupportedTopology(_) => 1,
            TnError::Parse { .. } | TnError::Format(_) | TnError::Io(_) | TnError::Json(_) => 2,
            TnError::Numeric(_)
            | TnError::Dimension { .. }
            | TnError::AxisIndex { .. }
            | TnError::Structure(_)
            | TnError::PlanIntegrity { .. }
            | TnError::DegenerateInput(_) => 3,
        }
    }
}
