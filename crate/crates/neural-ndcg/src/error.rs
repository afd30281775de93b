use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform for the named operation.
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// The named operation produced a NaN or infinity.
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    /// A caller-supplied value violates a documented precondition.
    #[error("{0}")]
    InvalidInput(String),

    /// Malformed dataset line.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Bad or missing training configuration.
    #[error("config: {0}")]
    Config(String),

    /// Unreadable or incompatible model checkpoint.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// Failure inside the training loop, with position context.
    #[error("epoch {epoch}, batch {batch}: {msg}")]
    Training {
        epoch: usize,
        batch: usize,
        msg: String,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

/// Attach the offending path to an IO result, so "No such file" errors say
/// which file.
pub(crate) fn io_context<T>(
    result: std::io::Result<T>,
    path: &std::path::Path,
) -> Result<T> {
    result.map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}
