use thiserror::Error;

/// Errors produced anywhere in the discretisation / analysis pipeline.
#[derive(Debug, Error)]
pub enum MgtError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("geometric condition violated: {0}")]
    GeometricCondition(String),

    #[error("boundary partition error: {0}")]
    Partition(String),

    #[error("singular stiffness matrix: {0}")]
    SingularStiffness(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid fit window: {0}")]
    Window(String),

    #[error("eigensolver did not converge: {message} (residuals: {residuals:?})")]
    NoConvergence { message: String, residuals: Vec<f64> },

    #[error("unknown identity tag `{0}`")]
    UnknownIdentity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MgtError>;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(MgtError::Validation(format!("{name} must be finite, got {value}")))
    }
}
