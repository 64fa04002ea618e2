#[derive(Debug, thiserror::Error)]
pub enum GpnError {
    #[error(transparent)]
    Core(#[from] mcroute_core::Error),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GpnError {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, GpnError::Core(e) if e.is_infeasible())
    }
}

pub type Result<T, E = GpnError> = std::result::Result<T, E>;
