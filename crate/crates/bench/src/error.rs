use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] mcroute_core::Error),

    #[error(transparent)]
    Gpn(#[from] mcroute_gpn::GpnError),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("bad input: {0}")]
    Input(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl BenchError {
    pub fn file(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| BenchError::File { path, source }
    }

    pub fn is_infeasible(&self) -> bool {
        match self {
            BenchError::Core(e) => e.is_infeasible(),
            BenchError::Gpn(e) => e.is_infeasible(),
            _ => false,
        }
    }

    /// Process exit status: 1 infeasible, 2 bad input, 3 anything else.
    pub fn exit_code(&self) -> i32 {
        use mcroute_core::Error as C;
        use mcroute_gpn::GpnError as G;
        if self.is_infeasible() {
            return 1;
        }
        match self {
            BenchError::Input(_) | BenchError::File { .. } => 2,
            BenchError::Core(e) | BenchError::Gpn(G::Core(e)) => match e {
                C::InvalidGraph(_)
                | C::InvalidInstance(_)
                | C::InvalidConfig(_)
                | C::Parse(_)
                | C::Budget(_)
                | C::InvalidTree(_)
                | C::MissingEdge(..)
                | C::MissingDestinations(_) => 2,
                _ => 3,
            },
            BenchError::Gpn(G::Config(_) | G::Checkpoint(_) | G::Io(_)) => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
