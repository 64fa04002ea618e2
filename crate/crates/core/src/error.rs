use crate::graph::NodeId;

/// Errors produced by instance handling, solvers and the routing environment.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid generator config: {0}")]
    InvalidConfig(String),

    #[error("generator failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("destinations missing from tree: {0:?}")]
    MissingDestinations(Vec<NodeId>),

    #[error("edge ({0}, {1}) is not in the graph")]
    MissingEdge(NodeId, NodeId),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("infeasible: destination {0} is unreachable from the source")]
    Unreachable(NodeId),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("dead end at node {0}: no valid action")]
    DeadEnd(NodeId),

    #[error("invalid action {action} at node {at}")]
    InvalidAction { at: NodeId, action: NodeId },

    #[error("environment error: {0}")]
    Env(String),

    #[error("policy error: {0}")]
    Policy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that mean "no feasible routing exists" rather than bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Unreachable(_) | Error::DeadEnd(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
