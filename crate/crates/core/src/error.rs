use thiserror::Error;

/// Errors raised by the contagion model, the solver and the experiment harness.
#[derive(Debug, Error)]
pub enum PolyaError {
    #[error("malformed network document: {0}")]
    Malformed(String),

    #[error("node id {id} out of range for a network with {nodes} nodes")]
    NodeOutOfRange { id: usize, nodes: usize },

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("self-loop on node {0}; self-inclusion is implicit in closed neighbourhoods")]
    SelfLoop(usize),

    #[error("network is disconnected: {reached} of {nodes} nodes reachable from node 0")]
    Disconnected { reached: usize, nodes: usize },

    #[error("network must have at least one node")]
    Empty,

    #[error("{kind} network needs at least {min} nodes, got {got}")]
    TooFewNodes {
        kind: &'static str,
        min: usize,
        got: usize,
    },

    #[error("invalid initial urn: {0}")]
    InvalidUrn(String),

    #[error("infeasible policy: {0}")]
    InfeasiblePolicy(String),

    #[error("exact enumeration supports at most {cap} nodes, got {nodes}; use the Monte Carlo estimator")]
    EnumerationCap { nodes: usize, cap: usize },

    #[error("non-finite evaluation at solver iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("solver stopped after {iterations} iterations with certified gap {gap:e} above tolerance {tol:e}")]
    NotConverged { gap: f64, tol: f64, iterations: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trial {trial}, step {step}: {source}")]
    Trial {
        trial: usize,
        step: usize,
        #[source]
        source: Box<PolyaError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PolyaError {
    /// True for errors caused by invalid user input (documents, ranges, shapes)
    /// rather than by a failing computation.
    pub fn is_validation(&self) -> bool {
        match self {
            PolyaError::Malformed(_)
            | PolyaError::NodeOutOfRange { .. }
            | PolyaError::DuplicateEdge(..)
            | PolyaError::SelfLoop(_)
            | PolyaError::Disconnected { .. }
            | PolyaError::Empty
            | PolyaError::TooFewNodes { .. }
            | PolyaError::InvalidUrn(_)
            | PolyaError::InvalidArgument(_)
            | PolyaError::EnumerationCap { .. } => true,
            PolyaError::Trial { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, PolyaError>;
