use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("system of {requested} qubits exceeds the limit of {limit}")]
    Size { requested: usize, limit: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("index error: {0}")]
    Index(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("qubits belong to different systems; merging systems is not supported")]
    CrossSystem,

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("no {kind} link from {from} to {to}")]
    Routing { kind: &'static str, from: String, to: String },

    #[error("holder violation: {0}")]
    HolderViolation(String),

    #[error("broken link: {peer} closed its {kind} channel to {agent}")]
    BrokenLink { agent: String, peer: String, kind: &'static str },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("system {system} is already borrowed by this execution context")]
    ViewAlreadyHeld { system: usize },

    #[error("deadlock watchdog expired after {seconds}s; blocked endpoints: {blocked:?}")]
    Deadlock { seconds: f64, blocked: Vec<String> },

    #[error("run aborted because another agent failed")]
    Aborted,

    #[error("agent {agent} failed: {source}")]
    AgentFailed {
        agent: String,
        #[source]
        source: Box<Error>,
    },

    #[error("agent {agent} panicked: {message}")]
    AgentPanicked { agent: String, message: String },

    #[error("resource error: {0}")]
    Resource(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape { expected: expected.to_string(), actual: actual.to_string() }
    }

    /// Name of the agent whose failure this error reports, if any.
    pub fn failing_agent(&self) -> Option<&str> {
        match self {
            Error::AgentFailed { agent, .. } | Error::AgentPanicked { agent, .. } => Some(agent),
            _ => None,
        }
    }
}
