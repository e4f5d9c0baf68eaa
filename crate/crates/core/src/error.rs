use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed GraphML: {0}")]
    Graphml(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("self-loop on node `{0}`")]
    SelfLoop(String),
    #[error("edge {a}-{b} has non-positive weight {weight}")]
    NonPositiveWeight { a: String, b: String, weight: f64 },
    #[error("node `{node}` has non-positive priority {priority}")]
    NonPositivePriority { node: String, priority: f64 },
    #[error("topology is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("topology has no nodes")]
    EmptyTopology,
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("profiles do not share a service universe")]
    UniverseMismatch,
    #[error("rank correlation needs at least two services, got {0}")]
    TooFewServices(usize),
    #[error("invalid trace: {0}")]
    Trace(String),
    #[error("duplicate user group at node `{0}`")]
    DuplicateUser(String),
    #[error("k = {k} is outside 1..={max}")]
    ServerCount { k: usize, max: usize },
    #[error("exhaustive search over {combinations} placements exceeds the limit of {limit}")]
    TooLarge { combinations: u128, limit: u128 },
    #[error("server `{0}` has no assigned users")]
    EmptyServer(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ServerCount { .. } | Error::TooLarge { .. } => 2,
            Error::Io(_) => 3,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 3,
            _ => 1,
        }
    }
}
