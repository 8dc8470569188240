use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("network generation exceeded the edge cap of {cap}")]
    EdgeCapExceeded { cap: usize },

    #[error("singular flow system: component containing nodes {nodes:?} has no hanging node with a prescribed pressure")]
    SingularSystem { nodes: Vec<usize> },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("missing boundary pressure for hanging node {0}")]
    MissingBoundary(usize),

    #[error("zero parent flow at node {node}: branch is dead")]
    DeadBranch { node: usize },

    #[error("bubble radius collapsed below the guard at t = {time:e} s")]
    Collapse { time: f64 },

    #[error("bubble integration produced a non-finite state at t = {time:e} s")]
    Blowup { time: f64 },

    #[error("bubble {bubble_id}: {source}")]
    Bubble {
        bubble_id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("format error in {what}: {reason}")]
    Format { what: String, reason: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
