use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("k-means needs at least one point")]
    EmptyInput,

    #[error("cannot form {requested} clusters from {available} states")]
    TooManyClusters { requested: usize, available: usize },

    #[error("cluster {0} has zero degree; normalized cut undefined")]
    ZeroDegreeCluster(usize),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("scenario {scenario} (seed {seed}): {source}")]
    Scenario {
        scenario: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io { path: path.into(), source }
    }

    pub fn in_scenario(self, scenario: &str, seed: u64) -> Error {
        Error::Scenario { scenario: scenario.to_string(), seed, source: Box::new(self) }
    }

    /// Configuration problems map to exit code 1, everything else to 2.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Scenario { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
