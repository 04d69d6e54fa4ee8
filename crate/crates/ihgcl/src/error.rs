//! Error types shared across the crate.

use std::path::PathBuf;

/// Everything that can go wrong while loading data, validating configuration,
/// or round-tripping artifacts. Shape mismatches inside numeric kernels are
/// programming errors and panic instead.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    /// A malformed or out-of-range line in a relation edge file.
    #[error("{file}:{line}: {reason}")]
    EdgeFile {
        file: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("unknown node type `{0}`")]
    UnknownNodeType(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    /// A meta-path spec that does not validate against the graph schema.
    #[error("meta-path `{spec}`: {reason}")]
    MetaPath { spec: String, reason: String },

    /// Meta-paths were requested on a graph with too few types to be
    /// heterogeneous (|node types| + |relations| must exceed 2).
    #[error(
        "graph is not heterogeneous: {node_types} node type(s) + {relations} relation(s) ≤ 2"
    )]
    NotHeterogeneous { node_types: usize, relations: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("node index {node} out of range (size {size})")]
    NodeOutOfRange { node: usize, size: usize },

    /// Training produced a non-finite loss; carries the component dump.
    #[error("non-finite loss at epoch {epoch}: {components}")]
    NonFiniteLoss { epoch: usize, components: String },

    /// Negative sampling could not find an unobserved item.
    #[error("negative sampling exhausted retries (every sampled user saturates the catalog)")]
    NegativeSamplingExhausted,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
