use thiserror::Error;

/// Errors surfaced by the planning library and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("degenerate belief: {0}")]
    DegenerateBelief(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("kernel matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("search graph has an empty frontier: {0}")]
    EmptyFrontier(String),

    #[error("unsupported graph structure: {0}")]
    UnsupportedStructure(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
