use thiserror::Error;

use crate::estimators::CollinearityReport;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed configuration: bad graph, mechanism, intervention, or config file.
    #[error("configuration error: {0}")]
    Config(String),

    /// The graph is not acyclic.
    #[error("graph has a cycle through `{0}`")]
    Cycle(String),

    /// A name does not resolve to a node.
    #[error("unknown node `{0}`")]
    UnknownNode(String),

    /// Input data is degenerate for the requested fit (e.g. a constant column).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Closed-form path tracing was requested on a mechanism it does not cover.
    #[error("unsupported analytic request: {0}")]
    UnsupportedAnalytic(String),

    /// The regression design is rank deficient; carries the full diagnostic.
    #[error(
        "collinear design: condition number {:.3e} exceeds threshold {:.1e}",
        .0.condition_number,
        .0.threshold
    )]
    Collinear(Box<CollinearityReport>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
