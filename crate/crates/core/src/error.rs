use std::path::PathBuf;

use crate::instance::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed instance document")]
    Json(#[from] serde_json::Error),

    #[error("unknown keys in instance document: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("instance is invalid ({} violation(s)): {}", .0.len(), .0.first().map(|v| v.message.as_str()).unwrap_or(""))]
    InvalidInstance(Vec<Violation>),

    #[error("regime {regime} cannot pump product {product}")]
    CannotPump { regime: String, product: String },

    #[error("site {site} has no standard batch size for product {product}")]
    MissingStandardBatch { site: String, product: String },

    #[error("unknown {kind} {id:?}")]
    UnknownReference { kind: &'static str, id: String },

    #[error("batch {batch} is not placeable on edge {edge}")]
    BatchNotOnEdge { edge: String, batch: String },

    #[error("contradictory fixings: {0}")]
    ContradictoryFixings(String),

    #[error("fixed transport {0} does not fit inside the horizon")]
    FixedOutsideHorizon(String),

    #[error("distribution target on non-storage site {0}")]
    TargetOnNonStorage(String),

    #[error("placement of {batch} on {edge} at t={start} lies outside the horizon")]
    PlacementOutsideHorizon { edge: String, batch: String, start: usize },

    #[error("solver executable not found (set PIPESCHED_SOLVER or put `cbc` on PATH)")]
    SolverNotFound,

    #[error("failed to run solver")]
    SolverIo(#[source] std::io::Error),

    #[error("could not parse solver output: {message}\n--- excerpt ---\n{excerpt}")]
    SolutionParse { message: String, excerpt: String },

    #[error("binary variable {name} has fractional value {value}")]
    Integrality { name: String, value: f64 },

    #[error("objective mismatch: solver reported {reported}, model evaluates to {recomputed}")]
    ObjectiveMismatch { reported: f64, recomputed: f64 },

    #[error("solver returned a schedule that fails validation: {0}")]
    InvalidSchedule(String),

    #[error("invalid solver configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
