//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate line segment: endpoints coincide")]
    DegenerateSegment,

    #[error("warped point at infinity (|w| <= {0:e})")]
    PointAtInfinity(f64),

    #[error("homography is not invertible (|det| = {0:e})")]
    SingularHomography(f64),

    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("backward requires a scalar loss node, got shape {0}")]
    NonScalarLoss(String),

    #[error("cannot normalize a (near-)zero vector (norm = {0:e})")]
    ZeroVector(f64),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("{file}:{line}: {msg}")]
    Format {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("evaluation requires at least one ground-truth segment")]
    EmptyGroundTruth,

    #[error("training aborted at epoch {epoch}, step {step}: {msg}")]
    TrainingAborted {
        epoch: usize,
        step: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
