use crate::geometry::Vertex;

#[derive(Debug, thiserror::Error)]
pub enum SlabError {
    #[error("vertex ({x}, {y}, {z}) outside window", x = .0.x, y = .0.y, z = .0.z)]
    OutsideWindow(Vertex),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty set argument: {0}")]
    EmptySet(String),
    #[error("expected {expected} region, got {got}")]
    RegionKind { expected: &'static str, got: &'static str },
    #[error("cannot compare a path with a circuit")]
    MixedComparison,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("estimator did not converge: {0}")]
    NonConvergent(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SlabError>;
