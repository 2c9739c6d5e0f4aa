use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error(
        "mesh is disconnected: component containing vertex {first_vertex} ({size} vertices) \
         is unreachable from vertex 0"
    )]
    Disconnected { first_vertex: usize, size: usize },

    #[error("cannot assign unique 8-bit colors to {0} vertices")]
    TooManyVertices(usize),

    #[error("vertex index {index} out of range for {count} vertices")]
    VertexOutOfRange { index: usize, count: usize },

    #[error("bone count mismatch: mesh has {mesh} bones, pose has {pose}")]
    BoneMismatch { mesh: usize, pose: usize },

    #[error("degenerate camera: {0}")]
    DegenerateCamera(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("empty mask: {0}")]
    EmptyMask(&'static str),

    #[error("augmentation leaves the foreground mask empty")]
    EmptyCrop,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss term `{0}`")]
    NonFinite(&'static str),

    #[error("checkpoint does not match model: {0}")]
    CheckpointMismatch(String),

    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("corrupt geodesic cache: {0}")]
    CorruptCache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}
