use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{field}` = {value} outside [{min}, {max}]")]
    Range {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("degenerate quadrilateral: {0}")]
    DegenerateQuad(String),
    #[error("singular matrix (det = {0:e})")]
    Singular(f64),
    #[error("point maps to infinity")]
    PointAtInfinity,
    #[error("gauge entry m[2][2] vanished; matrix cannot be normalized")]
    Gauge,
    #[error("rank-deficient correspondences: {0}")]
    RankDeficient(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("B1/B2 disjointness violated by: {}", .0.join(", "))]
    Disjointness(Vec<String>),
    #[error("zero-norm embedding in row {0}")]
    ZeroNorm(usize),
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("dataset fetch failed: {0}")]
    Fetch(String),
    #[error("dataset error: {0}")]
    Data(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Eval(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
