use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("invalid node identifier `{0}`")]
    InvalidNodeId(String),
    #[error("edge {edge}: rate must be positive and finite, got {rate}")]
    NonPositiveRate { edge: String, rate: f64 },
    #[error("edge {0}: self-loop")]
    SelfLoop(String),
    #[error("edge {0} appears twice with the same speed class")]
    DuplicateEdge(String),
    #[error("network is not diconnected ({components} strongly connected components)")]
    NotDiconnected { components: usize },
    #[error("network has no nodes")]
    Empty,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("stationary solve failed: residual {residual:e} exceeds {tolerance:e}")]
    SingularSolve { residual: f64, tolerance: f64 },
    #[error("generator matrix is zero")]
    ZeroGenerator,
    #[error("generator is not contractive on its column space (λ = {0})")]
    NotContractive(f64),
    #[error("slow edge {0} leaves an O(ε) node (leak flux)")]
    Leak(String),
    #[error("node {node}: stationary mass scales like ε^{exponent:.3}, only orders 0 and 1 are supported")]
    HigherOrder { node: String, exponent: f64 },
    #[error("structural inconsistency: {0}")]
    Structural(String),
    #[error("the V1 block of the effective system is singular (pivot {pivot:e})")]
    SingularV1Block { pivot: f64 },
    #[error("initial datum is not well prepared (deviation {0:e})")]
    NotWellPrepared(f64),
    #[error("trajectory frame mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: String, found: String },
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
