use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model must have at least one unit")]
    EmptyModel,

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unit index {index} out of range for {len} units")]
    UnitOutOfRange { index: usize, len: usize },

    #[error("{which} precisions differ across units; the constrained model needs a common value")]
    NonUniformPrecision { which: &'static str },

    #[error("degenerate precision at unit {unit}: {reason}")]
    DegeneratePrecision { unit: usize, reason: &'static str },

    #[error("invalid precision {value} at unit {unit} ({which})")]
    InvalidPrecision {
        which: &'static str,
        unit: usize,
        value: f64,
    },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("row {row} of the attention weights has no finite logit")]
    AllZeroRow { row: usize },

    #[error("negative Dirichlet mass for row {row}, unit {unit}")]
    NegativeMass { row: usize, unit: usize },

    #[error("relative offset ({dh}, {dw}) outside the embedding table")]
    OffsetOutOfRange { dh: isize, dw: isize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid bounding box: {0}")]
    InvalidBBox(String),

    #[error("pixel ({row}, {col}) outside a {height}x{width} image")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },

    #[error("there is no click to undo")]
    NothingToUndo,

    #[error("image error: {0}")]
    Image(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        Error::Image(e.to_string())
    }
}
