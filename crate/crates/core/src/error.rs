use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate wedge: axis {axis} already belongs to the multi-index")]
    DegenerateWedge { axis: usize },

    #[error("invalid multi-index {members:?}: {reason}")]
    InvalidMultiIndex { members: Vec<usize>, reason: String },

    #[error("degenerate subspace: raw basis has rank below {expected}")]
    DegenerateSubspace { expected: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("leaf dimension k = {k} must satisfy 1 <= k < n = {n}")]
    LeafDimension { k: usize, n: usize },

    #[error("incompatible forms: {0}")]
    IncompatibleForms(String),

    #[error("resonant direction: exact zero divisor at mode {mode:?}")]
    ResonantDirection { mode: Vec<i64> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("insufficient witnesses: requested {requested}, found {found} within radius {radius}")]
    InsufficientWitnesses {
        requested: usize,
        found: usize,
        radius: f64,
    },

    #[error("not solvable: constant coefficient b_0 = {re} + {im}i is nonzero")]
    NotSolvableConstantObstruction { re: f64, im: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("atlas construction failed: {0}")]
    AtlasConstruction(String),

    #[error("malformed serialized data: {0}")]
    Format(String),
}
