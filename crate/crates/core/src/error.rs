use thiserror::Error;

use crate::lattice::Cube;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("lattice with dimension {dim} and depth {depth} exceeds the {max_bits}-bit leaf budget")]
    LatticeTooLarge { dim: u32, depth: u32, max_bits: u32 },

    #[error("cube {cube:?} has no descendants {generations} levels down (depth {depth})")]
    BeyondLeafLevel {
        cube: Cube,
        generations: u32,
        depth: u32,
    },

    #[error("cube {0:?} is not part of the lattice")]
    CubeOutOfRange(Cube),

    #[error("level {level} outside 0..={depth}")]
    LevelOutOfRange { level: u32, depth: u32 },

    #[error("martingale difference at level 0 has no parent level")]
    NoParentLevel,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not Hermitian (residual {residual:e})")]
    NotHermitian { residual: f64 },

    #[error("Hermitian eigensolver did not converge")]
    EigenFailure,

    #[error("field is not positive at leaf {leaf} (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { leaf: usize, min_eigenvalue: f64 },

    #[error("lambda {lambda} is below the root average norm {min_lambda}")]
    LambdaTooSmall { lambda: f64, min_lambda: f64 },

    #[error("power iteration stalled after {iterations} iterations (best estimate {estimate})")]
    PowerIterationStalled { iterations: usize, estimate: f64 },

    #[error("input has zero L1 norm")]
    ZeroInput,

    #[error("unknown preset {0:?}")]
    UnknownPreset(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed file: {0}")]
    Format(String),
}
