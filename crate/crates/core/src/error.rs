use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("moment set stores total degrees below {available}, scale n = {n} needs below {required}")]
    MomentsTooShallow {
        n: usize,
        required: usize,
        available: usize,
    },

    #[error("moment set is on the Fourier side; convert it to the spatial side first")]
    FourierSide,

    #[error("lattice has {nodes} nodes, above the cap of {cap}; use a coarser spacing or a smaller box")]
    GridTooLarge { nodes: usize, cap: usize },

    #[error("density grid spacing {spacing} is too coarse for total degree {degree}; spacing must be at most {required}")]
    GridTooCoarse {
        spacing: f64,
        required: f64,
        degree: usize,
    },

    #[error("point {0:?} lies outside the box")]
    OutsideRegion(Vec<f64>),

    #[error("kernel diagonal vanishes at {0:?}")]
    VanishingDiagonal(Vec<f64>),

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn malformed(msg: impl Into<String>) -> Self {
        Error::Malformed(msg.into())
    }
}
