use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix `{field}` has shape {found_rows}x{found_cols}, expected {rows}x{cols}")]
    Shape {
        field: String,
        rows: usize,
        cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    #[error("dimension `{0}` must be at least 1")]
    EmptyDimension(&'static str),

    #[error("matrix `{field}` is not symmetric (max |M - M^T| = {deviation:e})")]
    Asymmetric { field: String, deviation: f64 },

    #[error("matrix `{0}` has a non-finite entry")]
    NonFinite(String),

    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),

    #[error("singular value decomposition of a {rows}x{cols} matrix did not converge")]
    SvdNoConvergence { rows: usize, cols: usize },

    #[error("constraint block at level {level} has full row rank {rank}; nothing to propagate")]
    FullRankBlock { level: usize, rank: usize },

    #[error("selector {index} has shape {found_rows}x{found_cols}, expected {expected_cols} columns")]
    Selector {
        index: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    #[error("subspaces live in different ambient spaces ({0} vs {1})")]
    AmbientMismatch(usize, usize),

    #[error("subspace dimensions differ ({0} vs {1})")]
    SubspaceDimensionMismatch(usize, usize),

    #[error("matrix `{0}` is numerically singular")]
    Singular(String),

    #[error("need at least two usable data points, found {0}")]
    InsufficientData(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical kernels rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::SvdNoConvergence { .. })
    }
}
