use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({x}, {y}) lies outside the mesh domain")]
    OutOfDomain { x: f64, y: f64 },

    #[error("unsupported pairing: {0}")]
    UnsupportedPairing(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("smoother not applicable: zero diagonal in row {row}")]
    SmootherInapplicable { row: usize },

    #[error("singular Vanka patch for multiplier dof {dof}")]
    SingularPatch { dof: usize },

    #[error("{block} block: {source}")]
    Block {
        block: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_block(self, block: &'static str) -> Self {
        Error::Block {
            block,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
