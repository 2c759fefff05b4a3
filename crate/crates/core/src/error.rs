use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: expected dimension {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("lazy nesting depth {depth} exceeds the limit {limit}; materialize first")]
    Nesting { depth: usize, limit: usize },
    #[error("eps = {eps:e} is below the resolution limit {min:e}")]
    Resolution { eps: f64, min: f64 },
    #[error("operator is not a regular-representation operator: residual grew from {coarse:.3e} to {fine:.3e} when eps was halved")]
    NotASymbol { coarse: f64, fine: f64 },
    #[error("closed form not available: {0}")]
    Unsupported(String),
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error("unknown check `{0}`")]
    UnknownCheck(String),
    #[error("sweep parameter `{0}` must be one of lambda, quad_xy_order, basis_size")]
    SweepParam(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
