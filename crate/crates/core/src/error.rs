use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transform length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid bit count {bits} for {bits_per_symbol} bits per symbol")]
    BitCount { bits: usize, bits_per_symbol: usize },

    #[error("unsupported modulation order {0} (expected 4, 16 or 64)")]
    ModulationOrder(usize),

    #[error("cyclic prefix length {cp} exceeds symbol length {n}")]
    CyclicPrefix { cp: usize, n: usize },

    #[error("channel delay spread {delay} exceeds cyclic prefix {cp}")]
    DelaySpread { delay: usize, cp: usize },

    #[error("invalid pilot pattern: {0}")]
    Pilot(String),

    #[error("invalid channel profile: {0}")]
    Profile(String),

    #[error("invalid reservoir configuration: {0}")]
    Reservoir(String),

    #[error("insufficient training data: {0}")]
    Training(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
