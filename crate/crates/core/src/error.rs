use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("value {value} out of range [0, {bound})")]
    Range { value: u64, bound: u64 },

    #[error("argument {0} outside the open interval (0, 1)")]
    Domain(f64),

    #[error("key mismatch: ciphertext bound to key {found:#018x}, expected {expected:#018x}")]
    KeyMismatch { expected: u64, found: u64 },

    #[error("decode error at byte {offset}: {reason}")]
    Decode { offset: usize, reason: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("connection error: {0}")]
    Io(#[from] std::io::Error),

    #[error("trapdoor diagnostics are only available with the `trapdoor` feature")]
    TrapdoorDisabled,
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }
}
