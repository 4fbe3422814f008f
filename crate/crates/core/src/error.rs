use alloc::string::String;

/// Errors produced by graph construction, kernels and the model.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("token id {id} outside vocabulary of size {vocab}")]
    Vocabulary { id: u32, vocab: usize },
    #[error("training error: {0}")]
    Training(String),
    #[error("out of memory: {0}")]
    OutOfMemory(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
