use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    #[error("sizing error: {0}")]
    Sizing(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("undefined quantity: {0}")]
    Undefined(String),
}

pub type Result<T> = core::result::Result<T, CoreError>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::CoreError::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
