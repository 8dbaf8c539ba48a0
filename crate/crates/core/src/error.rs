use alloc::string::String;

/// Errors produced by the codec core.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// Shapes, widths or parameters that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called with inputs violating its contract.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A value left the representable range (usually a diverged run).
    #[error("range error: {0}")]
    Range(String),
    /// Malformed or unsupported bitstream.
    #[error("format error: {0}")]
    Format(String),
    /// Entropy-coded payload could not be decoded.
    #[error("decode error: {0}")]
    Decode(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
