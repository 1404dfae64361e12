use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A generator or encoder parameter is out of its domain.
    Param(String),
    /// An operation was invoked on a state that does not allow it.
    State(String),
    /// A caller broke an operation's precondition (bad action, shape mismatch...).
    Contract(String),
    /// The input is larger than an exact routine is allowed to handle.
    Size { limit: usize, actual: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Param(msg) => write!(f, "invalid parameter: {msg}"),
            Error::State(msg) => write!(f, "invalid state: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Size { limit, actual } => {
                write!(f, "input too large: {actual} exceeds limit {limit}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

macro_rules! contract {
    ($($arg:tt)*) => {
        $crate::Error::Contract(alloc::format!($($arg)*))
    };
}
pub(crate) use contract;
