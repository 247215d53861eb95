use alloc::string::String;

use crate::linalg::LinalgError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{context}: expected length {expected}, found {found}")]
    Shape { context: &'static str, expected: usize, found: usize },
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("damped inverse cache is stale; refresh before use")]
    StaleCache,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("no data")]
    EmptyData,
    #[error("input is constant")]
    ConstantInput,
    #[error("acquisition pool is exhausted")]
    PoolExhausted,
    #[error("log density is not finite at the initial point")]
    NonFiniteDensity,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
