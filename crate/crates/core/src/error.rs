use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid combination: {0}")]
    InvalidCombination(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("rank-deficient estimates in cell {cell} (condition number {cond:.3e})")]
    RankDeficient { cell: usize, cond: f64 },
    #[error("quadrature did not converge (residual estimate {residual:.3e})")]
    Quadrature { residual: f64 },
}

impl Error {
    /// True for errors caused by the inputs rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Domain(_) | Error::Protocol(_) | Error::InvalidCombination(_)
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
