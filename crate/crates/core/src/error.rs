use faer::c64;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (best residual {residual:e} at m = {best})")]
    NonConvergence {
        best: c64,
        residual: f64,
        iterations: usize,
    },

    #[error("singular denominator in the limiting equation: {0}")]
    Singularity(String),

    #[error("numerical computation failed: {0}")]
    Computation(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn computation(msg: impl Into<String>) -> Self {
        Error::Computation(msg.into())
    }
}
