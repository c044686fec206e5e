use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidSpec(String),

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },

    #[error("spectrum is not that of a stochastic matrix: {0}")]
    NotStochastic(String),

    #[error("node ({set}, {pos}) has negative holding probability {holding}")]
    Infeasible { set: usize, pos: usize, holding: f64 },

    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),

    #[error("node ({set}, {pos}) is out of range")]
    NodeOutOfRange { set: usize, pos: usize },

    #[error("{operation} is not supported for the {family} family")]
    UnsupportedFamily { operation: &'static str, family: String },

    #[error("{0}")]
    Unsupported(String),

    #[error("trace tail reached the numerical floor (value {value:e} at iteration {iteration}); use a shorter horizon or window")]
    NumericalFloor { iteration: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
