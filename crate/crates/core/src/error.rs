//! Crate-wide error type.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid direction: {0}")]
    InvalidDirection(String),
    #[error("unsupported dimension n={0}: solvers cover n in {{1, 2}}")]
    UnsupportedDimension(usize),
    #[error("discretisation mismatch: {0}")]
    Discretisation(String),
    #[error("integrand evaluated to {value} at {context}")]
    Eval { context: String, value: f64 },
    #[error("scaling limit not converged: spread {spread:.3e} exceeds tolerance {tol:.3e}")]
    NonConvergence { spread: f64, tol: f64 },
    #[error("infeasible quantization: {0}")]
    Quantization(String),
    #[error("instance too large for exhaustive enumeration: {required} assignments (cap {cap})")]
    TooLarge { required: u128, cap: u128 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("argument outside tabulated range: {0}")]
    OutsideTabulation(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("solver error: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
