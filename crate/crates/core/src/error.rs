use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index ({0}, {1}) out of range 1..=3")]
    IndexOutOfRange(usize, usize),

    #[error("Voigt convention mismatch: expected {expected}, found {found}")]
    ConventionMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is numerically singular")]
    Singular,

    #[error("Jacobi eigenvalue iteration did not converge in {sweeps} sweeps")]
    EigenNoConvergence { sweeps: usize },

    #[error("stiffness is not pointwise stable at node {node} (min eigenvalue {lambda_min})")]
    Unstable { node: usize, lambda_min: f64 },

    #[error("conjugate gradient did not converge: {iterations} iterations, relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("basis determinant {value:e} below threshold {threshold:e} at node {node}")]
    HypothesisA {
        node: usize,
        value: f64,
        threshold: f64,
    },

    #[error("field file: {0}")]
    Format(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
