use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument {value} outside the domain {domain}")]
    Domain { value: f64, domain: String },

    /// The law grows too close to a linear feedback for the requested formula.
    #[error("classification: {0}")]
    Classification(String),

    #[error("root solve did not converge at node {node} (residual {residual:e})")]
    RootSolve { node: usize, residual: f64 },

    #[error("quadrature exceeded {0} subintervals")]
    Quadrature(usize),

    #[error("ODE integration exceeded its step budget at t = {0}")]
    StepBudget(f64),

    #[error("CFL violation: dt = {dt} > cfl * dx = {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("trace: {0}")]
    Trace(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(value: f64, domain: impl Into<String>) -> Self {
        Error::Domain { value, domain: domain.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
