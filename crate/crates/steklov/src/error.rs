use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("non-finite argument {0}")]
    NonFinite(f64),
    #[error("argument {0} must be positive")]
    NonPositiveArgument(f64),
    #[error("complex argument modulus {0} is outside the series range")]
    ComplexArgumentTooLarge(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("invalid mesh request: {0}")]
    InvalidInput(String),
    #[error("constraint edge ({0}, {1}) is missing from the triangulation")]
    MissingConstraintEdge(usize, usize),
    #[error("triangulation failed: {0}")]
    Triangulation(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("solution is not finite")]
    NonFinite,
    #[error("solve residual {0:e} exceeds tolerance")]
    Residual(f64),
    #[error("eigen solve failed: {0}")]
    Eigen(String),
    #[error("auxiliary problem is resonant for order {order} (denominator {denominator:e})")]
    Resonant { order: i32, denominator: f64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    /// Process exit code for the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Config(_) | Error::Io(_) => 2,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
