use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("DegenerateExponent: exponent value {value} is not > 1")]
    DegenerateExponent { value: f64 },

    #[error("UnsupportedDimension: dimension {dim} is below 2")]
    UnsupportedDimension { dim: usize },

    #[error("RootFindFailure: Luxemburg bisection did not converge ({reason})")]
    RootFindFailure { reason: String },

    #[error("ExponentOrderViolation: {0}")]
    ExponentOrderViolation(String),

    #[error("RankMismatch: fields of rank {left} and {right} cannot be combined")]
    RankMismatch { left: &'static str, right: &'static str },

    #[error("QuadratureMismatch: {0}")]
    QuadratureMismatch(String),

    #[error("MeshError: {0}")]
    MeshError(String),

    #[error("LevelMismatch: {0}")]
    LevelMismatch(String),

    #[error("SingularFlux: delta = 0 requires p⁻ ≥ 2 (got p⁻ = {p_minus})")]
    SingularFlux { p_minus: f64 },

    #[error("FluxEvalError: non-finite value at t = {t}, x = ({}, {})", x[0], x[1])]
    FluxEvalError { t: f64, x: [f64; 2] },

    #[error("NewtonFailure: step {step} stopped with residual {residual:e} after {iterations} iterations")]
    NewtonFailure {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("BadSpec: {0}")]
    BadSpec(String),

    #[error("Io: {0}")]
    Io(String),
}

impl Error {
    /// Stable name of the variant, used on standard error by the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DegenerateExponent { .. } => "DegenerateExponent",
            Error::UnsupportedDimension { .. } => "UnsupportedDimension",
            Error::RootFindFailure { .. } => "RootFindFailure",
            Error::ExponentOrderViolation(_) => "ExponentOrderViolation",
            Error::RankMismatch { .. } => "RankMismatch",
            Error::QuadratureMismatch(_) => "QuadratureMismatch",
            Error::MeshError(_) => "MeshError",
            Error::LevelMismatch(_) => "LevelMismatch",
            Error::SingularFlux { .. } => "SingularFlux",
            Error::FluxEvalError { .. } => "FluxEvalError",
            Error::NewtonFailure { .. } => "NewtonFailure",
            Error::BadSpec(_) => "BadSpec",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
