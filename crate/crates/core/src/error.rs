use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid mixture: {0}")]
    InvalidSpec(String),

    #[error("invalid reaction network: {0}")]
    InvalidNetwork(String),

    #[error("composition outside the admissible set: {0}")]
    OutOfDomain(String),

    #[error("composition is not interior: y[{index}] = {value:e}")]
    NonInteriorComposition { index: usize, value: f64 },

    #[error("bordered Maxwell-Stefan system is singular")]
    SingularSystem,

    #[error("vector is not in the hyperplane E: (h|e) = {residual:e}")]
    NotInE { residual: f64 },

    #[error("eigensolver did not converge")]
    EigenSolverFailed,

    #[error("negative concentration c[{index}] = {value:e}")]
    NegativeConcentration { index: usize, value: f64 },

    #[error("reaction {reaction} does not conserve total mass: (nu_l | M e) = {defect:e}")]
    MassNotConserved { reaction: usize, defect: f64 },

    #[error("no positive equilibrium: Wegscheider condition fails for reaction {reaction} (mismatch {mismatch:e})")]
    NoEquilibrium { reaction: usize, mismatch: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("composition is not a chemical equilibrium (residual {residual:e})")]
    NotAnEquilibrium { residual: f64 },

    #[error("computed nullspace has dimension {found}, expected {expected}")]
    NullspaceDimension { expected: usize, found: usize },

    #[error("semisimplicity undecided: singular value {singular_value:e} too close to tolerance {tolerance:e}")]
    SemisimplicityUndecided { singular_value: f64, tolerance: f64 },

    #[error("deviation spans only {decades:.2} decades; at least 2 are needed")]
    InsufficientDecay { decades: f64 },

    #[error("step rejected at t = {time:e}: min component {min_component:e}")]
    StepRejected { time: f64, min_component: f64 },

    #[error("invalid simulation setup: {0}")]
    NonIntegrableConfig(String),
}

impl Error {
    /// Variant name, stable for machine consumption.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::InvalidNetwork(_) => "InvalidNetwork",
            Error::OutOfDomain(_) => "OutOfDomain",
            Error::NonInteriorComposition { .. } => "NonInteriorComposition",
            Error::SingularSystem => "SingularSystem",
            Error::NotInE { .. } => "NotInE",
            Error::EigenSolverFailed => "EigenSolverFailed",
            Error::NegativeConcentration { .. } => "NegativeConcentration",
            Error::MassNotConserved { .. } => "MassNotConserved",
            Error::NoEquilibrium { .. } => "NoEquilibrium",
            Error::NewtonDiverged { .. } => "NewtonDiverged",
            Error::NotAnEquilibrium { .. } => "NotAnEquilibrium",
            Error::NullspaceDimension { .. } => "NullspaceDimension",
            Error::SemisimplicityUndecided { .. } => "SemisimplicityUndecided",
            Error::InsufficientDecay { .. } => "InsufficientDecay",
            Error::StepRejected { .. } => "StepRejected",
            Error::NonIntegrableConfig(_) => "NonIntegrableConfig",
        }
    }
}
