use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symplectic (defect {defect:.3e})")]
    NonSymplectic { defect: f64 },

    #[error("matrix is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },

    #[error("matrix is too ill-conditioned for a stable polar factor (condition {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("eigenvalues are too close to classify: {0}")]
    NearDegenerate(String),

    #[error("matrix is not symmetric (defect {defect:.3e})")]
    NotSymmetric { defect: f64 },

    #[error("path sampling too coarse: {0}")]
    SamplingTooCoarse(String),

    #[error("step guard violated after refining to {steps} steps")]
    StepGuardViolated { steps: usize },

    #[error("endpoint is degenerate: |det(I - Phi(T))| = {det:.3e}")]
    DegenerateEndpoint { det: f64 },

    #[error("path does not start at the identity (distance {distance:.3e})")]
    NotFromIdentity { distance: f64 },

    #[error("could not resolve crossing: {0}")]
    UnresolvedCrossing(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("paths cover different time spans")]
    SpanMismatch,

    #[error("hamiltonians are not comparable: min eigenvalue of H1 - H0 is {min_eig:.3e}")]
    NotComparable { min_eig: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("step too large: {0}")]
    StepTooLarge(String),

    #[error("input orbit is not periodic (closure residual {residual:.3e})")]
    NonPeriodicInput { residual: f64 },

    #[error("newton matrix is singular (condition {cond:.3e})")]
    SingularJacobian { cond: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("inconsistent chern data: 2*lambda*lambda0 = {value} is not an even integer")]
    InconsistentChern { value: f64 },

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable variant name, used in run manifests.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonSymplectic { .. } => "NonSymplectic",
            Error::NotUnitary { .. } => "NotUnitary",
            Error::IllConditioned { .. } => "IllConditioned",
            Error::NearDegenerate(_) => "NearDegenerate",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::SamplingTooCoarse(_) => "SamplingTooCoarse",
            Error::StepGuardViolated { .. } => "StepGuardViolated",
            Error::DegenerateEndpoint { .. } => "DegenerateEndpoint",
            Error::NotFromIdentity { .. } => "NotFromIdentity",
            Error::UnresolvedCrossing(_) => "UnresolvedCrossing",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::SpanMismatch => "SpanMismatch",
            Error::NotComparable { .. } => "NotComparable",
            Error::NoConvergence(_) => "NoConvergence",
            Error::StepTooLarge(_) => "StepTooLarge",
            Error::NonPeriodicInput { .. } => "NonPeriodicInput",
            Error::SingularJacobian { .. } => "SingularJacobian",
            Error::DegenerateFit(_) => "DegenerateFit",
            Error::InvalidParams(_) => "InvalidParams",
            Error::InconsistentChern { .. } => "InconsistentChern",
            Error::Io(_) => "Io",
            Error::Parse(_) => "Parse",
        }
    }

    /// Module that raises this error kind.
    pub fn module(&self) -> &'static str {
        match self {
            Error::NonSymplectic { .. }
            | Error::NotUnitary { .. }
            | Error::IllConditioned { .. }
            | Error::NearDegenerate(_) => "symp",
            Error::NotSymmetric { .. }
            | Error::SamplingTooCoarse(_)
            | Error::DegenerateEndpoint { .. }
            | Error::NotFromIdentity { .. }
            | Error::UnresolvedCrossing(_)
            | Error::DimMismatch { .. }
            | Error::SpanMismatch
            | Error::NotComparable { .. } => "path",
            Error::StepGuardViolated { .. }
            | Error::StepTooLarge(_)
            | Error::NonPeriodicInput { .. } => "flow",
            Error::NoConvergence(_) | Error::SingularJacobian { .. } | Error::DegenerateFit(_) => {
                "orbit"
            }
            Error::InvalidParams(_) | Error::InconsistentChern { .. } => "floer",
            Error::Io(_) | Error::Parse(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
