use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("profile has zero total mass on the lattice")]
    DegenerateProfile,
    #[error("profile is not symmetric: {0}")]
    AsymmetricProfile(String),
    #[error("spectrum is not positive away from k = 0 (min {min:.3e} at {at:?})")]
    NonpositiveSpectrum { min: f64, at: Vec<usize> },
    #[error("infrared integral diverges in dimension {0}")]
    DivergentIntegral(usize),
    #[error("series tail cannot be bounded: {0}")]
    TailUnbounded(String),
    #[error("error moments do not cancel (sum {zeroth:.3e}, second {second:.3e})")]
    MomentsNotCancelled { zeroth: f64, second: f64 },
    #[error("not a contraction: norm {norm:.6} >= 1")]
    ContractivityFailure { norm: f64 },
    #[error("series did not converge within {0} terms")]
    MaxTermsExceeded(usize),
    #[error("one-point value is zero")]
    ZeroOnePoint,
    #[error("singular least-squares system")]
    SingularSystem,
    #[error("rho = {0} outside the admissible range")]
    RhoOutOfRange(f64),
    #[error("dimension {0} too low")]
    DimensionTooLow(usize),
    #[error("nonpositive values cannot be fitted on a log scale")]
    NonpositiveValues,
    #[error("model violates z bound: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Module family, used for process exit codes.
    pub fn family(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) | Error::InvalidModel(_) => "validation",
            Error::DegenerateProfile | Error::AsymmetricProfile(_) => "kernel",
            Error::NonpositiveSpectrum { .. } | Error::DivergentIntegral(_) | Error::TailUnbounded(_) => "green",
            Error::ContractivityFailure { .. } | Error::MaxTermsExceeded(_) | Error::ZeroOnePoint => "banach",
            Error::MomentsNotCancelled { .. } | Error::RhoOutOfRange(_) | Error::DimensionTooLow(_) => "decomp",
            Error::SingularSystem | Error::NonpositiveValues => "fitting",
            Error::Io(_) | Error::Json(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
