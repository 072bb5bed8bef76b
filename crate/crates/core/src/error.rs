use thiserror::Error;

pub type Result<T> = std::result::Result<T, R2d2Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum R2d2Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("family {0} has no closed-form R2; use the QMC approximation")]
    UnsupportedFamily(String),
    #[error("value {value} outside support [{lo}, {hi}]")]
    OutOfSupport { value: f64, lo: f64, hi: f64 },
    #[error("prior bounds ({given_min}, {given_max}) do not match model bounds ({model_min}, {model_max})")]
    BoundsMismatch {
        given_min: f64,
        given_max: f64,
        model_min: f64,
        model_max: f64,
    },
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("degenerate model: mean variance and expected variance are both zero")]
    DegenerateModel,
    #[error("mean function is flat at beta0 = {0}")]
    FlatLink(f64),
    #[error("objective is not finite at the candidate")]
    NonFiniteObjective,
    #[error("optimization failed: {0}")]
    OptimizationFailed(String),
    #[error("sample mean {0} is outside the domain of the link function")]
    LinkDomain(f64),
    #[error("no dispersion parameter to estimate: {0}")]
    NoDispersion(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> R2d2Error {
    R2d2Error::InvalidParameter(msg.into())
}
