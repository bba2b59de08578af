use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown innovation law `{0}`")]
    UnknownLaw(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("tilt parameter {theta} is outside the working radius H = {radius}")]
    TiltOutsideRadius { theta: f64, radius: f64 },

    #[error("cumulant/moment order {order} is not supported (maximum {max})")]
    OrderTooLarge { order: usize, max: usize },

    #[error("series truncation orders differ ({left} vs {right})")]
    OrderMismatch { left: usize, right: usize },

    #[error("inner series of a composition must have zero constant term (got {0})")]
    NonzeroConstant(f64),

    #[error("series reversion requires a nonzero linear coefficient")]
    ZeroLinearCoefficient,

    #[error("t = {t} lies outside the trust region t < {t_max} (largest admissible x = {x_boundary})")]
    OutOfRange { t: f64, t_max: f64, x_boundary: f64 },

    #[error("saddle point outside the working disc |z| < {h_n} for x = {x}")]
    SaddleOutsideDisc { x: f64, h_n: f64 },

    #[error("aggregate CGF argument |z| = {z} must be below H_n = {h_n}")]
    CgfDomain { z: f64, h_n: f64 },

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("models do not share a window ({0})")]
    WindowMismatch(String),

    #[error("expected-shortfall integrand left the trust region at y = {y}; partial ES = {partial_es}")]
    QuadratureOutOfRange { y: f64, partial_es: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
