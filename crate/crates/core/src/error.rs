use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The material model violates passivity or another model constraint.
    #[error("model error: {0}")]
    Model(String),

    /// A lossless medium put a pole of the Green tensor on the integration path.
    #[error("singular Green tensor: {0}; give the medium a nonzero damping")]
    Singular(String),

    /// A sampling grid cannot support the requested diagnostic.
    #[error("grid error: {0}")]
    Grid(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    /// An adaptive quadrature failed to reach its tolerance.
    #[error("quadrature did not converge: {message} (error estimate {error_estimate:.3e}, tolerance {tolerance:.3e})")]
    Convergence {
        message: String,
        error_estimate: f64,
        tolerance: f64,
    },

    /// The self-consistent level-shift iteration failed to settle.
    #[error("level-shift iteration did not converge after {} iterates", history.len())]
    ShiftNotConverged { history: Vec<f64> },

    #[error("amplitude solver unstable at t = {time}: |C| = {magnitude}")]
    Instability { time: f64, magnitude: f64 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of a numerical procedure rather than bad input.
    pub fn is_convergence(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. } | Error::ShiftNotConverged { .. } | Error::Instability { .. }
        )
    }
}
