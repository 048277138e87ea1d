use thiserror::Error;

/// Errors raised by the solver pipeline.
///
/// Mode numbers carried in [`Error::Resolution`] and [`Error::NotOrthonormal`]
/// are 1-based, matching the usual labelling of universe modes. Every other
/// index is a 0-based position in the relevant array.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("grid too coarse: modes ({n}, {m}) have Gram residual {residual:.3e}")]
    Resolution { n: usize, m: usize, residual: f64 },

    #[error("basis is not orthonormal: modes ({n}, {m}) have Gram residual {residual:.3e}")]
    NotOrthonormal { n: usize, m: usize, residual: f64 },

    #[error("reservoir profile has zero measure")]
    DegenerateProfile,

    #[error("cannot rescale a coupling matrix whose rate on the given vector is zero")]
    CannotScale,

    #[error("eigensolver did not converge after {iterations} iterations (active block ends at {index}, subdiagonal {subdiagonal:.3e})")]
    NoConvergence {
        iterations: usize,
        index: usize,
        subdiagonal: f64,
    },

    #[error("eigenpair {index} failed verification: residual {residual:.3e} exceeds {bound:.3e}")]
    Inaccurate {
        index: usize,
        residual: f64,
        bound: f64,
    },

    #[error("quasi mode {index} is self-orthogonal (|S| = {overlap:.3e}); its excess-noise factor diverges")]
    SelfOrthogonal { index: usize, overlap: f64 },

    #[error("completeness is unavailable: quasi mode {index} is flagged self-orthogonal")]
    CompletenessUnavailable { index: usize },

    #[error("no selectable quasi mode: every mode is flagged self-orthogonal")]
    NoSelectableMode,

    #[error("step size {dt:.3e} too large for rate scale {rate:.3e}; use dt <= {suggested:.3e}")]
    StepTooLarge { dt: f64, rate: f64, suggested: f64 },

    #[error("check not applicable: {0}")]
    NotApplicable(String),

    #[error("system is not at threshold: |gamma - lambda| / lambda = {mismatch:.3e}")]
    NotAtThreshold { mismatch: f64 },

    #[error(
        "threshold tuning did not converge after {iterations} iterations (mismatch {mismatch:.3e})"
    )]
    ThresholdNotConverged { iterations: usize, mismatch: f64 },

    #[error("photon number must be positive")]
    ZeroPhotonNumber,

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("non-finite value in output field `{0}`")]
    NonFinite(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the numerical pipeline rather than by input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::Inaccurate { .. }
                | Error::SelfOrthogonal { .. }
                | Error::CompletenessUnavailable { .. }
                | Error::NoSelectableMode
                | Error::ThresholdNotConverged { .. }
                | Error::CannotScale
                | Error::NonFinite(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
