use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("undefined orientation: zero velocity")]
    UndefinedOrientation,
    #[error("amplitude must be positive, got {0}")]
    NonPositiveAmplitude(f64),
    #[error("trajectory underruns step count: path is {path_m} m but {required_m} m are needed")]
    TrajectoryUnderrun { path_m: f64, required_m: f64 },
    #[error("agent position coincides with anchor {0}")]
    CoincidentAnchor(u32),
    #[error("information matrix singular at step {step}")]
    SingularInformation { step: usize },
    #[error("ensemble collapse at step {step}")]
    EnsembleCollapse { step: usize },
    #[error("unknown anchor id {0}")]
    UnknownAnchor(u32),
    #[error("invalid `{key}`: {reason}")]
    InvalidConfig { key: &'static str, reason: String },
}

impl Error {
    pub(crate) fn invalid(key: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key,
            reason: reason.into(),
        }
    }
}
