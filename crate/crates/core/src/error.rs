use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of a formula (negative pressure, zero radius, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A required configuration value is absent or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input samples are unusable (non-positive frequencies, malformed rows, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Too few distinct points to determine the fitted parameters.
    #[error("degenerate design: {0}")]
    Degenerate(String),

    /// The adaptive integrator could not make progress.
    #[error("step size underflow at t = {t}: h = {h:e}")]
    Stiffness { t: f64, h: f64 },

    /// A spectrum did not contain a peak clearly above the noise floor.
    #[error("no spectral peak detected (peak/median = {ratio:.3}, required {threshold})")]
    NoDetection { ratio: f64, threshold: f64 },

    /// The requested energy lies below the potential minimum.
    #[error("no oscillation: energy {energy} is below the potential minimum {minimum}")]
    NoOscillation { energy: f64, minimum: f64 },

    /// A record is too short to resolve the requested feature.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// Symmetric positive definite factorization failed.
    #[error("ill-conditioned model: {0}")]
    IllConditioned(String),

    /// A sampling rate is too low for the signal content.
    #[error("aliasing: sample rate {sample_rate} Hz must exceed {required} Hz")]
    Aliasing { sample_rate: f64, required: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Process exit code for the command-line tool: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 2,
            Error::Domain(_) | Error::Data(_) | Error::Aliasing { .. } | Error::NoDetection { .. } => 3,
            Error::Degenerate(_)
            | Error::Stiffness { .. }
            | Error::Resolution(_)
            | Error::NoOscillation { .. }
            | Error::IllConditioned(_) => 4,
        }
    }
}
