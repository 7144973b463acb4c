use std::fmt::Display;
use std::path::Path;

use songsieve_core::annotations::AnnotationError;
use songsieve_core::audio::AudioError;
use songsieve_core::augment::AugmentError;
use songsieve_core::calibrate::CalibrateError;
use songsieve_core::detect::DetectError;
use songsieve_core::evaluate::EvalError;
use songsieve_core::spectrogram::SpectrogramError;
use songsieve_core::split::SplitError;

/// A failed run, split by who has to fix it: bad configuration or flags
/// (exit 1) versus unreadable or inconsistent input data (exit 2).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0:#}")]
    Validation(anyhow::Error),
    #[error("{0:#}")]
    Data(anyhow::Error),
}

impl CliError {
    pub fn invalid(msg: impl Display) -> Self {
        CliError::Validation(anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl Display) -> Self {
        CliError::Data(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn context(self, ctx: String) -> Self {
        match self {
            CliError::Validation(e) => CliError::Validation(e.context(ctx)),
            CliError::Data(e) => CliError::Data(e.context(ctx)),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

macro_rules! classify {
    ($ty:ty, $($validation:pat),+) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                match e {
                    $($validation)|+ => CliError::Validation(e.into()),
                    _ => CliError::Data(e.into()),
                }
            }
        }
    };
}

classify!(AnnotationError, AnnotationError::InvalidScheme(_));
classify!(AudioError, AudioError::InvalidRate(_));
classify!(AugmentError, AugmentError::InvalidConfig(_));
classify!(CalibrateError, CalibrateError::InvalidParams(_));
classify!(DetectError, DetectError::InvalidParams(_), DetectError::UnknownFormat(_));
classify!(EvalError, EvalError::InvalidParams(_));
classify!(SpectrogramError, SpectrogramError::InvalidParams(_));
classify!(SplitError, SplitError::InvalidTargets(_));

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.into())
    }
}

/// Attach the file being processed to an error.
pub trait AtPath<T> {
    fn at(self, path: &Path) -> CliResult<T>;
}

impl<T, E: Into<CliError>> AtPath<T> for Result<T, E> {
    fn at(self, path: &Path) -> CliResult<T> {
        self.map_err(|e| e.into().context(path.display().to_string()))
    }
}
