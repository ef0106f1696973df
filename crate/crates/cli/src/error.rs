//! Error classes and their exit codes.

use std::fmt;
use std::path::Path;

use serde::Serialize;

use fafscreen_core::grid::GridError;
use fafscreen_core::image::ImageError;
use fafscreen_core::io::IoError;
use fafscreen_core::mccv::MccvError;
use fafscreen_core::separation::SeparationError;
use fafscreen_core::svm::SvmError;
use fafscreen_core::synth::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    /// Bad flags or flag combinations.
    Usage,
    /// Unreadable, malformed or unsuitable input data.
    Data,
    /// The SVM solver stopped before meeting its KKT tolerance.
    Convergence,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Data => 3,
            ErrorKind::Convergence => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    #[serde(rename = "error")]
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        self.kind.exit_code()
    }

    /// Single-line JSON form written to stderr on failure.
    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }

    /// Prefixes the message with a file path.
    pub fn in_file(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<SvmError> for CliError {
    fn from(e: SvmError) -> Self {
        let kind = match e {
            SvmError::NotConverged { .. } => ErrorKind::Convergence,
            SvmError::InvalidConfig(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<MccvError> for CliError {
    fn from(e: MccvError) -> Self {
        match (&e, e.svm_error()) {
            (_, Some(svm)) => Self {
                message: e.to_string(),
                ..CliError::from(svm.clone())
            },
            (MccvError::InvalidSplit(_), None) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<SeparationError> for CliError {
    fn from(e: SeparationError) -> Self {
        match e {
            SeparationError::Mccv(e) => e.into(),
            SeparationError::Svm(e) => e.into(),
            e => CliError::data(e.to_string()),
        }
    }
}

macro_rules! data_errors {
    ($($ty:ty),*) => {
        $(
            impl From<$ty> for CliError {
                fn from(e: $ty) -> Self {
                    CliError::data(e.to_string())
                }
            }
        )*
    };
}

data_errors!(GridError, ImageError, IoError, SynthError, serde_json::Error);
