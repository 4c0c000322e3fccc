use std::fmt;
use std::io;
use std::path::Path;

use avgraph::Error;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Malformed(String),
    Invalid(String),
    Other(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Io(_) => 3,
            CliError::Malformed(_) => 4,
            CliError::Invalid(_) => 5,
        }
    }

    pub fn io(path: &Path, e: io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn write(e: io::Error) -> Self {
        CliError::Io(format!("write failed: {e}"))
    }

    /// Library error raised while handling `path`.
    pub fn lib_at(path: &Path, e: Error) -> Self {
        match CliError::from(e) {
            CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
            CliError::Malformed(m) => CliError::Malformed(format!("{}: {m}", path.display())),
            other => other,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(_) => CliError::Io(msg),
            Error::BadMagic { .. }
            | Error::VersionMismatch { .. }
            | Error::Truncated(_)
            | Error::Malformed(_) => CliError::Malformed(msg),
            Error::InvalidArgument(_)
            | Error::UnknownClass(_)
            | Error::SeriesTooShort { .. }
            | Error::LabelOutOfRange { .. }
            | Error::EmptyDataset
            | Error::DatasetMismatch(_)
            | Error::ShapeMismatch { .. } => CliError::Invalid(msg),
            Error::NotSymmetric(_) => CliError::Other(msg),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m)
            | CliError::Malformed(m)
            | CliError::Invalid(m)
            | CliError::Other(m) => f.write_str(m),
        }
    }
}
