use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0} asserted check(s) failed")]
    ChecksFailed(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),

    #[error(transparent)]
    Core(#[from] ncdyadic::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use ncdyadic::Error as E;
        match self {
            CliError::ChecksFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                E::LatticeTooLarge { .. } => 10,
                E::BeyondLeafLevel { .. } => 11,
                E::CubeOutOfRange(_) => 12,
                E::LevelOutOfRange { .. } => 13,
                E::NoParentLevel => 14,
                E::ShapeMismatch(_) => 15,
                E::NotHermitian { .. } => 16,
                E::EigenFailure => 17,
                E::NotPositive { .. } => 18,
                E::LambdaTooSmall { .. } => 19,
                E::PowerIterationStalled { .. } => 20,
                E::ZeroInput => 21,
                E::UnknownPreset(_) => 22,
                E::InvalidParameter(_) => 23,
                E::Format(_) => 24,
            },
        }
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
