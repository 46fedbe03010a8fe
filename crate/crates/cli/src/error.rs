use std::fmt;
use std::process::ExitCode;

/// Failures split by exit code: `Domain` (1) for solver verdicts and failed
/// checks, `Usage` (2) for bad input, unreadable files and unknown names.
#[derive(Debug)]
pub enum CliError {
    Domain(String),
    Usage(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        CliError::Domain(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Domain(_) => ExitCode::from(1),
            CliError::Usage(_) => ExitCode::from(2),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Domain(m) | CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl From<fpdhf::Error> for CliError {
    fn from(e: fpdhf::Error) -> Self {
        use fpdhf::Error as E;
        match e {
            E::InvalidSteps(_) | E::Divergence { .. } => CliError::Domain(e.to_string()),
            E::Contract(_) | E::DimensionMismatch { .. } | E::UnknownName { .. } | E::Io { .. } | E::Parse { .. } => {
                CliError::Usage(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}
