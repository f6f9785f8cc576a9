use std::path::PathBuf;

use factedit_core::engine::EngineError;
use factedit_core::scorers::ScorerError;
use thiserror::Error;

use crate::instances::LineError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_SCORER: u8 = 3;
pub const EXIT_SELFCHECK: u8 = 4;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {}", join_lines(.errors))]
    Lines { path: PathBuf, errors: Vec<LineError> },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("ids differ between outputs and gold: {}", describe_mismatch(.missing_outputs, .missing_gold))]
    IdMismatch {
        missing_outputs: Vec<String>,
        missing_gold: Vec<String>,
    },
    #[error("{0}")]
    Invalid(String),
}

fn join_lines(errors: &[LineError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

fn describe_mismatch(missing_outputs: &[String], missing_gold: &[String]) -> String {
    let list = |ids: &[String]| {
        let mut s = ids.iter().take(5).cloned().collect::<Vec<_>>().join(", ");
        if ids.len() > 5 {
            s.push_str(&format!(" and {} more", ids.len() - 5));
        }
        s
    };
    let mut parts = Vec::new();
    if !missing_outputs.is_empty() {
        parts.push(format!("no output for {}", list(missing_outputs)));
    }
    if !missing_gold.is_empty() {
        parts.push(format!("no gold for {}", list(missing_gold)));
    }
    parts.join("; ")
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("scorer error: {0}")]
    Scorer(#[from] ScorerError),
    #[error("self-check failed")]
    SelfCheckFailed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Scorer(_) => EXIT_SCORER,
            CliError::SelfCheckFailed => EXIT_SELFCHECK,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
        .into()
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Scorer(e) => CliError::Scorer(e),
            EngineError::Text(e) => DataError::Invalid(e.to_string()).into(),
            EngineError::Config(m) => CliError::Usage(m),
        }
    }
}
