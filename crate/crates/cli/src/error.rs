use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}:{}: {message}", path.display(), fmt_line(*line))]
    Parse {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },

    #[error("{}:{}: invalid `{key}`: {message}", path.display(), fmt_line(*line))]
    Config {
        path: PathBuf,
        line: Option<usize>,
        key: String,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Core(#[from] smpde_core::Error),

    #[error("{0}")]
    Format(String),
}

fn fmt_line(line: Option<usize>) -> String {
    line.map_or_else(|| "?".into(), |l| l.to_string())
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}
