use serde::Serialize;
use sthomog::EnvironmentError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
    /// A numeric failure, tagged with the module that raised it.
    #[error("{module}: {source}")]
    Numeric {
        module: &'static str,
        source: sthomog::Error,
    },
}

impl CliError {
    pub fn numeric(module: &'static str, source: impl Into<sthomog::Error>) -> Self {
        Self::Numeric {
            module,
            source: source.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "ConfigError",
            Self::Io(_) => "IoError",
            Self::Environment(e) => e.kind(),
            Self::Numeric { source, .. } => source.kind(),
        }
    }

    pub fn module(&self) -> &'static str {
        match self {
            Self::Config(_) | Self::Io(_) => "cli",
            Self::Environment(_) => "environment",
            Self::Numeric { module, .. } => module,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Environment(_) => 3,
            _ => 1,
        }
    }

    pub fn report(&self, command: &str, config_hash: Option<&str>) -> ErrorReport {
        ErrorReport {
            command: command.to_string(),
            kind: self.kind(),
            module: self.module(),
            message: self.to_string(),
            config_hash: config_hash.map(str::to_string),
        }
    }
}

/// Machine-readable failure written to `error.json` and stderr.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub command: String,
    pub kind: &'static str,
    pub module: &'static str,
    pub message: String,
    pub config_hash: Option<String>,
}
