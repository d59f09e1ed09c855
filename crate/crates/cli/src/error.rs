use sgl_lab::LabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("input: {0}")]
    Input(String),

    #[error("solver: {0}")]
    Solver(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad configuration or input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(_) => 3,
            _ => 2,
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Core(c) => c.into(),
            LabError::Io(e) => CliError::Io(e),
            LabError::Csv(e) => CliError::Input(e.to_string()),
            LabError::Json(e) => CliError::Input(e.to_string()),
            LabError::Config(s) => CliError::Config(s),
            LabError::InsufficientData(s) => CliError::Solver(format!("insufficient data: {s}")),
        }
    }
}

impl From<sgl_core::Error> for CliError {
    fn from(e: sgl_core::Error) -> Self {
        use sgl_core::Error as E;
        match e {
            E::SolverFailure(_) | E::ResolventSingular { .. } => CliError::Solver(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
