use migranet_core::Error as CoreError;

/// Process exit codes.
pub mod code {
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const ESTIMATION: i32 = 3;
    pub const EQUILIBRIUM: i32 = 4;
    pub const DATA: i32 = 5;
}

pub const EXIT_CODE_HELP: &str = "\
Exit codes:
  0  success
  1  other failure
  2  invalid configuration (schema violation, unknown key, conflicting fields)
  3  estimation failure (non-convergence, separation, collinear design)
  4  equilibrium failure (non-convergence)
  5  data error (missing or malformed input files)

Errors are printed to stderr as one JSON object per line:
  {\"error\":\"<kind>\",\"code\":<n>,\"message\":\"...\"}";

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(code::CONFIG, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(code::DATA, message)
    }

    pub fn kind(&self) -> &'static str {
        match self.code {
            code::CONFIG => "config",
            code::ESTIMATION => "estimation",
            code::EQUILIBRIUM => "equilibrium",
            code::DATA => "data",
            _ => "other",
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::json!({"error": self.kind(), "code": self.code, "message": self.message}).to_string()
    }
}

/// Stage in which a core error surfaced; decides the exit code of
/// otherwise generic validation errors.
#[derive(Debug, Clone, Copy)]
pub enum Stage {
    Config,
    Data,
    Estimation,
    Equilibrium,
    Output,
}

pub fn at(stage: Stage, context: &str) -> impl FnOnce(CoreError) -> CliError + '_ {
    move |e| {
        let code = match (&e, stage) {
            (CoreError::Data { .. } | CoreError::Csv { .. }, _) => code::DATA,
            (CoreError::Io { .. }, Stage::Output) => code::OTHER,
            (CoreError::Io { .. }, _) => code::DATA,
            (CoreError::NonConvergence { .. } | CoreError::Separation { .. } | CoreError::Collinear { .. }, _) => code::ESTIMATION,
            (CoreError::EquilibriumNonConvergence { .. }, _) => code::EQUILIBRIUM,
            (CoreError::Unstable(_), _) => code::CONFIG,
            (CoreError::Validation(_), Stage::Config) => code::CONFIG,
            (CoreError::Validation(_), Stage::Data) => code::DATA,
            (CoreError::Validation(_), Stage::Estimation) => code::ESTIMATION,
            (CoreError::Validation(_), Stage::Equilibrium) => code::EQUILIBRIUM,
            (CoreError::Validation(_), Stage::Output) => code::OTHER,
        };
        CliError::new(code, format!("{context}: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
