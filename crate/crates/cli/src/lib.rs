//! Library half of the `monoscat` command line tool.
//!
//! The binary is a thin argument-parsing wrapper; everything it does is
//! reachable through these modules so integration tests can drive runs
//! in-process and byte-compare the emitted artifacts.

pub mod output;
pub mod report;
pub mod runner;
pub mod scenario;

/// Failures are split into the two exit-code classes the binary reports:
/// configuration problems (bad scenario, bad flags, unusable paths) and
/// numerical failures (singular systems, non-convergence).
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) => m,
        }
    }

    /// Machine-readable form printed on standard error by the binary.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind(), "message": self.message() }
        })
        .to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<monoscat::Error> for CliError {
    fn from(e: monoscat::Error) -> Self {
        use monoscat::Error::*;
        match e {
            Domain(_) | Geometry(_) | Degenerate(_) | Config(_) => {
                CliError::Config(e.to_string())
            }
            Singular(_) | NonConvergence { .. } | Divergence { .. } | SingularPoint(_) => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o failure: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
