//! Experiment harness around `msde-core`: JSON configs, a rayon-backed
//! executor, CSV/JSON artifacts and the acceptance suite.

pub mod cli;
pub mod config;
pub mod exec;
pub mod output;
pub mod suite;

pub use config::ExperimentConfig;
pub use exec::RayonExecutor;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Numerical(#[from] msde_core::Error),
    #[error("{0}")]
    Failed(String),
}

impl HarnessError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}
