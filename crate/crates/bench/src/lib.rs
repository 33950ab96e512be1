//! Experiment grid over fusion methods and noise levels.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod methods;
pub mod output;

pub use config::{ExperimentConfig, Resolved};
pub use experiment::{run_experiment, ExperimentResult};
pub use methods::Method;
pub use output::Format;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("method `{0}` is out of scope for this benchmark")]
    OutOfScope(String),

    #[error(transparent)]
    Core(#[from] coopfuse::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
