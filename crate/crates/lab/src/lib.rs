//! Experiment harness around `mmimo-core`: TOML experiment specs, presets,
//! a rayon work pool over (sweep point, drop, BS) tasks, CSV export and the
//! statistics-acquisition experiments.

pub mod config;
pub mod cov;
pub mod harness;
pub mod matio;
pub mod output;
pub mod presets;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] mmimo_core::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl LabError {
    /// Process exit code: 2 for bad inputs, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Core(e) if e.is_config() => 2,
            LabError::Core(_) => 3,
            LabError::Config(_) | LabError::Toml(_) => 2,
            LabError::Csv(_) | LabError::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
