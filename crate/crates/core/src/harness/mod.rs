//! Experiment orchestration: configuration, deterministic random streams,
//! the four experiment runners and their file outputs.

use std::path::Path;

use thiserror::Error;

use crate::bounds::BoundsError;
use crate::control::ControlError;
use crate::memory::MemoryError;
use crate::photonics::PhotonicsError;
use crate::tomography::TomographyError;

pub mod config;
pub mod experiments;
pub mod output;
pub mod rng;

pub use config::{ExperimentConfig, Setup, TimingPolicy};
pub use experiments::{
    execute_program, run_bounds_table, run_characterization, run_efficiency_scan,
    run_random_access, EfficiencyScan, QubitRow, ReadOutcome, RunReport, SlotRecord, Summary,
};
pub use output::Meta;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Tomography(#[from] TomographyError),
    #[error(transparent)]
    Photonics(#[from] PhotonicsError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        }
    }
}
