//! Experiment orchestration: JSON configs, seeded multi-trial runs, regret
//! metrics against the hindsight oracle, and plot-ready CSV emission.
//!
//! A run is a pure function of its config. For every seed one noise trace
//! is generated up front and every controller consumes that identical
//! trace (the disturbances never react to the controls); an FNV-1a hash of
//! the trace is recorded per trial as evidence. The hindsight oracle is
//! solved once per trace and shared, so per trial
//!
//! ```text
//! regret = total_cost - oracle_cost        (exactly, same trace, same costs)
//! ```
//!
//! Trials fan out across a worker pool sized by `BANDIT_CONTROL_THREADS`;
//! results are reduced in config order, so outputs are byte-identical
//! across reruns and thread counts.

mod config;
mod output;
mod runner;

pub use config::{
    default_preset, preset_variants, ControllerSpec, CostMatrices, ExperimentConfig,
    OracleSpec, SystemSpec,
};
pub use output::{emit_csv, emit_estimate_csv};
pub use runner::{
    load_config, moving_average, run_estimation_study, run_experiment, sweep_experiment,
    ControllerAggregate, EstimationRecord, OracleRecord, RegretReport, TrialRecord,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::control::ControlError;
use crate::lds::LdsError;
use crate::sysid::SysidError;

/// Orchestration failure: bad config, trial error, or artifact I/O.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Lds(#[from] LdsError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Sysid(#[from] SysidError),
}
