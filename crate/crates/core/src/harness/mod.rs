//! CLI-facing orchestration: config schema, static validation, experiment
//! resolution, Monte Carlo execution, and file emission.

pub mod config;
pub mod simulate;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {context}")]
    Config { context: String },
    #[error("benchmark gain fails its strong-stability certificate: {context}")]
    BenchmarkRejected { context: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Dogd(#[from] crate::dogd::DogdError),
    #[error(transparent)]
    Sdp(#[from] crate::sdp::SdpError),
    #[error(transparent)]
    Matlin(#[from] crate::matlin::MatlinError),
    #[error(transparent)]
    Plant(#[from] crate::plant::PlantError),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
    #[error(transparent)]
    Regret(#[from] crate::regret::RegretError),
}

pub use config::{
    load_config, params_json, resolve, validation_report, BenchmarkConfig, CheckResult,
    DerivedParams, ExperimentConfig, SystemConfig, TopologyConfig, DEFAULT_T_MULTIPLIER,
    REFERENCE_PRESET,
};
pub use simulate::{
    cmd_simulate, derive_params_json, derive_params_text, FAILURE_SENTINEL, OUTPUT_FILES,
};
