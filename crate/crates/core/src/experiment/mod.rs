//! Experiment runner: configuration, the four regime presets and the
//! artifact-writing pipelines.

mod config;
mod run;

pub use config::{
    parse_regime, preset_summary, ExperimentConfig, Geometry, ImageSpec, LayeredNumerics, MediumConfig, Numerics,
    OutputConfig, ParaxialNumerics, Tolerances, PRESET_NAMES,
};
pub use run::{config_hash, run_experiment, ArtifactRecord, Check, Manifest, RunOutcome, Stage, MANIFEST_FILE};
