//! Experiment configuration, architecture presets, checkpoints and the
//! training protocols.

pub mod analysis;
pub mod checkpoint;
pub mod config;
pub mod preset;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{CrossValidation, DatasetSource, ExperimentConfig, NetworkSource, OptimizerKind};
pub use preset::{apply_scheme, preset_layers, Scheme, PRESETS};
pub use train::{
    average_error, evaluate, load_datasets, metrics_csv, run_experiment, vote, EpochMetrics, Evaluation, TrainOutcome,
    TrainedModel, METRICS_HEADER,
};
