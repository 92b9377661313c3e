//! Experiment plumbing: synthetic datasets, training and evaluation loops,
//! ablation sweeps, checkpoints, and inspection exports.

pub mod checkpoint;
pub mod inspect;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::net::NetError;
use crate::vgdoc::VgError;

pub use checkpoint::{
    config_digest, load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, TrainingMeta,
};
pub use inspect::{fragment_ply, inspect, pca_colors, InspectOutputs};
pub use synth::{generate_document, synth_generate, DatasetManifest, Symbol, SynthSpec};
pub use train::{
    ablate, ablate_prepared, ablation_table, build_samples, evaluate, evaluate_logits, predict_all,
    train, train_prepared, AblationRow, EpochLog, Metrics, Prepared, TrainConfig, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Document {
        path: PathBuf,
        #[source]
        source: VgError,
    },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint has {checkpoint} classes but the dataset has {dataset}")]
    ClassMismatch { checkpoint: usize, dataset: usize },
    #[error("{path}: label {label:?} does not match class directory '{class}'")]
    Label {
        path: PathBuf,
        label: Option<usize>,
        class: String,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}
