//! Dataset ingestion, splitting, experiment orchestration and reporting.

mod config;
mod dataset;
mod experiment;
mod fetch;
mod report;
mod split;
mod synth;

pub use config::{env_layer, toml_layer, ExperimentConfig, Method, Modality, TowerPreset, ENV_PREFIX};
pub use dataset::{
    canonicalize_pairs, class_counts, ingest, load_image, load_image_dir, pairs_csv, parse_pairs_csv, to_grayscale,
    write_pgm, Dataset, DatasetPaths, IngestOptions, LabeledPair, ValidationReport,
};
pub use experiment::{
    load_config, load_pairs, method_label, run_experiment, run_on_dataset, write_report, Embedders, Experiment, FitLog,
    TrainedModel,
};
pub use fetch::{fetch_pubchem, FetchError, FetchOptions, FetchedCompound, Transport, TransportError, PUBCHEM_BASE};
pub use report::{comparison_table, strip_timestamp, Report};
pub use split::{split, Split};
pub use synth::{drug_id, drugs_of, synthetic_dataset, SynthConfig, SynthDrug};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::embeddings::EmbeddingTableError;
use crate::fusion::FusionError;
use crate::image::ImageError;
use crate::relational::RelationalError;
use crate::smiles::SmilesError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<PipelineError> },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    InFile { path: PathBuf, source: Box<PipelineError> },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot decode {}: {detail}", path.display())]
    Decode { path: PathBuf, detail: String },
    #[error("drugs missing modalities: {}", fmt_missing(.0))]
    MissingModalities(Vec<(String, Vec<&'static str>)>),
    #[error("{0}")]
    InvalidPair(String),
    #[error("config: {0}")]
    Config(String),
    #[error("split: {0}")]
    Split(String),
    #[error("test-set leakage: {0}")]
    Leakage(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error(transparent)]
    Relational(#[from] RelationalError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Embeddings(#[from] EmbeddingTableError),
}

fn fmt_missing(m: &[(String, Vec<&'static str>)]) -> String {
    m.iter().map(|(d, what)| format!("{d} ({})", what.join(", "))).collect::<Vec<_>>().join("; ")
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        PipelineError::Parse { line, msg: msg.into() }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        PipelineError::Stage { stage: stage.to_string(), source: Box::new(self) }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        PipelineError::InFile { path: path.to_path_buf(), source: Box::new(self) }
    }
}
