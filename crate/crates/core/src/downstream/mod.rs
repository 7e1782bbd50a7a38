//! Using a pre-trained encoder: embeddings, linear probes, fine-tuning
//! and classification metrics.

mod embed;
mod finetune;
mod metrics;
mod probe;

use thiserror::Error;

pub use embed::{
    embed_graphs, embeddings_csv, export_embeddings_csv, extract_embeddings, parse_embeddings_csv, EmbeddingMatrix,
    EmbeddingTable,
};
pub use finetune::{
    finetune, finetune_params, parse_split, FinetuneConfig, FinetuneReport, Finetuned, Metric, SplitAssignment,
};
pub use metrics::{accuracy, mean_std, roc_auc, stratified_kfold};
pub use probe::{fit_logistic, linear_probe, EvalReport, LogisticModel, ProbeConfig};

use crate::autodiff::TensorError;
use crate::gnn::ModelError;
use crate::graph::GraphError;
use crate::pretrain::{CheckpointError, OptimError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("{what}: expected {expected} entries, found {found}")]
    Length { what: &'static str, expected: usize, found: usize },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("empty {0}")]
    Empty(String),
    #[error("invalid folds: {0}")]
    Folds(String),
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error("graph {graph} has features outside the checkpoint's vocabulary")]
    Vocabulary { graph: usize },
    #[error("dataset has unlabeled graphs")]
    Unlabeled,
    #[error("embedding csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("split file line {line}: {message}")]
    SplitFile { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
