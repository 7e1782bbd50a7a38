//! Datasets: TU text format, JSON-lines graphs and synthetic generators.

mod jsonl;
mod synth;
mod tu;

pub use jsonl::{parse_jsonl, parse_jsonl_str, write_jsonl, write_jsonl_string};
pub use synth::{gen_synthetic, FamilySpec, Structure, SynthSpec};
pub use tu::parse_tu;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{FeatureSchema, Graph, GraphError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("reading {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("{source} at line {line}")]
    InvalidGraph { line: usize, source: GraphError },
    #[error("graph {index}: {source}")]
    InvalidGraphIndex { index: usize, source: GraphError },
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Tu,
    Jsonl,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tu" => Ok(Format::Tu),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(format!("unknown format {other:?} (expected tu or jsonl)")),
        }
    }
}

/// An ordered collection of graphs with dense class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub schema: FeatureSchema,
    /// Original label value of each dense class index.
    pub label_map: Vec<i64>,
}

/// Summary statistics printed by `inspect`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Census {
    pub graphs: usize,
    pub classes: usize,
    pub avg_nodes: f64,
    pub avg_edges: f64,
    pub node_width: usize,
    pub edge_width: usize,
    pub node_vocab: Vec<usize>,
    pub edge_vocab: Vec<usize>,
}

impl Dataset {
    /// Wraps graphs whose labels are already dense class indices.
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>) -> Self {
        let schema = FeatureSchema::infer(&graphs);
        let classes = graphs.iter().filter_map(|g| g.label).max().map_or(0, |m| m + 1);
        Self { name: name.into(), graphs, schema, label_map: (0..classes as i64).collect() }
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.label_map.len()
    }

    /// Class index of every graph, or `None` if any graph is unlabeled.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.graphs.iter().map(|g| g.label).collect()
    }

    pub fn census(&self) -> Census {
        let n = self.graphs.len().max(1) as f64;
        Census {
            graphs: self.graphs.len(),
            classes: self.num_classes(),
            avg_nodes: self.graphs.iter().map(|g| g.num_nodes as f64).sum::<f64>() / n,
            avg_edges: self.graphs.iter().map(|g| g.num_edges() as f64).sum::<f64>() / n,
            node_width: self.schema.node_vocab.len(),
            edge_width: self.schema.edge_vocab.len(),
            node_vocab: self.schema.node_vocab.clone(),
            edge_vocab: self.schema.edge_vocab.clone(),
        }
    }
}

/// Loads a dataset; for TU the path is the directory and the dataset name
/// is its final component.
pub fn load(path: &Path, format: Format) -> Result<Dataset, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    match format {
        Format::Jsonl => parse_jsonl(path),
        Format::Tu => {
            let name =
                path.file_name().and_then(|n| n.to_str()).ok_or_else(|| DataError::MissingFile(path.to_path_buf()))?;
            parse_tu(path, name)
        }
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile(path.to_path_buf())
        } else {
            DataError::Io { path: path.to_path_buf(), source }
        }
    })
}
