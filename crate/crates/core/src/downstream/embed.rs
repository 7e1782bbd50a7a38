use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalError;
use crate::autodiff::Tape;
use crate::data::Dataset;
use crate::gnn::{forward, readout, EncoderConfig, EncoderParams, Readout};
use crate::graph::{disjoint_union, Graph};
use crate::phd::assemble_whole;
use crate::pretrain::{write_atomic, Checkpoint};

const EMBED_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    /// One row per graph, in dataset order.
    pub rows: Vec<Vec<f64>>,
    pub readout: Readout,
    /// Digest of the checkpoint the rows came from, if any.
    pub source: Option<String>,
}

impl EmbeddingMatrix {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// Embeds each graph on its own in inference mode. Row `i` depends only on
/// graph `i`; batching does not change any value.
pub fn embed_graphs(
    graphs: &[Graph],
    params: &EncoderParams,
    config: &EncoderConfig,
    mode: Readout,
) -> Result<Vec<Vec<f64>>, EvalError> {
    if let Some(i) = graphs.iter().position(|g| !config.schema.covers(g)) {
        return Err(EvalError::Vocabulary { graph: i });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut rows = Vec::with_capacity(graphs.len());
    for chunk in graphs.chunks(EMBED_BATCH) {
        let instances: Vec<_> = chunk.iter().map(|g| assemble_whole(g, config.direction)).collect();
        let batch = disjoint_union(instances.iter().map(|i| &i.graph))?;
        let tape = Tape::new();
        let bound = params.bind(&tape);
        let h = forward(&batch, &bound, config, false, &mut rng)?;
        let out = readout(h, &batch, mode)?.value();
        rows.extend(out.to_rows());
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite("embedding".into()));
    }
    Ok(rows)
}

pub fn extract_embeddings(
    dataset: &Dataset,
    checkpoint: &Checkpoint,
    mode: Readout,
) -> Result<EmbeddingMatrix, EvalError> {
    let params = checkpoint.encoder_params()?;
    let rows = embed_graphs(&dataset.graphs, &params, &checkpoint.encoder, mode)?;
    Ok(EmbeddingMatrix { rows, readout: mode, source: Some(checkpoint.digest()) })
}

/// Header `graph_id,label,e0,...`, then one row per graph; values carry 17
/// significant digits so parsing recovers them exactly.
pub fn embeddings_csv(m: &EmbeddingMatrix, labels: &[Option<usize>]) -> Result<String, EvalError> {
    if labels.len() != m.rows.len() {
        return Err(EvalError::Length { what: "labels", expected: m.rows.len(), found: labels.len() });
    }
    let mut out = String::from("graph_id,label");
    for j in 0..m.dim() {
        write!(out, ",e{j}").expect("string write");
    }
    out.push('\n');
    for (i, (row, label)) in m.rows.iter().zip(labels).enumerate() {
        write!(out, "{i},").expect("string write");
        if let Some(l) = label {
            write!(out, "{l}").expect("string write");
        }
        for x in row {
            write!(out, ",{x:.16e}").expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn export_embeddings_csv(m: &EmbeddingMatrix, labels: &[Option<usize>], path: &Path) -> Result<(), EvalError> {
    write_atomic(path, embeddings_csv(m, labels)?.as_bytes())?;
    Ok(())
}

/// Parsed embedding file: ids, optional labels and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub ids: Vec<usize>,
    pub labels: Vec<Option<usize>>,
    pub rows: Vec<Vec<f64>>,
}

pub fn parse_embeddings_csv(text: &str) -> Result<EmbeddingTable, EvalError> {
    let bad = |line: usize, message: String| EvalError::Csv { line, message };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "graph_id" || cols[1] != "label" {
        return Err(bad(1, format!("unexpected header {header:?}")));
    }
    let dim = cols.len() - 2;
    let mut table = EmbeddingTable { ids: Vec::new(), labels: Vec::new(), rows: Vec::new() };
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(bad(n, format!("expected {} fields, found {}", dim + 2, fields.len())));
        }
        table.ids.push(fields[0].trim().parse().map_err(|_| bad(n, format!("bad graph id {:?}", fields[0])))?);
        let label = fields[1].trim();
        table.labels.push(if label.is_empty() {
            None
        } else {
            Some(label.parse().map_err(|_| bad(n, format!("bad label {label:?}")))?)
        });
        let row = fields[2..]
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| bad(n, format!("bad value {f:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if row.iter().any(|x| !x.is_finite()) {
            return Err(bad(n, "non-finite value".into()));
        }
        table.rows.push(row);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_shape_and_round_trip() {
        let m = EmbeddingMatrix {
            rows: vec![vec![0.1, -1.0 / 3.0], vec![f64::MIN_POSITIVE, 1e300]],
            readout: Readout::Mean,
            source: None,
        };
        let text = embeddings_csv(&m, &[Some(1), None]).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("graph_id,label,e0,e1\n0,1,"));
        let parsed = parse_embeddings_csv(&text).unwrap();
        assert_eq!(parsed.rows, m.rows);
        assert_eq!(parsed.labels, vec![Some(1), None]);
        assert_eq!(parsed.ids, vec![0, 1]);
    }
}
