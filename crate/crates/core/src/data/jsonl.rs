//! One graph per line:
//! `{"num_nodes":3,"node_feats":[[0],[1],[0]],"edges":[[0,1,0],[1,2,0]],"label":1}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_to_string, DataError, Dataset};
use crate::graph::{Edge, Graph};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    num_nodes: usize,
    node_feats: Vec<Vec<usize>>,
    edges: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
}

fn to_graph(r: Record, line: usize) -> Result<Graph, DataError> {
    let mut edges = Vec::with_capacity(r.edges.len());
    for e in r.edges {
        if e.len() < 2 {
            return Err(DataError::Parse {
                file: "jsonl".into(),
                line,
                message: format!("edge needs two endpoints, got {e:?}"),
            });
        }
        let (a, b) = (e[0], e[1]);
        let (u, v) = if a <= b { (a, b) } else { (b, a) };
        edges.push(Edge::new(u, v, e[2..].to_vec()));
    }
    let g = Graph { num_nodes: r.num_nodes, node_feats: r.node_feats, edges, label: r.label };
    g.validate().map_err(|source| DataError::InvalidGraph { line, source })?;
    Ok(g)
}

pub fn parse_jsonl_str(name: &str, text: &str) -> Result<Dataset, DataError> {
    let mut graphs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(raw).map_err(|e| DataError::Parse {
            file: name.to_string(),
            line,
            message: e.to_string(),
        })?;
        graphs.push(to_graph(record, line)?);
    }
    Ok(Dataset::new(name, graphs))
}

pub fn parse_jsonl(path: &Path) -> Result<Dataset, DataError> {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("jsonl");
    parse_jsonl_str(name, &read_to_string(path)?)
}

pub fn write_jsonl_string(graphs: &[Graph]) -> String {
    let mut out = String::new();
    for g in graphs {
        let record = Record {
            num_nodes: g.num_nodes,
            node_feats: g.node_feats.clone(),
            edges: g.edges.iter().map(|e| [e.u, e.v].into_iter().chain(e.feats.iter().copied()).collect()).collect(),
            label: g.label,
        };
        out.push_str(&serde_json::to_string(&record).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, graphs: &[Graph]) -> Result<(), DataError> {
    std::fs::write(path, write_jsonl_string(graphs))
        .map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PATH3: &str = r#"{"num_nodes":3,"node_feats":[[0],[1],[0]],"edges":[[0,1,0],[1,2,0]],"label":1}"#;

    #[test]
    fn parses_three_node_path() {
        let ds = parse_jsonl_str("t", PATH3).unwrap();
        let g = &ds.graphs[0];
        assert_eq!(g.num_nodes, 3);
        assert_eq!(g.edges, vec![Edge::new(0, 1, vec![0]), Edge::new(1, 2, vec![0])]);
        assert_eq!(g.label, Some(1));
        assert_eq!(write_jsonl_string(&ds.graphs), format!("{PATH3}\n"));
    }

    #[test]
    fn self_loop_reports_line() {
        let text = r#"{"num_nodes":1,"node_feats":[[0]],"edges":[[0,0,0]]}"#;
        let err = parse_jsonl_str("t", text).unwrap_err().to_string();
        assert!(err.contains("self-loop") && err.contains("line 1"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line() {
        let text = format!("{PATH3}\n{{\"num_nodes\": 2,\n");
        let err = parse_jsonl_str("t", &text).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn unlabeled_graphs_omit_label() {
        let text = r#"{"num_nodes":2,"node_feats":[[0],[0]],"edges":[[1,0]]}"#;
        let ds = parse_jsonl_str("t", text).unwrap();
        assert_eq!(ds.graphs[0].label, None);
        assert_eq!(write_jsonl_string(&ds.graphs), "{\"num_nodes\":2,\"node_feats\":[[0],[0]],\"edges\":[[0,1]]}\n");
    }
}
