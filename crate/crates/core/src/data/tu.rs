//! Reader for the TU graph-classification text format.
//!
//! `<name>_A.txt` lists 1-indexed `row, col` node pairs; graph membership
//! comes from `<name>_graph_indicator.txt` and classes from
//! `<name>_graph_labels.txt`. Node and edge label files are optional.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use super::{read_to_string, DataError, Dataset};
use crate::graph::{Edge, FeatureSchema, Graph};

/// First position, label and orientations seen for an undirected edge.
type EdgeSeen = (usize, Option<usize>, [bool; 2]);

struct Lines {
    file: String,
    rows: Vec<(usize, String)>,
}

fn read_lines(dir: &Path, file: String, required: bool) -> Result<Option<Lines>, DataError> {
    let path = dir.join(&file);
    if !path.exists() {
        return if required { Err(DataError::MissingFile(path)) } else { Ok(None) };
    }
    let text = read_to_string(&path)?;
    let rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect();
    Ok(Some(Lines { file, rows }))
}

impl Lines {
    fn err(&self, line: usize, message: impl Into<String>) -> DataError {
        DataError::Parse { file: self.file.clone(), line, message: message.into() }
    }

    fn ints(&self, line: usize, text: &str) -> Result<Vec<i64>, DataError> {
        text.split(',')
            .map(|t| {
                let t = t.trim();
                t.parse::<i64>().map_err(|_| self.err(line, format!("non-integer token {t:?}")))
            })
            .collect()
    }

    fn single_ints(&self) -> Result<Vec<i64>, DataError> {
        self.rows
            .iter()
            .map(|(line, text)| {
                let v = self.ints(*line, text)?;
                match v.as_slice() {
                    [x] => Ok(*x),
                    _ => Err(self.err(*line, format!("expected one integer, found {}", v.len()))),
                }
            })
            .collect()
    }

    /// Non-negative categorical labels, one row per entity (first column).
    fn categorical(&self) -> Result<Vec<usize>, DataError> {
        self.rows
            .iter()
            .map(|(line, text)| {
                let v = self.ints(*line, text)?;
                let first = *v.first().ok_or_else(|| self.err(*line, "empty label row"))?;
                usize::try_from(first).map_err(|_| self.err(*line, format!("negative label {first}")))
            })
            .collect()
    }
}

pub fn parse_tu(dir: &Path, name: &str) -> Result<Dataset, DataError> {
    let adjacency = read_lines(dir, format!("{name}_A.txt"), true)?.expect("required");
    let indicator = read_lines(dir, format!("{name}_graph_indicator.txt"), true)?.expect("required");
    let graph_labels = read_lines(dir, format!("{name}_graph_labels.txt"), true)?.expect("required");
    let node_labels = read_lines(dir, format!("{name}_node_labels.txt"), false)?;
    let edge_labels = read_lines(dir, format!("{name}_edge_labels.txt"), false)?;

    let raw_graph_labels = graph_labels.single_ints()?;
    let num_graphs = raw_graph_labels.len();

    // node -> (graph, local index)
    let graph_of = indicator.single_ints()?;
    let mut placement = Vec::with_capacity(graph_of.len());
    let mut sizes = vec![0usize; num_graphs];
    for (k, &gid) in graph_of.iter().enumerate() {
        let line = indicator.rows[k].0;
        if gid < 1 || gid as usize > num_graphs {
            return Err(indicator.err(line, format!("graph id {gid} outside 1..={num_graphs}")));
        }
        let g = gid as usize - 1;
        placement.push((g, sizes[g]));
        sizes[g] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(indicator.err(0, format!("graph {} has no nodes", empty + 1)));
    }
    let num_nodes = placement.len();

    let node_feats: Vec<usize> = match &node_labels {
        Some(lines) => {
            let v = lines.categorical()?;
            if v.len() != num_nodes {
                return Err(lines.err(v.len(), format!("{} node labels for {num_nodes} nodes", v.len())));
            }
            v
        }
        None => vec![0; num_nodes],
    };
    let edge_feats: Option<Vec<usize>> = match &edge_labels {
        Some(lines) => {
            let v = lines.categorical()?;
            if v.len() != adjacency.rows.len() {
                return Err(
                    lines.err(v.len(), format!("{} edge labels for {} adjacency rows", v.len(), adjacency.rows.len()))
                );
            }
            Some(v)
        }
        None => None,
    };

    let mut graph_nodes: Vec<Vec<Vec<usize>>> = sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
    for (node, &(g, _)) in placement.iter().enumerate() {
        graph_nodes[g].push(vec![node_feats[node]]);
    }

    // (graph, u, v) with u < v -> (edge position, label, orientations seen)
    let mut seen: HashMap<(usize, usize, usize), EdgeSeen> = HashMap::new();
    let mut graph_edges: Vec<Vec<Edge>> = vec![Vec::new(); num_graphs];
    for (k, (line, text)) in adjacency.rows.iter().enumerate() {
        let v = adjacency.ints(*line, text)?;
        let [a, b] = v.as_slice() else {
            return Err(adjacency.err(*line, format!("expected two node ids, found {}", v.len())));
        };
        let lookup = |id: i64| {
            if id < 1 || id as usize > num_nodes {
                Err(adjacency.err(*line, format!("dangling node id {id}")))
            } else {
                Ok(placement[id as usize - 1])
            }
        };
        let ((ga, la), (gb, lb)) = (lookup(*a)?, lookup(*b)?);
        if ga != gb {
            return Err(adjacency.err(
                *line,
                format!("cross-graph edge between node {a} (graph {}) and node {b} (graph {})", ga + 1, gb + 1),
            ));
        }
        if la == lb {
            return Err(adjacency.err(*line, format!("self-loop on node {a}")));
        }
        let label = edge_feats.as_ref().map(|f| f[k]);
        let (u, v, dir) = if la < lb { (la, lb, 0) } else { (lb, la, 1) };
        match seen.get_mut(&(ga, u, v)) {
            Some((_, existing, dirs)) => {
                if dirs[dir] {
                    return Err(adjacency.err(*line, format!("duplicate edge ({a}, {b})")));
                }
                if *existing != label {
                    return Err(adjacency.err(*line, format!("mirrored edge ({a}, {b}) has a different label")));
                }
                dirs[dir] = true;
            }
            None => {
                let mut dirs = [false; 2];
                dirs[dir] = true;
                seen.insert((ga, u, v), (graph_edges[ga].len(), label, dirs));
                graph_edges[ga].push(Edge::new(u, v, label.into_iter().collect()));
            }
        }
    }

    let distinct: BTreeSet<i64> = raw_graph_labels.iter().copied().collect();
    let label_map: Vec<i64> = distinct.into_iter().collect();
    let mut graphs = Vec::with_capacity(num_graphs);
    for (index, (nodes, edges)) in graph_nodes.into_iter().zip(graph_edges).enumerate() {
        let label = label_map.binary_search(&raw_graph_labels[index]).ok();
        let g =
            Graph::new(nodes, edges, label).map_err(|source| super::DataError::InvalidGraphIndex { index, source })?;
        graphs.push(g);
    }
    let schema = FeatureSchema::infer(&graphs);
    Ok(Dataset { name: name.to_string(), graphs, schema, label_map })
}
