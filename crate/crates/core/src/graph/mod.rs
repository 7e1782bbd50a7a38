//! Attributed undirected graphs with categorical node and edge features.
//!
//! Edges are stored once with `u < v`. Node order is the ingestion order and
//! is meaningful: half-graph decomposition splits on contiguous index ranges.

mod batch;

pub use batch::{disjoint_union, BatchGraph, MessageGraph, Segment};

use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("node count {num_nodes} does not match {feats} node feature rows")]
    NodeCountMismatch { num_nodes: usize, feats: usize },
    #[error("endpoint out of range: edge ({u}, {v}) in a graph with {num_nodes} nodes")]
    EndpointOutOfRange { u: usize, v: usize, num_nodes: usize },
    #[error("self-loop on node {node}")]
    SelfLoop { node: usize },
    #[error("edge ({u}, {v}) is not stored with u < v")]
    UnorderedEdge { u: usize, v: usize },
    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: usize, v: usize },
    #[error("node {node} has {found} features, expected {expected}")]
    NodeFeatureWidth { node: usize, expected: usize, found: usize },
    #[error("edge {edge} has {found} features, expected {expected}")]
    EdgeFeatureWidth { edge: usize, expected: usize, found: usize },
    #[error("empty or out-of-range window {start}..{end} for a graph with {num_nodes} nodes")]
    BadWindow { start: usize, end: usize, num_nodes: usize },
    #[error("cannot batch an empty sequence of graphs")]
    EmptyBatch,
    #[error("heterogeneous feature widths in batch: member {member} has {found:?}, expected {expected:?}")]
    HeterogeneousWidths { member: usize, expected: (usize, usize), found: (usize, usize) },
}

/// One undirected edge, stored with `u < v`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub feats: Vec<usize>,
}

impl Edge {
    pub fn new(u: usize, v: usize, feats: Vec<usize>) -> Self {
        Self { u, v, feats }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub num_nodes: usize,
    pub node_feats: Vec<Vec<usize>>,
    pub edges: Vec<Edge>,
    pub label: Option<usize>,
}

/// Directed message entries derived from an undirected edge list.
///
/// `edge_rows[i]` indexes the feature row (the undirected edge) shared by
/// both directions of that edge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DirectedEdgeList {
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    pub edge_rows: Vec<usize>,
}

impl DirectedEdgeList {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn push(&mut self, source: usize, target: usize, row: usize) {
        self.sources.push(source);
        self.targets.push(target);
        self.edge_rows.push(row);
    }
}

impl Graph {
    /// Builds a graph and validates it.
    pub fn new(node_feats: Vec<Vec<usize>>, edges: Vec<Edge>, label: Option<usize>) -> Result<Self, GraphError> {
        let g = Self { num_nodes: node_feats.len(), node_feats, edges, label };
        g.validate()?;
        Ok(g)
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Width of the node feature vectors (0 for an empty graph).
    pub fn node_width(&self) -> usize {
        self.node_feats.first().map_or(0, Vec::len)
    }

    /// Width of the edge feature vectors, or `None` when there are no edges.
    pub fn edge_width(&self) -> Option<usize> {
        self.edges.first().map(|e| e.feats.len())
    }

    /// Checks every structural invariant, reporting the first violation.
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.node_feats.len() != self.num_nodes {
            return Err(GraphError::NodeCountMismatch { num_nodes: self.num_nodes, feats: self.node_feats.len() });
        }
        let width = self.node_width();
        for (node, f) in self.node_feats.iter().enumerate() {
            if f.len() != width {
                return Err(GraphError::NodeFeatureWidth { node, expected: width, found: f.len() });
            }
        }
        let edge_width = self.edge_width().unwrap_or(0);
        let mut seen = HashSet::with_capacity(self.edges.len());
        for (i, e) in self.edges.iter().enumerate() {
            if e.u >= self.num_nodes || e.v >= self.num_nodes {
                return Err(GraphError::EndpointOutOfRange { u: e.u, v: e.v, num_nodes: self.num_nodes });
            }
            if e.u == e.v {
                return Err(GraphError::SelfLoop { node: e.u });
            }
            if e.u > e.v {
                return Err(GraphError::UnorderedEdge { u: e.u, v: e.v });
            }
            if !seen.insert((e.u, e.v)) {
                return Err(GraphError::DuplicateEdge { u: e.u, v: e.v });
            }
            if e.feats.len() != edge_width {
                return Err(GraphError::EdgeFeatureWidth { edge: i, expected: edge_width, found: e.feats.len() });
            }
        }
        Ok(())
    }

    /// Subgraph induced by a contiguous node window, re-indexed from 0.
    ///
    /// Keeps exactly the edges with both endpoints inside the window, in
    /// their original order.
    pub fn induced_subgraph(&self, window: Range<usize>) -> Result<Graph, GraphError> {
        if window.start >= window.end || window.end > self.num_nodes {
            return Err(GraphError::BadWindow { start: window.start, end: window.end, num_nodes: self.num_nodes });
        }
        let offset = window.start;
        let node_feats = self.node_feats[window.clone()].to_vec();
        let edges = self
            .edges
            .iter()
            .filter(|e| window.contains(&e.u) && window.contains(&e.v))
            .map(|e| Edge::new(e.u - offset, e.v - offset, e.feats.clone()))
            .collect();
        Ok(Graph { num_nodes: window.len(), node_feats, edges, label: self.label })
    }

    /// Both directions of every undirected edge; entry `2r` is `u -> v` and
    /// `2r + 1` is `v -> u` for edge `r`.
    pub fn to_directed(&self) -> DirectedEdgeList {
        let mut out = DirectedEdgeList::default();
        for (row, e) in self.edges.iter().enumerate() {
            out.push(e.u, e.v, row);
            out.push(e.v, e.u, row);
        }
        out
    }
}

/// Vocabulary size per categorical feature slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub node_vocab: Vec<usize>,
    pub edge_vocab: Vec<usize>,
}

impl FeatureSchema {
    /// Smallest schema covering every feature index in `graphs`.
    pub fn infer<'a>(graphs: impl IntoIterator<Item = &'a Graph>) -> Self {
        let mut node_vocab: Vec<usize> = Vec::new();
        let mut edge_vocab: Vec<usize> = Vec::new();
        fn widen(vocab: &mut Vec<usize>, feats: &[usize]) {
            if vocab.len() < feats.len() {
                vocab.resize(feats.len(), 0);
            }
            for (slot, &f) in feats.iter().enumerate() {
                vocab[slot] = vocab[slot].max(f + 1);
            }
        }
        for g in graphs {
            for f in &g.node_feats {
                widen(&mut node_vocab, f);
            }
            for e in &g.edges {
                widen(&mut edge_vocab, &e.feats);
            }
        }
        Self { node_vocab, edge_vocab }
    }

    /// True when every feature index of `g` fits inside this schema.
    pub fn covers(&self, g: &Graph) -> bool {
        let fits = |vocab: &[usize], feats: &[usize]| {
            feats.len() == vocab.len() && feats.iter().zip(vocab).all(|(f, v)| f < v)
        };
        g.node_feats.iter().all(|f| fits(&self.node_vocab, f))
            && g.edges.iter().all(|e| fits(&self.edge_vocab, &e.feats))
    }
}
