//! Construction of pairwise half-graph discrimination instances.
//!
//! A source graph is split at a border node into the induced subgraphs on
//! `[0, b)` and `[b, n)`. With probability one half the second half is
//! swapped for a half of another graph (label 0); otherwise the pair is kept
//! (label 1). The pair is then merged into one graph with a collection node
//! that receives a virtual edge from every real node.

use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DirectedEdgeList, Graph, GraphError, MessageGraph, Segment};
use crate::seed::derive_rng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PhdError {
    #[error("graph with {0} nodes cannot be split into two non-empty halves")]
    TooSmall(usize),
    #[error("partner graph {0} is the source graph itself")]
    SamePartner(usize),
    #[error("need at least 2 graphs to sample negatives, got {0}")]
    DatasetTooSmall(usize),
    #[error("graph {index}: {source}")]
    InGraph { index: usize, source: Box<PhdError> },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Direction of the virtual edges between real nodes and the collection node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Real nodes send to the collection node; it sends nothing back.
    Unidirectional,
    /// Virtual edges in both directions.
    Bidirectional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub source: usize,
    pub border: usize,
    pub partner: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HalfGraphPair {
    pub first: Graph,
    pub second: Graph,
    /// 1 when both halves come from the same source graph.
    pub label: u8,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub first: Graph,
    pub second: Graph,
    pub border: usize,
}

/// A pair merged into one message graph. Node order is the first half, then
/// the second half, then the collection node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledInstance {
    pub graph: MessageGraph,
    pub label: u8,
    pub first_nodes: usize,
    pub second_nodes: usize,
    pub direction: Direction,
}

impl AssembledInstance {
    pub fn collection_node(&self) -> usize {
        self.first_nodes + self.second_nodes
    }

    /// The same instance with the collection node and its virtual edges removed.
    pub fn without_collection(&self) -> MessageGraph {
        let g = &self.graph;
        let real = self.collection_node();
        let rows = g.edge_segments.iter().take_while(|s| **s != Segment::Virtual).count();
        let mut messages = DirectedEdgeList::default();
        for m in 0..g.messages.len() {
            if g.messages.sources[m] != real && g.messages.targets[m] != real {
                messages.push(g.messages.sources[m], g.messages.targets[m], g.messages.edge_rows[m]);
            }
        }
        MessageGraph {
            node_feats: g.node_feats[..real].to_vec(),
            node_segments: g.node_segments[..real].to_vec(),
            edge_feats: g.edge_feats[..rows].to_vec(),
            edge_segments: g.edge_segments[..rows].to_vec(),
            messages,
            collection_node: None,
        }
    }
}

/// Admissible border indices for an `n`-node graph:
/// `[ceil(n/3), floor(2n/3)]` clamped into `[1, n-1]`.
pub fn border_range(n: usize) -> Result<RangeInclusive<usize>, PhdError> {
    if n < 2 {
        return Err(PhdError::TooSmall(n));
    }
    let lo = n.div_ceil(3).clamp(1, n - 1);
    let hi = (2 * n / 3).clamp(1, n - 1);
    Ok(lo..=hi.max(lo))
}

pub fn sample_border<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<usize, PhdError> {
    Ok(rng.random_range(border_range(n)?))
}

/// Splits `g` at border `b` into the induced subgraphs on `[0, b)` and `[b, n)`.
pub fn decompose_at(g: &Graph, border: usize) -> Result<Decomposition, PhdError> {
    if g.num_nodes < 2 {
        return Err(PhdError::TooSmall(g.num_nodes));
    }
    Ok(Decomposition {
        first: g.induced_subgraph(0..border)?,
        second: g.induced_subgraph(border..g.num_nodes)?,
        border,
    })
}

pub fn decompose<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> Result<Decomposition, PhdError> {
    let border = sample_border(g.num_nodes, rng)?;
    decompose_at(g, border)
}

/// Decomposes `source` and, with probability 0.5, replaces its second half
/// with one of the two halves of a partner graph (chosen uniformly).
///
/// Draw order: border, keep/swap coin, then (on swap) the partner, the
/// partner's border and the half selector.
pub fn make_pair<'a, R, F>(
    source: &Graph,
    source_id: usize,
    mut partner_supplier: F,
    rng: &mut R,
) -> Result<HalfGraphPair, PhdError>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> (usize, &'a Graph),
{
    let own = decompose(source, rng)?;
    if rng.random::<f64>() < 0.5 {
        return Ok(HalfGraphPair {
            first: own.first,
            second: own.second,
            label: 1,
            provenance: Provenance { source: source_id, border: own.border, partner: None },
        });
    }
    let (partner_id, partner) = partner_supplier(rng);
    if partner_id == source_id {
        return Err(PhdError::SamePartner(partner_id));
    }
    let other = decompose(partner, rng)?;
    let second = if rng.random::<bool>() { other.first } else { other.second };
    Ok(HalfGraphPair {
        first: own.first,
        second,
        label: 0,
        provenance: Provenance { source: source_id, border: own.border, partner: Some(partner_id) },
    })
}

fn push_real(out: &mut MessageGraph, g: &Graph, segment: Segment, node_base: usize) {
    let row_base = out.edge_feats.len();
    out.node_feats.extend(g.node_feats.iter().cloned());
    out.node_segments.extend(std::iter::repeat_n(segment, g.num_nodes));
    for (r, e) in g.edges.iter().enumerate() {
        out.edge_feats.push(e.feats.clone());
        out.edge_segments.push(segment);
        out.messages.push(e.u + node_base, e.v + node_base, row_base + r);
        out.messages.push(e.v + node_base, e.u + node_base, row_base + r);
    }
}

fn attach_collection(out: &mut MessageGraph, direction: Direction) {
    let collection = out.node_feats.len();
    out.node_feats.push(Vec::new());
    out.node_segments.push(Segment::Virtual);
    out.collection_node = Some(collection);
    let row_base = out.edge_feats.len();
    for i in 0..collection {
        out.edge_feats.push(Vec::new());
        out.edge_segments.push(Segment::Virtual);
        out.messages.push(i, collection, row_base + i);
    }
    if direction == Direction::Bidirectional {
        for i in 0..collection {
            out.messages.push(collection, i, row_base + i);
        }
    }
}

fn empty_message_graph() -> MessageGraph {
    MessageGraph {
        node_feats: Vec::new(),
        node_segments: Vec::new(),
        edge_feats: Vec::new(),
        edge_segments: Vec::new(),
        messages: DirectedEdgeList::default(),
        collection_node: None,
    }
}

/// Merges a pair into one graph with segment labels and a collection node.
pub fn assemble(pair: &HalfGraphPair, direction: Direction) -> AssembledInstance {
    let mut g = empty_message_graph();
    push_real(&mut g, &pair.first, Segment::First, 0);
    push_real(&mut g, &pair.second, Segment::Second, pair.first.num_nodes);
    attach_collection(&mut g, direction);
    AssembledInstance {
        graph: g,
        label: pair.label,
        first_nodes: pair.first.num_nodes,
        second_nodes: pair.second.num_nodes,
        direction,
    }
}

/// Whole graph as a single segment-0 part plus a collection node; the form
/// used to embed graphs after pre-training.
pub fn assemble_whole(g: &Graph, direction: Direction) -> AssembledInstance {
    let mut out = empty_message_graph();
    push_real(&mut out, g, Segment::First, 0);
    attach_collection(&mut out, direction);
    AssembledInstance { graph: out, label: 0, first_nodes: g.num_nodes, second_nodes: 0, direction }
}

/// Instance for graph `index` in `epoch`; depends only on
/// `(seed, epoch, index)` and the dataset.
pub fn build_instance(
    graphs: &[Graph],
    index: usize,
    seed: u64,
    epoch: u64,
    direction: Direction,
) -> Result<AssembledInstance, PhdError> {
    let n = graphs.len();
    if n < 2 {
        return Err(PhdError::DatasetTooSmall(n));
    }
    let mut rng = derive_rng(seed, "phd-instance", &[epoch, index as u64]);
    let supplier = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut j = rng.random_range(0..n - 1);
        if j >= index {
            j += 1;
        }
        (j, &graphs[j])
    };
    let pair = make_pair(&graphs[index], index, supplier, &mut rng)
        .map_err(|e| PhdError::InGraph { index, source: Box::new(e) })?;
    Ok(assemble(&pair, direction))
}

/// Order in which graphs are visited in `epoch`.
pub fn epoch_order(num_graphs: usize, seed: u64, epoch: u64, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..num_graphs).collect();
    if shuffle {
        order.shuffle(&mut derive_rng(seed, "phd-shuffle", &[epoch]));
    }
    order
}

/// One freshly sampled instance per graph, in epoch order.
pub fn build_epoch(
    graphs: &[Graph],
    seed: u64,
    epoch: u64,
    shuffle: bool,
    direction: Direction,
) -> Result<Vec<AssembledInstance>, PhdError> {
    if graphs.len() < 2 {
        return Err(PhdError::DatasetTooSmall(graphs.len()));
    }
    epoch_order(graphs.len(), seed, epoch, shuffle)
        .into_iter()
        .map(|i| build_instance(graphs, i, seed, epoch, direction))
        .collect()
}
