use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{DirectedEdgeList, Graph, GraphError};

/// Which part of an assembled pair a node or edge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Segment {
    First = 0,
    Second = 1,
    Virtual = 2,
}

impl Segment {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// A graph in message-passing form.
///
/// Nodes carry categorical features and a segment; the collection node (if
/// any) carries no features. `edge_feats` has one row per undirected real
/// edge or per virtual edge; `messages` lists the directed entries, each
/// pointing at its row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageGraph {
    pub node_feats: Vec<Vec<usize>>,
    pub node_segments: Vec<Segment>,
    pub edge_feats: Vec<Vec<usize>>,
    pub edge_segments: Vec<Segment>,
    pub messages: DirectedEdgeList,
    pub collection_node: Option<usize>,
}

impl MessageGraph {
    /// Whole graph tagged with a single segment, no collection node.
    pub fn from_graph(g: &Graph, segment: Segment) -> Self {
        Self {
            node_feats: g.node_feats.clone(),
            node_segments: vec![segment; g.num_nodes],
            edge_feats: g.edges.iter().map(|e| e.feats.clone()).collect(),
            edge_segments: vec![segment; g.edges.len()],
            messages: g.to_directed(),
            collection_node: None,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.node_feats.len()
    }

    pub fn num_real_nodes(&self) -> usize {
        self.num_nodes() - usize::from(self.collection_node.is_some())
    }

    /// Node and edge feature widths taken from real nodes and real edges.
    fn widths(&self) -> (Option<usize>, Option<usize>) {
        let node = (0..self.num_nodes()).find(|&i| Some(i) != self.collection_node).map(|i| self.node_feats[i].len());
        let edge = self
            .edge_feats
            .iter()
            .zip(&self.edge_segments)
            .find(|(_, s)| **s != Segment::Virtual)
            .map(|(f, _)| f.len());
        (node, edge)
    }
}

/// Disjoint union of several message graphs with per-member offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchGraph {
    pub node_feats: Vec<Vec<usize>>,
    pub node_segments: Vec<Segment>,
    pub edge_feats: Vec<Vec<usize>>,
    pub edge_segments: Vec<Segment>,
    pub messages: DirectedEdgeList,
    pub node_offsets: Vec<usize>,
    pub edge_row_offsets: Vec<usize>,
    pub message_offsets: Vec<usize>,
    pub graph_id_per_node: Vec<usize>,
    pub collection_node_indices: Vec<Option<usize>>,
}

impl BatchGraph {
    pub fn num_graphs(&self) -> usize {
        self.node_offsets.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_feats.len()
    }

    pub fn member_nodes(&self, member: usize) -> Range<usize> {
        let end = self.node_offsets.get(member + 1).copied().unwrap_or(self.num_nodes());
        self.node_offsets[member]..end
    }

    pub fn is_collection(&self, node: usize) -> bool {
        self.collection_node_indices[self.graph_id_per_node[node]] == Some(node)
    }

    /// Collection node of every member, or `None` if any member lacks one.
    pub fn collection_indices(&self) -> Option<Vec<usize>> {
        self.collection_node_indices.iter().copied().collect()
    }

    /// Inverse of [`disjoint_union`].
    pub fn split(&self) -> Vec<MessageGraph> {
        let k = self.num_graphs();
        let bound =
            |offsets: &[usize], i: usize, total: usize| offsets[i]..offsets.get(i + 1).copied().unwrap_or(total);
        (0..k)
            .map(|i| {
                let nodes = bound(&self.node_offsets, i, self.num_nodes());
                let rows = bound(&self.edge_row_offsets, i, self.edge_feats.len());
                let msgs = bound(&self.message_offsets, i, self.messages.len());
                let mut messages = DirectedEdgeList::default();
                for m in msgs {
                    messages.push(
                        self.messages.sources[m] - nodes.start,
                        self.messages.targets[m] - nodes.start,
                        self.messages.edge_rows[m] - rows.start,
                    );
                }
                MessageGraph {
                    node_feats: self.node_feats[nodes.clone()].to_vec(),
                    node_segments: self.node_segments[nodes.clone()].to_vec(),
                    edge_feats: self.edge_feats[rows.clone()].to_vec(),
                    edge_segments: self.edge_segments[rows].to_vec(),
                    messages,
                    collection_node: self.collection_node_indices[i].map(|c| c - nodes.start),
                }
            })
            .collect()
    }
}

/// Concatenates members, shifting node and edge-row indices by offsets.
pub fn disjoint_union<'a, I>(members: I) -> Result<BatchGraph, GraphError>
where
    I: IntoIterator<Item = &'a MessageGraph>,
{
    let mut out = BatchGraph {
        node_feats: Vec::new(),
        node_segments: Vec::new(),
        edge_feats: Vec::new(),
        edge_segments: Vec::new(),
        messages: DirectedEdgeList::default(),
        node_offsets: Vec::new(),
        edge_row_offsets: Vec::new(),
        message_offsets: Vec::new(),
        graph_id_per_node: Vec::new(),
        collection_node_indices: Vec::new(),
    };
    let mut widths: (Option<usize>, Option<usize>) = (None, None);
    for (member, g) in members.into_iter().enumerate() {
        let (nw, ew) = g.widths();
        let clash = |a: Option<usize>, b: Option<usize>| matches!((a, b), (Some(x), Some(y)) if x != y);
        if clash(widths.0, nw) || clash(widths.1, ew) {
            return Err(GraphError::HeterogeneousWidths {
                member,
                expected: (widths.0.unwrap_or(0), widths.1.unwrap_or(0)),
                found: (nw.unwrap_or(0), ew.unwrap_or(0)),
            });
        }
        widths = (widths.0.or(nw), widths.1.or(ew));

        let node_base = out.node_feats.len();
        let row_base = out.edge_feats.len();
        out.node_offsets.push(node_base);
        out.edge_row_offsets.push(row_base);
        out.message_offsets.push(out.messages.len());
        out.node_feats.extend(g.node_feats.iter().cloned());
        out.node_segments.extend_from_slice(&g.node_segments);
        out.graph_id_per_node.extend(std::iter::repeat_n(member, g.num_nodes()));
        out.edge_feats.extend(g.edge_feats.iter().cloned());
        out.edge_segments.extend_from_slice(&g.edge_segments);
        for m in 0..g.messages.len() {
            out.messages.push(
                g.messages.sources[m] + node_base,
                g.messages.targets[m] + node_base,
                g.messages.edge_rows[m] + row_base,
            );
        }
        out.collection_node_indices.push(g.collection_node.map(|c| c + node_base));
    }
    if out.node_offsets.is_empty() {
        return Err(GraphError::EmptyBatch);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn cycle(n: usize) -> Graph {
        let mut edges: Vec<_> = (1..n).map(|i| Edge::new(i - 1, i, vec![0])).collect();
        edges.push(Edge::new(0, n - 1, vec![1]));
        Graph::new(vec![vec![0]; n], edges, None).unwrap()
    }

    #[test]
    fn two_triangles() {
        let t = MessageGraph::from_graph(&cycle(3), Segment::First);
        let b = disjoint_union([&t, &t]).unwrap();
        assert_eq!(b.num_nodes(), 6);
        assert_eq!(b.node_offsets, vec![0, 3]);
        assert_eq!(b.graph_id_per_node, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(b.messages.len(), 12);
        assert!(b.messages.sources[6..].iter().all(|&s| s >= 3));
    }

    #[test]
    fn singleton_is_identity() {
        let t = MessageGraph::from_graph(&cycle(4), Segment::First);
        let b = disjoint_union([&t]).unwrap();
        assert_eq!(b.node_offsets, vec![0]);
        assert_eq!(b.split(), vec![t]);
    }

    #[test]
    fn sizes_three_and_five() {
        let a = MessageGraph::from_graph(&cycle(3), Segment::First);
        let c = MessageGraph::from_graph(&cycle(5), Segment::First);
        let b = disjoint_union([&a, &c]).unwrap();
        assert_eq!(b.graph_id_per_node[4], 1);
        assert_eq!(b.member_nodes(1), 3..8);
    }

    #[test]
    fn rejects_heterogeneous_widths() {
        let a = MessageGraph::from_graph(&cycle(3), Segment::First);
        let mut wide = cycle(3);
        for f in &mut wide.node_feats {
            f.push(0);
        }
        let w = MessageGraph::from_graph(&wide, Segment::First);
        assert!(matches!(disjoint_union([&a, &w]), Err(GraphError::HeterogeneousWidths { member: 1, .. })));
        assert_eq!(disjoint_union(std::iter::empty()), Err(GraphError::EmptyBatch));
    }
}
