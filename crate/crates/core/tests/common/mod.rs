#![allow(dead_code)]

use phd_core::graph::{Edge, Graph, MessageGraph};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

/// Graphs on `2..=max_nodes` nodes with one node slot (vocab 3) and one
/// edge slot (vocab 2).
pub fn arb_graph(max_nodes: usize) -> impl Strategy<Value = Graph> {
    (2..=max_nodes).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        (
            proptest::collection::vec(0..3usize, n),
            proptest::collection::vec(any::<bool>(), pairs),
            proptest::collection::vec(0..2usize, pairs),
            any::<Option<u8>>(),
        )
            .prop_map(move |(labels, present, edge_labels, class)| {
                let mut edges = Vec::new();
                let mut k = 0;
                for u in 0..n {
                    for v in u + 1..n {
                        if present[k] {
                            edges.push(Edge::new(u, v, vec![edge_labels[k]]));
                        }
                        k += 1;
                    }
                }
                edges.reverse();
                let feats = labels.into_iter().map(|l| vec![l]).collect();
                Graph::new(feats, edges, class.map(|c| usize::from(c % 2))).unwrap()
            })
    })
}

/// Erdos-Renyi graph with uniform categorical labels.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, p: f64, node_vocab: usize, edge_vocab: usize) -> Graph {
    let feats = (0..n).map(|_| vec![rng.random_range(0..node_vocab)]).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push(Edge::new(u, v, vec![rng.random_range(0..edge_vocab)]));
            }
        }
    }
    Graph::new(feats, edges, Some(rng.random_range(0..2))).unwrap()
}

pub type Features = Vec<Vec<usize>>;
pub type LocalEdges = Vec<(usize, usize, Vec<usize>)>;

/// Brute-force split: dense adjacency, then keep pairs on the same side.
#[allow(clippy::needless_range_loop)]
pub fn oracle_split(g: &Graph, b: usize) -> (Features, LocalEdges, Features, LocalEdges) {
    let n = g.num_nodes;
    let mut adj: Vec<Vec<Option<Vec<usize>>>> = vec![vec![None; n]; n];
    for e in &g.edges {
        adj[e.u][e.v] = Some(e.feats.clone());
        adj[e.v][e.u] = Some(e.feats.clone());
    }
    let side = |lo: usize, hi: usize| {
        let mut edges = Vec::new();
        for i in lo..hi {
            for j in i + 1..hi {
                if let Some(f) = &adj[i][j] {
                    edges.push((i - lo, j - lo, f.clone()));
                }
            }
        }
        edges
    };
    (g.node_feats[..b].to_vec(), side(0, b), g.node_feats[b..].to_vec(), side(b, n))
}

pub fn sorted_edges(g: &Graph) -> Vec<(usize, usize, Vec<usize>)> {
    let mut e: Vec<_> = g.edges.iter().map(|e| (e.u, e.v, e.feats.clone())).collect();
    e.sort();
    e
}

/// Relabels the real nodes of `g` by `perm` (old index -> new index) and
/// shuffles the message order; the collection node keeps its index.
pub fn permute_real_nodes<R: Rng>(g: &MessageGraph, perm: &[usize], rng: &mut R) -> MessageGraph {
    let n = g.num_nodes();
    let map = |i: usize| if Some(i) == g.collection_node { i } else { perm[i] };
    let mut out = g.clone();
    for i in 0..n {
        let j = map(i);
        out.node_feats[j] = g.node_feats[i].clone();
        out.node_segments[j] = g.node_segments[i];
    }
    let mut order: Vec<usize> = (0..g.messages.len()).collect();
    order.shuffle(rng);
    out.messages = Default::default();
    for m in order {
        out.messages.push(map(g.messages.sources[m]), map(g.messages.targets[m]), g.messages.edge_rows[m]);
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
