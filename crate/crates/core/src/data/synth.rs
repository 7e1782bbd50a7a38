//! Seeded synthetic graph families for tests and desk-scale runs.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};
use crate::graph::{Edge, Graph};
use crate::seed::derive_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    Cycle,
    Path,
    /// Node `i > 0` attaches to a uniformly chosen earlier node.
    RandomTree,
    /// Complete graph with each edge dropped with probability 0.2.
    NearComplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub structure: Structure,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Node labels are drawn uniformly from this set.
    pub node_labels: Vec<usize>,
    pub count: usize,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub families: Vec<FamilySpec>,
    /// When non-zero, every graph draws one tag in `0..graph_tags` that all
    /// of its nodes carry in a second feature slot.
    pub graph_tags: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// Cycles labelled from {0, 1} (class 0) and random trees labelled from
    /// {2, 3} (class 1), 8 to 16 nodes, with 4 graph tags.
    pub fn two_family(per_family: usize, seed: u64) -> Self {
        Self {
            families: vec![
                FamilySpec {
                    structure: Structure::Cycle,
                    min_nodes: 8,
                    max_nodes: 16,
                    node_labels: vec![0, 1],
                    count: per_family,
                    class: 0,
                },
                FamilySpec {
                    structure: Structure::RandomTree,
                    min_nodes: 8,
                    max_nodes: 16,
                    node_labels: vec![2, 3],
                    count: per_family,
                    class: 1,
                },
            ],
            graph_tags: 4,
            seed,
        }
    }

    /// One family of fixed-size graphs.
    pub fn single(structure: Structure, nodes: usize, count: usize, seed: u64) -> Self {
        Self {
            families: vec![FamilySpec {
                structure,
                min_nodes: nodes,
                max_nodes: nodes,
                node_labels: vec![0, 1],
                count,
                class: 0,
            }],
            graph_tags: 0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.families.is_empty() {
            return Err(DataError::Spec("no families".into()));
        }
        for (i, f) in self.families.iter().enumerate() {
            if f.count == 0 {
                return Err(DataError::Spec(format!("family {i}: count must be at least 1")));
            }
            if f.min_nodes < 2 || f.max_nodes < f.min_nodes {
                return Err(DataError::Spec(format!(
                    "family {i}: sizes {}..={} (need 2 <= min <= max)",
                    f.min_nodes, f.max_nodes
                )));
            }
            if f.structure == Structure::Cycle && f.min_nodes < 3 {
                return Err(DataError::Spec(format!("family {i}: cycles need at least 3 nodes")));
            }
            if f.node_labels.is_empty() {
                return Err(DataError::Spec(format!("family {i}: empty label set")));
            }
        }
        Ok(())
    }
}

fn structure_edges<R: Rng + ?Sized>(structure: Structure, n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    match structure {
        Structure::Path => (1..n).map(|i| (i - 1, i)).collect(),
        Structure::Cycle => {
            let mut e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
            e.push((0, n - 1));
            e
        }
        Structure::RandomTree => (1..n).map(|i| (rng.random_range(0..i), i)).collect(),
        Structure::NearComplete => {
            let mut e = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.random::<f64>() >= 0.2 {
                        e.push((u, v));
                    }
                }
            }
            e
        }
    }
}

/// Families are interleaved round-robin until each reaches its count.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let mut rng = derive_rng(spec.seed, "synth", &[]);
    let mut remaining: Vec<usize> = spec.families.iter().map(|f| f.count).collect();
    let mut graphs = Vec::with_capacity(remaining.iter().sum());
    while remaining.iter().any(|&r| r > 0) {
        for (fi, family) in spec.families.iter().enumerate() {
            if remaining[fi] == 0 {
                continue;
            }
            remaining[fi] -= 1;
            let n = rng.random_range(family.min_nodes..=family.max_nodes);
            let tag = (spec.graph_tags > 0).then(|| rng.random_range(0..spec.graph_tags));
            let node_feats = (0..n)
                .map(|_| {
                    let label = *family.node_labels.choose(&mut rng).expect("non-empty");
                    std::iter::once(label).chain(tag).collect()
                })
                .collect();
            let edges = structure_edges(family.structure, n, &mut rng)
                .into_iter()
                .map(|(u, v)| Edge::new(u, v, vec![0]))
                .collect();
            let g = Graph::new(node_feats, edges, Some(family.class))
                .map_err(|source| DataError::InvalidGraphIndex { index: graphs.len(), source })?;
            graphs.push(g);
        }
    }
    Ok(Dataset::new("synthetic", graphs))
}
