//! Input representation and the message-passing encoder.
//!
//! Node inputs are the sum of one embedding per categorical feature slot
//! and a segment embedding; the collection node uses a learned token in
//! place of features. Each layer is GIN-style:
//!
//! ```text
//! m_i  = sum_{j -> i} (h_j + e_ji)
//! h'_i = relu(W2 relu(W1 (h_i + m_i) + b1) + b2), then dropout
//! ```

use std::rc::Rc;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Gradients, Parameter, Tape, Tensor, TensorError, Var};
use crate::graph::{BatchGraph, FeatureSchema, Segment};
use crate::phd::Direction;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("feature index {index} in slot {slot} exceeds vocabulary {vocab}")]
    Vocabulary { slot: usize, index: usize, vocab: usize },
    #[error("node has {found} feature slots, encoder expects {expected}")]
    Width { expected: usize, found: usize },
    #[error("batch member {0} has no collection node")]
    NoCollectionNode(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    /// Final embedding of the collection node.
    Collection,
    /// Mean over real nodes; the collection node is excluded.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub dim: usize,
    pub layers: usize,
    pub dropout: f64,
    pub direction: Direction,
    pub readout: Readout,
    /// Observed vocabularies; each table gets one extra reserved row.
    pub schema: FeatureSchema,
}

impl EncoderConfig {
    /// Desk-scale defaults: width 64, 3 layers, no dropout.
    pub fn desk(schema: FeatureSchema) -> Self {
        Self {
            dim: 64,
            layers: 3,
            dropout: 0.0,
            direction: Direction::Unidirectional,
            readout: Readout::Collection,
            schema,
        }
    }

    /// Reference-scale defaults: width 300, 5 layers.
    pub fn reference_scale(schema: FeatureSchema) -> Self {
        Self { dim: 300, layers: 5, ..Self::desk(schema) }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dim == 0 {
            return Err(ModelError::Config("dim must be at least 1".into()));
        }
        if self.layers == 0 {
            return Err(ModelError::Config("layers must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Reserved row of node slot `slot`, used as the mask token.
    pub fn mask_token(&self, slot: usize) -> usize {
        self.schema.node_vocab[slot]
    }
}

/// `uniform(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
    let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape")
}

/// Entries drawn from `normal(0, std)`.
pub fn normal<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("valid std");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect()).expect("shape")
}

pub const EMBEDDING_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w1: Parameter,
    pub b1: Parameter,
    pub w2: Parameter,
    pub b2: Parameter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub node_tables: Vec<Parameter>,
    pub edge_tables: Vec<Parameter>,
    pub node_segment: Parameter,
    pub edge_segment: Parameter,
    pub collection_token: Parameter,
    pub layers: Vec<LayerParams>,
    pub disc_w: Parameter,
    pub disc_b: Parameter,
}

impl EncoderParams {
    /// Draws a fresh parameter set; draw order follows [`Self::iter`].
    pub fn init<R: Rng + ?Sized>(config: &EncoderConfig, rng: &mut R) -> Self {
        let d = config.dim;
        let node_tables = config
            .schema
            .node_vocab
            .iter()
            .enumerate()
            .map(|(s, v)| Parameter::new(format!("node_emb.{s}"), normal(rng, &[v + 1, d], EMBEDDING_STD)))
            .collect();
        let edge_tables = config
            .schema
            .edge_vocab
            .iter()
            .enumerate()
            .map(|(s, v)| Parameter::new(format!("edge_emb.{s}"), normal(rng, &[v + 1, d], EMBEDDING_STD)))
            .collect();
        let node_segment = Parameter::new("node_segment", normal(rng, &[3, d], EMBEDDING_STD));
        let edge_segment = Parameter::new("edge_segment", normal(rng, &[3, d], EMBEDDING_STD));
        let collection_token = Parameter::new("collection_token", normal(rng, &[1, d], EMBEDDING_STD));
        let layers = (0..config.layers)
            .map(|k| LayerParams {
                w1: Parameter::new(format!("layer.{k}.w1"), xavier(rng, d, d)),
                b1: Parameter::new(format!("layer.{k}.b1"), Tensor::zeros(&[d])),
                w2: Parameter::new(format!("layer.{k}.w2"), xavier(rng, d, d)),
                b2: Parameter::new(format!("layer.{k}.b2"), Tensor::zeros(&[d])),
            })
            .collect();
        let disc_w = Parameter::new("disc.w", xavier(rng, d, 1));
        let disc_b = Parameter::new("disc.b", Tensor::zeros(&[1]));
        Self { node_tables, edge_tables, node_segment, edge_segment, collection_token, layers, disc_w, disc_b }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.node_tables
            .iter()
            .chain(&self.edge_tables)
            .chain([&self.node_segment, &self.edge_segment, &self.collection_token])
            .chain(self.layers.iter().flat_map(|l| [&l.w1, &l.b1, &l.w2, &l.b2]))
            .chain([&self.disc_w, &self.disc_b])
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.node_tables
            .iter_mut()
            .chain(self.edge_tables.iter_mut())
            .chain([&mut self.node_segment, &mut self.edge_segment, &mut self.collection_token])
            .chain(self.layers.iter_mut().flat_map(|l| [&mut l.w1, &mut l.b1, &mut l.w2, &mut l.b2]))
            .chain([&mut self.disc_w, &mut self.disc_b])
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundEncoder<'t> {
        let vars: Vec<Var<'t>> = self.iter().map(|p| tape.param(&p.value)).collect();
        BoundEncoder::from_vars(self, &vars)
    }

    /// Adds the gradients of a bound copy into each parameter's buffer.
    pub fn accumulate(&mut self, bound: &BoundEncoder<'_>, grads: &Gradients) {
        for (p, v) in self.iter_mut().zip(bound.vars()) {
            grads.accumulate(v, &mut p.grad);
        }
    }

    pub fn zero_grad(&mut self) {
        self.iter_mut().for_each(Parameter::zero_grad);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLayer<'t> {
    pub w1: Var<'t>,
    pub b1: Var<'t>,
    pub w2: Var<'t>,
    pub b2: Var<'t>,
}

/// Encoder parameters recorded on a tape.
#[derive(Debug, Clone)]
pub struct BoundEncoder<'t> {
    pub node_tables: Vec<Var<'t>>,
    pub edge_tables: Vec<Var<'t>>,
    pub node_segment: Var<'t>,
    pub edge_segment: Var<'t>,
    pub collection_token: Var<'t>,
    pub layers: Vec<BoundLayer<'t>>,
    pub disc_w: Var<'t>,
    pub disc_b: Var<'t>,
}

impl<'t> BoundEncoder<'t> {
    /// Rebuilds the structure of `template` from variables listed in
    /// [`EncoderParams::iter`] order.
    ///
    /// # Panics
    /// If `vars` is shorter than the template's parameter count.
    pub fn from_vars(template: &EncoderParams, vars: &[Var<'t>]) -> Self {
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("one variable per parameter");
        let node_tables = template.node_tables.iter().map(|_| next()).collect();
        let edge_tables = template.edge_tables.iter().map(|_| next()).collect();
        let (node_segment, edge_segment, collection_token) = (next(), next(), next());
        let layers =
            template.layers.iter().map(|_| BoundLayer { w1: next(), b1: next(), w2: next(), b2: next() }).collect();
        let (disc_w, disc_b) = (next(), next());
        Self { node_tables, edge_tables, node_segment, edge_segment, collection_token, layers, disc_w, disc_b }
    }

    /// Same order as [`EncoderParams::iter`].
    pub fn vars(&self) -> Vec<Var<'t>> {
        let mut out: Vec<Var<'t>> = self.node_tables.clone();
        out.extend(&self.edge_tables);
        out.extend([self.node_segment, self.edge_segment, self.collection_token]);
        for l in &self.layers {
            out.extend([l.w1, l.b1, l.w2, l.b2]);
        }
        out.extend([self.disc_w, self.disc_b]);
        out
    }
}

fn table_rows(t: Var<'_>) -> usize {
    t.shape()[0]
}

/// Sum over slots of `table[slot][feats[slot]]`, scattered to `positions`
/// of an `[n, d]` output.
fn scatter_features<'t>(
    tables: &[Var<'t>],
    feats: &[&[usize]],
    positions: &Rc<[usize]>,
    n: usize,
    acc: Var<'t>,
) -> Result<Var<'t>, ModelError> {
    let mut acc = acc;
    for (slot, table) in tables.iter().enumerate() {
        let vocab = table_rows(*table);
        let mut idx = Vec::with_capacity(feats.len());
        for f in feats {
            if f.len() != tables.len() {
                return Err(ModelError::Width { expected: tables.len(), found: f.len() });
            }
            if f[slot] >= vocab {
                return Err(ModelError::Vocabulary { slot, index: f[slot], vocab });
            }
            idx.push(f[slot]);
        }
        let scattered = table.gather_rows(idx)?.segment_sum(positions.clone(), n)?;
        acc = acc.add(scattered)?;
    }
    Ok(acc)
}

/// Input node states `[N, d]` and per-message edge vectors `[M, d]`.
pub fn embed_inputs<'t>(batch: &BatchGraph, p: &BoundEncoder<'t>) -> Result<(Var<'t>, Var<'t>), ModelError> {
    let n = batch.num_nodes();
    let (mut real, mut collection) = (Vec::new(), Vec::new());
    for i in 0..n {
        if batch.is_collection(i) {
            collection.push(i)
        } else {
            real.push(i)
        }
    }
    let real: Rc<[usize]> = real.into();
    let node_seg: Vec<usize> = batch.node_segments.iter().map(|s| s.index()).collect();
    let h = p.node_segment.gather_rows(node_seg)?;
    let feats: Vec<&[usize]> = real.iter().map(|&i| batch.node_feats[i].as_slice()).collect();
    let h = scatter_features(&p.node_tables, &feats, &real, n, h)?;
    let tokens = p.collection_token.gather_rows(vec![0; collection.len()])?.segment_sum(collection, n)?;
    let h = h.add(tokens)?;

    let rows = batch.edge_feats.len();
    let real_rows: Vec<usize> = (0..rows).filter(|&r| batch.edge_segments[r] != Segment::Virtual).collect();
    let real_rows: Rc<[usize]> = real_rows.into();
    let edge_seg: Vec<usize> = batch.edge_segments.iter().map(|s| s.index()).collect();
    let e = p.edge_segment.gather_rows(edge_seg)?;
    let efeats: Vec<&[usize]> = real_rows.iter().map(|&r| batch.edge_feats[r].as_slice()).collect();
    let e = scatter_features(&p.edge_tables, &efeats, &real_rows, rows, e)?;
    let e = e.gather_rows(batch.messages.edge_rows.clone())?;
    Ok((h, e))
}

/// One round of sum aggregation followed by the two-layer update.
pub fn mp_layer<'t, R: Rng + ?Sized>(
    h: Var<'t>,
    batch: &BatchGraph,
    e: Var<'t>,
    layer: &BoundLayer<'t>,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var<'t>, ModelError> {
    let n = h.shape()[0];
    let messages = h.gather_rows(batch.messages.sources.clone())?.add(e)?;
    let m = messages.segment_sum(batch.messages.targets.clone(), n)?;
    let x = h.add(m)?;
    let z = x.matmul(layer.w1)?.add_row(layer.b1)?.relu()?.matmul(layer.w2)?.add_row(layer.b2)?;
    Ok(z.relu()?.dropout(dropout, rng, training)?)
}

/// Final node states `[N, d]` after every layer.
pub fn forward<'t, R: Rng + ?Sized>(
    batch: &BatchGraph,
    p: &BoundEncoder<'t>,
    config: &EncoderConfig,
    training: bool,
    rng: &mut R,
) -> Result<Var<'t>, ModelError> {
    let (mut h, e) = embed_inputs(batch, p)?;
    for layer in &p.layers {
        h = mp_layer(h, batch, e, layer, config.dropout, training, rng)?;
    }
    Ok(h)
}

/// Rows of the collection nodes, one per member.
pub fn collection_embeddings<'t>(h: Var<'t>, batch: &BatchGraph) -> Result<Var<'t>, ModelError> {
    let idx = batch
        .collection_node_indices
        .iter()
        .enumerate()
        .map(|(i, c)| c.ok_or(ModelError::NoCollectionNode(i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(h.gather_rows(idx)?)
}

/// Same-source probabilities `[k]` from collection embeddings `[k, d]`.
pub fn discriminate<'t>(hc: Var<'t>, p: &BoundEncoder<'t>) -> Result<Var<'t>, ModelError> {
    let k = hc.shape()[0];
    Ok(hc.matmul(p.disc_w)?.add_row(p.disc_b)?.sigmoid()?.reshape(&[k])?)
}

/// One `d`-vector per batch member.
pub fn readout<'t>(h: Var<'t>, batch: &BatchGraph, mode: Readout) -> Result<Var<'t>, ModelError> {
    match mode {
        Readout::Collection => collection_embeddings(h, batch),
        Readout::Mean => {
            let k = batch.num_graphs();
            let real: Vec<usize> = (0..batch.num_nodes()).filter(|&i| !batch.is_collection(i)).collect();
            let ids: Vec<usize> = real.iter().map(|&i| batch.graph_id_per_node[i]).collect();
            let mut counts = vec![0usize; k];
            ids.iter().for_each(|&g| counts[g] += 1);
            let factors = counts.iter().map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 }).collect();
            Ok(h.gather_rows(real)?.segment_sum(ids, k)?.scale_rows(factors)?)
        }
    }
}
