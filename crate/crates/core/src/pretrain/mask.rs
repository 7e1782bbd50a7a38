//! Attribute masking: hide slot 0 of some real nodes and predict it back.

use rand::Rng;

use super::TrainError;
use crate::autodiff::{Gradients, Parameter, Tape, Tensor, Var};
use crate::gnn::{forward, xavier, BoundEncoder, EncoderConfig};
use crate::graph::BatchGraph;

/// Nodes masked out of `n`: nearest integer to `fraction * n`, at least one.
pub fn mask_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n.max(1))
}

/// Linear classifier from a node's final state to its slot-0 index.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskHead {
    pub w: Parameter,
    pub b: Parameter,
}

impl MaskHead {
    pub fn init<R: Rng + ?Sized>(dim: usize, classes: usize, rng: &mut R) -> Self {
        Self {
            w: Parameter::new("mask.w", xavier(rng, dim, classes)),
            b: Parameter::new("mask.b", Tensor::zeros(&[classes])),
        }
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundMaskHead<'t> {
        BoundMaskHead { w: tape.param(&self.w.value), b: tape.param(&self.b.value) }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        [&self.w, &self.b].into_iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        [&mut self.w, &mut self.b].into_iter()
    }

    pub fn accumulate(&mut self, bound: &BoundMaskHead<'_>, grads: &Gradients) {
        grads.accumulate(bound.w, &mut self.w.grad);
        grads.accumulate(bound.b, &mut self.b.grad);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundMaskHead<'t> {
    pub w: Var<'t>,
    pub b: Var<'t>,
}

/// Mean softmax cross-entropy of the head over the masked nodes.
///
/// Runs a separate forward pass on a copy of `batch` whose chosen nodes
/// carry the reserved mask token in slot 0.
#[allow(clippy::too_many_arguments)]
pub fn mask_attr_loss<'t, R: Rng + ?Sized>(
    batch: &BatchGraph,
    encoder: &BoundEncoder<'t>,
    head: &BoundMaskHead<'t>,
    config: &EncoderConfig,
    fraction: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var<'t>, TrainError> {
    let vocab = config.schema.node_vocab.first().copied().unwrap_or(0);
    if vocab < 2 {
        return Err(TrainError::Config(format!("masking needs a slot-0 vocabulary of at least 2, found {vocab}")));
    }
    let real: Vec<usize> = (0..batch.num_nodes()).filter(|&i| !batch.is_collection(i)).collect();
    if real.is_empty() {
        return Err(TrainError::NoMaskableNodes);
    }
    let count = mask_count(fraction, real.len());
    let chosen: Vec<usize> = rand::seq::index::sample(rng, real.len(), count).into_iter().map(|k| real[k]).collect();
    let mut masked = batch.clone();
    let targets: Vec<usize> = chosen.iter().map(|&i| batch.node_feats[i][0]).collect();
    let token = config.mask_token(0);
    for &i in &chosen {
        masked.node_feats[i][0] = token;
    }
    let h = forward(&masked, encoder, config, training, rng)?;
    let logits = h.gather_rows(chosen)?.matmul(head.w)?.add_row(head.b)?;
    Ok(logits.softmax_cross_entropy(&targets)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_rule() {
        assert_eq!(mask_count(0.15, 100), 15);
        assert_eq!(mask_count(0.15, 3), 1);
        assert_eq!(mask_count(0.5, 5), 3);
        assert_eq!(mask_count(0.99, 4), 4);
    }
}
