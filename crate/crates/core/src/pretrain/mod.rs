//! Pre-training on half-graph discrimination, with optional attribute
//! masking as a jointly weighted auxiliary loss.

mod adam;
mod checkpoint;
mod loss;
mod mask;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{Adam, OptimError};
pub use checkpoint::{write_atomic, Checkpoint, CheckpointError, OptimizerState, RngState, MAGIC, VERSION};
pub use loss::{bce_loss, bce_value, PROB_EPS};
pub use mask::{mask_attr_loss, mask_count, BoundMaskHead, MaskHead};

use crate::autodiff::{Parameter, Tape, TensorError};
use crate::data::Dataset;
use crate::gnn::{collection_embeddings, discriminate, forward, EncoderConfig, EncoderParams, ModelError, Readout};
use crate::graph::{disjoint_union, FeatureSchema, GraphError};
use crate::phd::{build_epoch, AssembledInstance, Direction, PhdError};
use crate::seed::derive_rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("no maskable nodes in batch")]
    NoMaskableNodes,
    #[error(transparent)]
    Phd(#[from] PhdError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub dim: usize,
    pub layers: usize,
    pub dropout: f64,
    pub direction: Direction,
    /// Weight of the masking loss; 0 disables it.
    pub mask_lambda: f64,
    pub mask_fraction: f64,
    pub shuffle: bool,
    /// Also checkpoint after every this many epochs when non-zero.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            lr: 0.001,
            seed: 0,
            dim: 64,
            layers: 3,
            dropout: 0.0,
            direction: Direction::Unidirectional,
            mask_lambda: 0.0,
            mask_fraction: 0.15,
            shuffle: true,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.mask_lambda >= 0.0 && self.mask_lambda.is_finite()) {
            return bad(format!("mask weight must be non-negative, got {}", self.mask_lambda));
        }
        if !(self.mask_fraction > 0.0 && self.mask_fraction < 1.0) {
            return bad(format!("mask fraction must lie in (0, 1), got {}", self.mask_fraction));
        }
        Ok(())
    }

    pub fn encoder_config(&self, schema: FeatureSchema) -> EncoderConfig {
        EncoderConfig {
            dim: self.dim,
            layers: self.layers,
            dropout: self.dropout,
            direction: self.direction,
            readout: Readout::Collection,
            schema,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: u64,
    pub loss: f64,
    pub pretext_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretextStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// Number of probabilities on the correct side of 0.5.
fn correct(probs: &[f64], labels: &[f64]) -> usize {
    probs.iter().zip(labels).filter(|(&p, &y)| (p >= 0.5) == (y == 1.0)).count()
}

/// Discriminator loss and accuracy in inference mode.
pub fn pretext_stats(
    params: &EncoderParams,
    config: &EncoderConfig,
    instances: &[AssembledInstance],
    batch_size: usize,
) -> Result<PretextStats, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut loss, mut hits) = (0.0, 0);
    for chunk in instances.chunks(batch_size.max(1)) {
        let batch = disjoint_union(chunk.iter().map(|i| &i.graph))?;
        let tape = Tape::new();
        let bound = params.bind(&tape);
        let h = forward(&batch, &bound, config, false, &mut rng)?;
        let p = discriminate(collection_embeddings(h, &batch)?, &bound)?.value();
        let y: Vec<f64> = chunk.iter().map(|i| f64::from(i.label)).collect();
        loss += bce_value(p.data(), &y) * chunk.len() as f64;
        hits += correct(p.data(), &y);
    }
    let n = instances.len().max(1) as f64;
    Ok(PretextStats { loss: loss / n, accuracy: hits as f64 / n })
}

pub struct Trainer {
    pub encoder: EncoderConfig,
    pub config: TrainConfig,
    pub params: EncoderParams,
    pub mask_head: Option<MaskHead>,
    pub optimizer: Adam,
    /// Completed epochs.
    pub epoch: u64,
    rng: ChaCha8Rng,
}

impl Trainer {
    /// Fresh parameters drawn from the config seed.
    pub fn new(config: TrainConfig, schema: FeatureSchema) -> Result<Self, TrainError> {
        config.validate()?;
        let encoder = config.encoder_config(schema);
        encoder.validate()?;
        let mut init = derive_rng(config.seed, "init", &[]);
        let params = EncoderParams::init(&encoder, &mut init);
        let mask_head = if config.mask_lambda > 0.0 {
            let vocab = encoder.schema.node_vocab.first().copied().unwrap_or(0);
            if vocab < 2 {
                return Err(TrainError::Config(format!(
                    "masking needs a slot-0 vocabulary of at least 2, found {vocab}"
                )));
            }
            Some(MaskHead::init(encoder.dim, vocab, &mut init))
        } else {
            None
        };
        Ok(Self {
            optimizer: Adam::new(config.lr),
            rng: derive_rng(config.seed, "train", &[]),
            encoder,
            config,
            params,
            mask_head,
            epoch: 0,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, TrainError> {
        ck.train.validate()?;
        let params = ck.encoder_params()?;
        let mask_head = match (ck.tensor("mask.w"), ck.tensor("mask.b")) {
            (Some(w), Some(b)) => {
                Some(MaskHead { w: Parameter::new("mask.w", w.clone()), b: Parameter::new("mask.b", b.clone()) })
            }
            _ => None,
        };
        if mask_head.is_none() && ck.train.mask_lambda > 0.0 {
            return Err(CheckpointError::Corrupt("masking enabled but head tensors missing".into()).into());
        }
        let mut optimizer = Adam::new(ck.train.lr);
        optimizer.step = ck.optimizer.step;
        optimizer.m = ck.optimizer.m.clone();
        optimizer.v = ck.optimizer.v.clone();
        Ok(Self {
            encoder: ck.encoder.clone(),
            config: ck.train.clone(),
            params,
            mask_head,
            optimizer,
            epoch: ck.epoch,
            rng: ck.rng.restore(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let tensors = self
            .params
            .iter()
            .chain(self.mask_head.iter().flat_map(MaskHead::iter))
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        Checkpoint {
            encoder: self.encoder.clone(),
            train: self.config.clone(),
            epoch: self.epoch,
            tensors,
            optimizer: OptimizerState {
                step: self.optimizer.step,
                m: self.optimizer.m.clone(),
                v: self.optimizer.v.clone(),
            },
            rng: RngState::capture(&self.rng),
        }
    }

    /// One optimizer step; returns the joint loss and the correct count.
    pub fn step(&mut self, instances: &[AssembledInstance]) -> Result<(f64, usize), TrainError> {
        let batch = disjoint_union(instances.iter().map(|i| &i.graph))?;
        let tape = Tape::new();
        let bound = self.params.bind(&tape);
        let h = forward(&batch, &bound, &self.encoder, true, &mut self.rng)?;
        let p = discriminate(collection_embeddings(h, &batch)?, &bound)?;
        let y: Vec<f64> = instances.iter().map(|i| f64::from(i.label)).collect();
        let hits = correct(p.value().data(), &y);
        let mut loss = bce_loss(p, &y)?;
        let head = self.mask_head.as_ref().map(|m| m.bind(&tape));
        if let Some(head) = &head {
            let aux =
                mask_attr_loss(&batch, &bound, head, &self.encoder, self.config.mask_fraction, true, &mut self.rng)?;
            loss = loss.add(aux.scale(self.config.mask_lambda)?)?;
        }
        let value = loss.value().item();
        let grads = tape.backward(loss)?;
        self.params.zero_grad();
        self.params.accumulate(&bound, &grads);
        if let (Some(m), Some(head)) = (self.mask_head.as_mut(), &head) {
            m.iter_mut().for_each(Parameter::zero_grad);
            m.accumulate(head, &grads);
        }
        let params = self.params.iter_mut().chain(self.mask_head.iter_mut().flat_map(MaskHead::iter_mut));
        self.optimizer.step(params)?;
        Ok((value, hits))
    }

    pub fn run_epoch(&mut self, dataset: &Dataset) -> Result<EpochLog, TrainError> {
        let instances =
            build_epoch(&dataset.graphs, self.config.seed, self.epoch, self.config.shuffle, self.config.direction)?;
        let (mut loss, mut hits) = (0.0, 0);
        for chunk in instances.chunks(self.config.batch_size) {
            let (l, h) = self.step(chunk)?;
            loss += l * chunk.len() as f64;
            hits += h;
        }
        self.epoch += 1;
        let n = instances.len() as f64;
        Ok(EpochLog { epoch: self.epoch, loss: loss / n, pretext_acc: hits as f64 / n })
    }

    /// Trains until `config.epochs` epochs are complete, calling `on_epoch`
    /// after each and checkpointing to `out` on the configured cadence and
    /// at the end.
    pub fn run(
        &mut self,
        dataset: &Dataset,
        out: Option<&Path>,
        mut on_epoch: impl FnMut(&EpochLog),
    ) -> Result<Vec<EpochLog>, TrainError> {
        if let Some(i) = dataset.graphs.iter().position(|g| !self.encoder.schema.covers(g)) {
            return Err(TrainError::Config(format!(
                "graph {i} does not fit the encoder vocabulary {:?}",
                self.encoder.schema
            )));
        }
        let mut logs = Vec::new();
        while self.epoch < self.config.epochs as u64 {
            let log = self.run_epoch(dataset)?;
            on_epoch(&log);
            logs.push(log);
            let every = self.config.checkpoint_every as u64;
            if let Some(path) = out {
                if every > 0 && self.epoch.is_multiple_of(every) && self.epoch < self.config.epochs as u64 {
                    self.checkpoint().save(path)?;
                }
            }
        }
        if let Some(path) = out {
            self.checkpoint().save(path)?;
        }
        Ok(logs)
    }
}

/// Full pre-training run from fresh parameters.
pub fn pretrain(
    dataset: &Dataset,
    config: &TrainConfig,
    out: Option<&Path>,
) -> Result<(Checkpoint, Vec<EpochLog>), TrainError> {
    if dataset.len() < 2 {
        return Err(PhdError::DatasetTooSmall(dataset.len()).into());
    }
    let mut trainer = Trainer::new(config.clone(), dataset.schema.clone())?;
    let logs = trainer.run(dataset, out, |_| {})?;
    Ok((trainer.checkpoint(), logs))
}
