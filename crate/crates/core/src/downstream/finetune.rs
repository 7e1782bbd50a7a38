//! Supervised fine-tuning with a linear head on the readout.

use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, roc_auc};
use super::EvalError;
use crate::autodiff::{Parameter, Tape, Tensor};
use crate::data::Dataset;
use crate::gnn::{forward, readout, xavier, EncoderConfig, EncoderParams, Readout};
use crate::graph::{disjoint_union, Graph};
use crate::phd::assemble_whole;
use crate::pretrain::{Adam, Checkpoint};
use crate::seed::derive_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Auc,
    Acc,
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auc" => Ok(Self::Auc),
            "acc" => Ok(Self::Acc),
            other => Err(format!("unknown metric {other:?} (expected auc or acc)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Lines of `<graph_index> <train|valid|test>`; every graph exactly once.
pub fn parse_split(text: &str, num_graphs: usize) -> Result<SplitAssignment, EvalError> {
    let bad = |line: usize, message: String| EvalError::SplitFile { line, message };
    let mut seen = vec![false; num_graphs];
    let mut split = SplitAssignment::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [index, part] = fields.as_slice() else {
            return Err(bad(line, format!("expected `<index> <part>`, found {raw:?}")));
        };
        let index: usize = index.parse().map_err(|_| bad(line, format!("bad graph index {index:?}")))?;
        if index >= num_graphs {
            return Err(bad(line, format!("graph index {index} out of range for {num_graphs} graphs")));
        }
        if std::mem::replace(&mut seen[index], true) {
            return Err(bad(line, format!("graph {index} assigned twice")));
        }
        match *part {
            "train" => split.train.push(index),
            "valid" => split.valid.push(index),
            "test" => split.test.push(index),
            other => return Err(bad(line, format!("unknown split {other:?}"))),
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(bad(0, format!("graph {missing} has no split")));
    }
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        if part.is_empty() {
            return Err(EvalError::Empty(format!("{name} split")));
        }
    }
    Ok(split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub lr: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub readout: Readout,
    /// Train the head only.
    pub freeze_encoder: bool,
    pub metric: Metric,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.001,
            dropout: 0.5,
            batch_size: 32,
            readout: Readout::Mean,
            freeze_encoder: false,
            metric: Metric::Auc,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub metric: Metric,
    /// 1-based epoch with the best validation score.
    pub best_epoch: usize,
    pub valid: f64,
    pub test: f64,
}

/// Model state at the best validation epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Finetuned {
    pub report: FinetuneReport,
    pub encoder: EncoderConfig,
    pub params: EncoderParams,
    pub head_w: Parameter,
    pub head_b: Parameter,
}

impl Finetuned {
    /// Class probabilities per graph, inference mode.
    pub fn probabilities(&self, graphs: &[Graph], mode: Readout) -> Result<Vec<Vec<f64>>, EvalError> {
        probabilities(graphs, &self.params, &self.encoder, &self.head_w, &self.head_b, mode)
    }
}

fn probabilities(
    graphs: &[Graph],
    params: &EncoderParams,
    config: &EncoderConfig,
    w: &Parameter,
    b: &Parameter,
    mode: Readout,
) -> Result<Vec<Vec<f64>>, EvalError> {
    let mut rng = derive_rng(0, "inference", &[]);
    let mut out = Vec::with_capacity(graphs.len());
    for chunk in graphs.chunks(64) {
        let instances: Vec<_> = chunk.iter().map(|g| assemble_whole(g, config.direction)).collect();
        let batch = disjoint_union(instances.iter().map(|i| &i.graph))?;
        let tape = Tape::new();
        let bound = params.bind(&tape);
        let h = forward(&batch, &bound, config, false, &mut rng)?;
        let z = readout(h, &batch, mode)?.matmul(tape.constant(w.value.clone()))?;
        let z = z.add_row(tape.constant(b.value.clone()))?.value();
        for mut row in z.to_rows() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|v| *v = (*v - max).exp());
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            out.push(row);
        }
    }
    Ok(out)
}

fn score(metric: Metric, probs: &[Vec<f64>], labels: &[usize]) -> Result<f64, EvalError> {
    match metric {
        Metric::Auc => {
            if probs.first().is_some_and(|p| p.len() != 2) {
                return Err(EvalError::Config("ROC-AUC needs exactly two classes".into()));
            }
            let s: Vec<f64> = probs.iter().map(|p| p[1]).collect();
            let pos: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
            roc_auc(&s, &pos)
        }
        Metric::Acc => {
            let pred: Vec<usize> =
                probs.iter().map(|p| (0..p.len()).fold(0, |best, k| if p[k] > p[best] { k } else { best })).collect();
            accuracy(&pred, labels)
        }
    }
}

pub fn finetune(
    dataset: &Dataset,
    checkpoint: &Checkpoint,
    split: &SplitAssignment,
    config: &FinetuneConfig,
) -> Result<Finetuned, EvalError> {
    let params = checkpoint.encoder_params()?;
    finetune_params(dataset, params, &checkpoint.encoder, split, config)
}

/// Fine-tunes from explicit encoder parameters.
pub fn finetune_params(
    dataset: &Dataset,
    mut params: EncoderParams,
    encoder: &EncoderConfig,
    split: &SplitAssignment,
    config: &FinetuneConfig,
) -> Result<Finetuned, EvalError> {
    let labels = dataset.labels().ok_or(EvalError::Unlabeled)?;
    let classes = dataset.num_classes();
    if classes < 2 {
        return Err(EvalError::SingleClass);
    }
    if config.epochs == 0 || config.batch_size == 0 || !config.lr.is_finite() || config.lr <= 0.0 {
        return Err(EvalError::Config("epochs, batch size and learning rate must be positive".into()));
    }
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        if part.is_empty() {
            return Err(EvalError::Empty(format!("{name} split")));
        }
        if let Some(&i) = part.iter().find(|&&i| i >= dataset.len()) {
            return Err(EvalError::Config(format!("split index {i} out of range")));
        }
    }
    if let Some(i) = dataset.graphs.iter().position(|g| !encoder.schema.covers(g)) {
        return Err(EvalError::Vocabulary { graph: i });
    }
    let encoder = EncoderConfig { dropout: config.dropout, ..encoder.clone() };
    encoder.validate()?;

    let mut init = derive_rng(config.seed, "finetune-head", &[]);
    let mut head_w = Parameter::new("head.w", xavier(&mut init, encoder.dim, classes));
    let mut head_b = Parameter::new("head.b", Tensor::zeros(&[classes]));
    let mut rng = derive_rng(config.seed, "finetune", &[]);
    let mut encoder_opt = Adam::new(config.lr);
    let mut head_opt = Adam::new(config.lr);
    let subset = |idx: &[usize]| -> (Vec<Graph>, Vec<usize>) {
        (idx.iter().map(|&i| dataset.graphs[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect())
    };
    let (valid_graphs, valid_labels) = subset(&split.valid);
    let (test_graphs, test_labels) = subset(&split.test);

    let mut best: Option<Finetuned> = None;
    for epoch in 0..config.epochs {
        let mut order = split.train.clone();
        order.shuffle(&mut derive_rng(config.seed, "finetune-shuffle", &[epoch as u64]));
        for chunk in order.chunks(config.batch_size) {
            let instances: Vec<_> =
                chunk.iter().map(|&i| assemble_whole(&dataset.graphs[i], encoder.direction)).collect();
            let batch = disjoint_union(instances.iter().map(|i| &i.graph))?;
            let targets: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let tape = Tape::new();
            let bound = params.bind(&tape);
            let (w, b) = (tape.param(&head_w.value), tape.param(&head_b.value));
            let h = forward(&batch, &bound, &encoder, true, &mut rng)?;
            let loss = readout(h, &batch, config.readout)?.matmul(w)?.add_row(b)?.softmax_cross_entropy(&targets)?;
            let grads = tape.backward(loss)?;
            head_w.zero_grad();
            head_b.zero_grad();
            grads.accumulate(w, &mut head_w.grad);
            grads.accumulate(b, &mut head_b.grad);
            head_opt.step([&mut head_w, &mut head_b])?;
            if !config.freeze_encoder {
                params.zero_grad();
                params.accumulate(&bound, &grads);
                encoder_opt.step(params.iter_mut())?;
            }
        }
        let valid_probs = probabilities(&valid_graphs, &params, &encoder, &head_w, &head_b, config.readout)?;
        let valid = score(config.metric, &valid_probs, &valid_labels)?;
        if best.as_ref().is_none_or(|b| valid > b.report.valid) {
            let test_probs = probabilities(&test_graphs, &params, &encoder, &head_w, &head_b, config.readout)?;
            let test = score(config.metric, &test_probs, &test_labels)?;
            best = Some(Finetuned {
                report: FinetuneReport { metric: config.metric, best_epoch: epoch + 1, valid, test },
                encoder: encoder.clone(),
                params: params.clone(),
                head_w: head_w.clone(),
                head_b: head_b.clone(),
            });
        }
    }
    Ok(best.expect("at least one epoch"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_file_parsing() {
        let s = parse_split("0 train\n1 valid\n\n2 test\n3 train\n", 4).unwrap();
        assert_eq!(s.train, vec![0, 3]);
        assert_eq!(s.valid, vec![1]);
        assert_eq!(s.test, vec![2]);
        assert!(parse_split("0 train\n1 valid\n", 3).is_err());
        assert!(parse_split("0 train\n0 valid\n1 test\n", 2).is_err());
        assert!(parse_split("0 train\n1 train\n2 test\n", 3).is_err());
        assert!(parse_split("0 holdout\n", 1).is_err());
    }

    #[test]
    fn metric_names() {
        assert_eq!("auc".parse::<Metric>().unwrap(), Metric::Auc);
        assert!("f1".parse::<Metric>().is_err());
    }
}
