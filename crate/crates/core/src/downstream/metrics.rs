use std::cmp::Ordering;

use rand::seq::SliceRandom;

use super::EvalError;
use crate::seed::derive_rng;

/// Area under the ROC curve from midranks: the probability that a random
/// positive outscores a random negative, ties counting one half.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != positive.len() {
        return Err(EvalError::Length { what: "labels", expected: scores.len(), found: positive.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::NonFinite("score".into()));
    }
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // Twice the rank sum keeps midranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_midrank = (i + 1 + j + 1) as u128;
        for &k in &order[i..=j] {
            if positive[k] {
                twice_rank_sum += twice_midrank;
            }
        }
        i = j + 1;
    }
    let twice_u = twice_rank_sum - (pos as u128) * (pos as u128 + 1);
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::Length { what: "predictions", expected: truth.len(), found: predicted.len() });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty("accuracy input".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Splits positions `0..labels.len()` into `k` folds. Each class is shuffled
/// and dealt round-robin, with the dealing cursor carried from one class to
/// the next so total fold sizes also differ by at most one.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::Folds(format!("need at least 2 folds, got {k}")));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    if let Some((class, m)) = members.iter().enumerate().find(|(_, m)| !m.is_empty() && m.len() < k) {
        return Err(EvalError::Folds(format!("class {class} has {} members, fewer than {k} folds", m.len())));
    }
    let mut folds = vec![Vec::new(); k];
    let mut cursor = 0;
    for (class, mut m) in members.into_iter().enumerate() {
        m.shuffle(&mut derive_rng(seed, "kfold", &[class as u64]));
        for i in m {
            folds[cursor % k].push(i);
            cursor += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
