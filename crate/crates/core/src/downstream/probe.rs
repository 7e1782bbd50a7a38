//! Linear probe: standardized features, L2-regularized multinomial logistic
//! regression, stratified k-fold with an inner split to pick `C`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, mean_std, stratified_kfold};
use super::EvalError;
use crate::seed::derive_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub folds: usize,
    /// Inverse regularization strengths; the penalty is `1 / (C n)`.
    pub grid: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { folds: 10, grid: (-3..=3).map(|e| 10f64.powi(e)).collect(), iterations: 300, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub folds: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    /// `C` picked for each fold.
    pub chosen: Vec<f64>,
}

impl EvalReport {
    pub fn from_folds(metric: &str, folds: Vec<f64>, chosen: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&folds);
        Self { metric: metric.to_string(), folds, mean, std, chosen }
    }
}

/// Multinomial logistic regression over standardized inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// `[d][classes]`, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub classes: usize,
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

impl LogisticModel {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    fn logits_std(&self, x: &[f64]) -> Vec<f64> {
        let c = self.classes;
        let mut z = self.b.clone();
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (k, zk) in z.iter_mut().enumerate() {
                    *zk += xj * self.w[j * c + k];
                }
            }
        }
        z
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.logits_std(&self.standardize(x));
        softmax_in_place(&mut z);
        z
    }

    /// Most probable class; ties go to the lower index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let z = self.logits_std(&self.standardize(x));
        let mut best = 0;
        for k in 1..z.len() {
            if z[k] > z[best] {
                best = k;
            }
        }
        best
    }
}

/// Largest eigenvalue of `A^T A / n` for `A = [X | 1]`, by power iteration.
fn curvature(x: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let d = x[0].len() + 1;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..50 {
        let mut next = vec![0.0; d];
        for row in x {
            let dot = row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d - 1];
            for (j, a) in row.iter().enumerate() {
                next[j] += a * dot;
            }
            next[d - 1] += dot;
        }
        let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / n as f64;
        v = next.into_iter().map(|a| a / norm).collect();
    }
    lambda
}

/// Accelerated gradient descent with a fixed iteration budget on
/// mean cross-entropy plus `(lambda / 2) ||W||^2`, `lambda = 1 / (C n)`.
pub fn fit_logistic(
    x: &[Vec<f64>],
    y: &[usize],
    classes: usize,
    c_inverse: f64,
    iterations: usize,
) -> Result<LogisticModel, EvalError> {
    if x.is_empty() {
        return Err(EvalError::Empty("training set".into()));
    }
    if y.len() != x.len() {
        return Err(EvalError::Length { what: "labels", expected: x.len(), found: y.len() });
    }
    if !(c_inverse > 0.0 && c_inverse.is_finite()) {
        return Err(EvalError::Config(format!("C must be positive, got {c_inverse}")));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(EvalError::Config("rows have different widths".into()));
    }
    let n = x.len();
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for row in x {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / nf);
    }
    let mut scale = vec![0.0; d];
    for row in x {
        scale.iter_mut().zip(row.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m) * (v - m) / nf);
    }
    let scale: Vec<f64> = scale.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
    let mut model = LogisticModel { mean, scale, w: vec![0.0; d * classes], b: vec![0.0; classes], classes };
    let xs: Vec<Vec<f64>> = x.iter().map(|r| model.standardize(r)).collect();
    let lambda = 1.0 / (c_inverse * nf);
    let step = 1.0 / (0.5 * curvature(&xs) * 1.01 + lambda);

    let (mut w_prev, mut b_prev) = (model.w.clone(), model.b.clone());
    let mut t = 1.0f64;
    let mut probe = model.clone();
    for _ in 0..iterations {
        let mut gw: Vec<f64> = probe.w.iter().map(|w| lambda * w).collect();
        let mut gb = vec![0.0; classes];
        for (row, &label) in xs.iter().zip(y) {
            let mut p = probe.logits_std(row);
            softmax_in_place(&mut p);
            p[label] -= 1.0;
            for (k, pk) in p.iter().enumerate() {
                gb[k] += pk / nf;
            }
            for (j, &xj) in row.iter().enumerate() {
                if xj != 0.0 {
                    for (k, pk) in p.iter().enumerate() {
                        gw[j * classes + k] += xj * pk / nf;
                    }
                }
            }
        }
        let w_next: Vec<f64> = probe.w.iter().zip(&gw).map(|(w, g)| w - step * g).collect();
        let b_next: Vec<f64> = probe.b.iter().zip(&gb).map(|(b, g)| b - step * g).collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / t_next;
        probe.w = w_next.iter().zip(&w_prev).map(|(a, b)| a + momentum * (a - b)).collect();
        probe.b = b_next.iter().zip(&b_prev).map(|(a, b)| a + momentum * (a - b)).collect();
        w_prev = w_next;
        b_prev = b_next;
        t = t_next;
    }
    model.w = w_prev;
    model.b = b_prev;
    Ok(model)
}

fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

/// Stratified 80/20 split of `members` for choosing `C`; each class keeps at
/// least one training member.
fn inner_split(labels: &[usize], members: &[usize], seed: u64, fold: usize) -> (Vec<usize>, Vec<usize>) {
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let (mut train, mut valid) = (Vec::new(), Vec::new());
    for class in 0..classes {
        let mut m: Vec<usize> = members.iter().copied().filter(|&i| labels[i] == class).collect();
        m.shuffle(&mut derive_rng(seed, "probe-inner", &[fold as u64, class as u64]));
        let take = ((m.len() as f64 * 0.2).round() as usize).min(m.len().saturating_sub(1));
        valid.extend_from_slice(&m[..take]);
        train.extend_from_slice(&m[take..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    (train, valid)
}

pub fn linear_probe(x: &[Vec<f64>], y: &[usize], config: &ProbeConfig) -> Result<EvalReport, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::Length { what: "labels", expected: x.len(), found: y.len() });
    }
    if config.grid.is_empty() {
        return Err(EvalError::Config("empty C grid".into()));
    }
    let classes = y.iter().max().map_or(0, |&m| m + 1);
    let present = (0..classes).filter(|c| y.contains(c)).count();
    if present < 2 {
        return Err(EvalError::SingleClass);
    }
    let folds = stratified_kfold(y, config.folds, config.seed)?;
    let (mut scores, mut chosen) = (Vec::new(), Vec::new());
    for (f, test) in folds.iter().enumerate() {
        let train: Vec<usize> = (0..x.len()).filter(|i| test.binary_search(i).is_err()).collect();
        let (inner_train, inner_valid) = inner_split(y, &train, config.seed, f);
        let mut best = (f64::NEG_INFINITY, config.grid[0]);
        if !inner_valid.is_empty() {
            let (xt, yt) = (pick(x, &inner_train), pick(y, &inner_train));
            let (xv, yv) = (pick(x, &inner_valid), pick(y, &inner_valid));
            for &c in &config.grid {
                let model = fit_logistic(&xt, &yt, classes, c, config.iterations)?;
                let pred: Vec<usize> = xv.iter().map(|r| model.predict(r)).collect();
                let acc = accuracy(&pred, &yv)?;
                if acc > best.0 {
                    best = (acc, c);
                }
            }
        }
        let model = fit_logistic(&pick(x, &train), &pick(y, &train), classes, best.1, config.iterations)?;
        let pred: Vec<usize> = test.iter().map(|&i| model.predict(&x[i])).collect();
        scores.push(accuracy(&pred, &pick(y, test))?);
        chosen.push(best.1);
    }
    Ok(EvalReport::from_folds("accuracy", scores, chosen))
}
