use thiserror::Error;

use crate::autodiff::{Parameter, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("optimizer state has {state} tensors, got {params} parameters")]
    Count { state: usize, params: usize },
    #[error("parameter {name} has shape {param:?}, optimizer state has {state:?}")]
    Shape { name: String, param: Vec<usize>, state: Vec<usize> },
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Applies one update from each parameter's `grad` buffer. Moments are
    /// created on the first call; afterwards they must line up with `params`.
    pub fn step<'a, I>(&mut self, params: I) -> Result<(), OptimError>
    where
        I: IntoIterator<Item = &'a mut Parameter>,
    {
        let params: Vec<&mut Parameter> = params.into_iter().collect();
        if self.m.is_empty() && self.step == 0 {
            self.m = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(OptimError::Count { state: self.m.len(), params: params.len() });
        }
        for (p, m) in params.iter().zip(&self.m) {
            if p.value.shape() != m.shape() {
                return Err(OptimError::Shape {
                    name: p.name.clone(),
                    param: p.value.shape().to_vec(),
                    state: m.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.data();
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, theta) in p.value.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *theta -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
