use crate::autodiff::{Tensor, TensorError, Var};

/// Probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-12;

/// Batch-mean binary cross-entropy `-[y ln p + (1 - y) ln(1 - p)]`.
pub fn bce_loss<'t>(p: Var<'t>, y: &[f64]) -> Result<Var<'t>, TensorError> {
    let tape = p.tape();
    let shape = p.shape();
    let y_t = tape.constant(Tensor::new(shape.clone(), y.to_vec())?);
    let not_y = tape.constant(Tensor::new(shape, y.iter().map(|v| 1.0 - v).collect())?);
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS)?;
    let log_p = p.ln()?;
    let log_not_p = p.scale(-1.0)?.add_scalar(1.0)?.ln()?;
    y_t.mul(log_p)?.add(not_y.mul(log_not_p)?)?.mean()?.scale(-1.0)
}

/// Plain-value form of [`bce_loss`].
pub fn bce_value(p: &[f64], y: &[f64]) -> f64 {
    let n = p.len() as f64;
    p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}
