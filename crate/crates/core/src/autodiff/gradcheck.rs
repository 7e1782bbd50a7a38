use super::{Tape, Tensor, TensorError, Var};

/// Gradient magnitudes below this are compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub index: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn worst(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64, TensorError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, TensorError>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p)).collect();
    Ok(f(&tape, &vars)?.value().item())
}

/// Compares reverse-mode gradients of the scalar `f` with central
/// differences, one parameter entry at a time.
///
/// The relative error of an entry is `|a - n| / max(|a|, |n|, 1e-6)`.
/// `f` must be deterministic.
pub fn finite_difference_check<F>(
    f: F,
    params: &mut [Tensor],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport, TensorError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, TensorError>,
{
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p)).collect();
        let loss = f(&tape, &vars)?;
        let grads = tape.backward(loss)?;
        vars.iter().map(|v| grads.wrt(*v)).collect()
    };

    let mut report = GradCheckReport { params: Vec::with_capacity(params.len()), tolerance };
    for index in 0..params.len() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for j in 0..params[index].numel() {
            let original = params[index].data()[j];
            params[index].data_mut()[j] = original + step;
            let plus = evaluate(&f, params)?;
            params[index].data_mut()[j] = original - step;
            let minus = evaluate(&f, params)?;
            params[index].data_mut()[j] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[index].data()[j];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        report.params.push(ParamCheck {
            index,
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            passed: max_rel < tolerance,
        });
    }
    Ok(report)
}
