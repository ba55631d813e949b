//! Central finite-difference gradient checking.

use crate::backward::backward;
use crate::tensor::{no_grad, Tensor};
use crate::AutodiffError;

/// Outcome of comparing analytic and numerical gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Per input: `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)`
    /// (zero when both vanish).
    pub relative_errors: Vec<f64>,
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Numerical gradient of the scalar function `f` at `inputs`, by central
/// differences with the given step.
pub fn numeric_gradient(
    f: &dyn Fn(&[Tensor]) -> Result<Tensor, AutodiffError>,
    inputs: &[Tensor],
    step: f64,
) -> Result<Vec<Vec<f64>>, AutodiffError> {
    no_grad(|| {
        let mut out = Vec::with_capacity(inputs.len());
        for k in 0..inputs.len() {
            let mut grad = vec![0.0; inputs[k].numel()];
            for (i, g) in grad.iter_mut().enumerate() {
                let eval = |delta: f64| -> Result<f64, AutodiffError> {
                    let mut vals = inputs[k].to_vec();
                    vals[i] += delta;
                    let mut shifted = inputs.to_vec();
                    shifted[k] = Tensor::new(vals, inputs[k].shape());
                    Ok(f(&shifted)?.item())
                };
                *g = (eval(step)? - eval(-step)?) / (2.0 * step);
            }
            out.push(grad);
        }
        Ok(out)
    })
}

/// Compares reverse-mode gradients of `f` with central finite differences.
pub fn check_gradients(
    f: &dyn Fn(&[Tensor]) -> Result<Tensor, AutodiffError>,
    inputs: &[Vec<f64>],
    shapes: &[&[usize]],
    step: f64,
) -> Result<GradCheck, AutodiffError> {
    let leaves: Vec<Tensor> = inputs.iter().zip(shapes).map(|(v, s)| Tensor::param(v.clone(), s)).collect();
    let loss = f(&leaves)?;
    let refs: Vec<&Tensor> = leaves.iter().collect();
    let analytic: Vec<Vec<f64>> = backward(&loss, &refs, false)?.into_iter().map(|g| g.to_vec()).collect();
    let constants: Vec<Tensor> = leaves.iter().map(Tensor::detach).collect();
    let numeric = numeric_gradient(f, &constants, step)?;
    let relative_errors = analytic.iter().zip(&numeric).map(|(a, n)| relative_error(a, n)).collect();
    Ok(GradCheck {
        relative_errors,
        analytic,
        numeric,
    })
}
