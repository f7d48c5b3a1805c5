//! Central finite-difference verification of tape gradients.

use super::{Element, Tape, Tensor};
use crate::error::{Error, Result};

/// Relative error with the convention `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares the tape gradient of a scalar-valued function against central
/// finite differences, element by element, over every provided input.
/// Returns the worst relative error.
///
/// `f` must be a pure function of its inputs: it is re-evaluated with
/// perturbed, detached copies.
pub fn finite_diff_check<E, F>(f: F, inputs: &[Tensor<E>], eps: f64) -> Result<f64>
where
    E: Element,
    F: Fn(&[Tensor<E>]) -> Result<Tensor<E>>,
{
    if eps <= 0.0 {
        return Err(Error::domain("finite_diff_check: eps must be positive"));
    }

    // Analytic pass.
    let tape = Tape::new();
    let leaves: Vec<Tensor<E>> = inputs
        .iter()
        .map(|t| Tensor::leaf(&tape, t.shape(), t.values().to_vec(), true))
        .collect::<Result<_>>()?;
    let loss = f(&leaves)?;
    if loss.numel() != 1 {
        return Err(Error::contract(
            "finite_diff_check requires a scalar-valued function",
        ));
    }
    tape.backward(&loss)?;
    let analytic: Vec<Vec<E>> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| vec![E::ZERO; l.numel()]))
        .collect();

    // Numeric pass: central differences, evaluated without recording.
    let eval = |probe: &[Tensor<E>]| -> Result<f64> {
        let out = f(probe)?;
        Ok(out.item()?.to_f64())
    };

    let mut worst: f64 = 0.0;
    for (k, template) in inputs.iter().enumerate() {
        for e in 0..template.numel() {
            let mut probe: Vec<Tensor<E>> = inputs.iter().map(|t| t.detach()).collect();
            let mut plus = template.values().to_vec();
            plus[e] += E::from_f64(eps);
            probe[k] = Tensor::from_vec(template.shape(), plus)?;
            let lp = eval(&probe)?;

            let mut minus = template.values().to_vec();
            minus[e] -= E::from_f64(eps);
            probe[k] = Tensor::from_vec(template.shape(), minus)?;
            let lm = eval(&probe)?;

            let fd = (lp - lm) / (2.0 * eps);
            let err = rel_err(fd, analytic[k][e].to_f64());
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}
