use crate::datamodel::ClassWeights;
use crate::error::{shape_err, validation_err, Result};

use super::Matrix;

/// Tolerance on target rows summing to one.
const TARGET_SUM_TOL: f64 = 1e-6;

/// Class-weighted cross-entropy against soft targets, averaged over rows.
///
/// Per row: `−Σ_c w_c · y_c · log softmax(z)_c`. Returns the loss and its
/// gradient with respect to the logits.
pub fn weighted_soft_ce(logits: &Matrix, targets: &Matrix, w: &ClassWeights) -> Result<(f64, Matrix)> {
    logits.same_shape(targets)?;
    let (b, c) = logits.shape();
    if w.len() != c {
        return Err(shape_err!("{} class weights for {c} classes", w.len()));
    }
    if b == 0 {
        return Ok((0.0, Matrix::zeros(0, c)));
    }
    let weights = w.as_slice();
    let inv_b = 1.0 / b as f64;
    let mut grad = Matrix::zeros(b, c);
    let mut total = 0.0;
    for r in 0..b {
        let y = targets.row(r);
        let sum: f64 = y.iter().sum();
        if (sum - 1.0).abs() > TARGET_SUM_TOL {
            return Err(validation_err!("target row {r} sums to {sum}"));
        }
        let z = logits.row(r);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        let mut wy_sum = 0.0;
        for k in 0..c {
            let wy = weights[k] * y[k];
            if wy != 0.0 {
                total -= wy * (z[k] - lse);
            }
            wy_sum += wy;
        }
        let g = grad.row_mut(r);
        for k in 0..c {
            let p = (z[k] - lse).exp();
            g[k] = (wy_sum * p - weights[k] * y[k]) * inv_b;
        }
    }
    Ok((total * inv_b, grad))
}

/// Plain mean cross-entropy `−mean log p_{y}` for hard labels, written from
/// the textbook formula. Kept as an independent reference.
pub fn cross_entropy_reference(logits: &Matrix, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let z = logits.row(r);
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        total -= (z[y].exp() / denom).ln();
    }
    total / labels.len() as f64
}
