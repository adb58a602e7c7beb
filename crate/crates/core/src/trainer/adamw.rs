use crate::error::{shape_err, validation_err, Result};
use crate::ndmath::ParamSet;

/// AdamW moments for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamWState {
    pub fn new<P: ParamSet>(params: &P) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.data.len()).collect();
        AdamWState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One AdamW update with bias correction and decoupled weight decay:
/// `θ ← θ(1 − lr·λ) − lr · m̂ / (√v̂ + eps)`.
pub fn adamw_step<P: ParamSet>(
    params: &mut P,
    grads: &P,
    state: &mut AdamWState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if !(lr.is_finite() && lr >= 0.0 && weight_decay.is_finite() && weight_decay >= 0.0) {
        return Err(validation_err!("invalid lr {lr} or weight decay {weight_decay}"));
    }
    let g = grads.tensors();
    let p = params.tensors_mut();
    if g.len() != p.len() || p.len() != state.m.len() {
        return Err(shape_err!("optimizer sees {} tensors, gradients {}, state {}", p.len(), g.len(), state.m.len()));
    }
    for ((pt, gt), mt) in p.iter().zip(&g).zip(&state.m) {
        if pt.len() != gt.data.len() || pt.len() != mt.len() {
            return Err(shape_err!("tensor {} has mismatched gradient or state", gt.name));
        }
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let decay = 1.0 - lr * weight_decay;
    for (((pt, gt), mt), vt) in p.into_iter().zip(&g).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..pt.len() {
            let gi = gt.data[i];
            mt[i] = b1 * mt[i] + (1.0 - b1) * gi;
            vt[i] = b2 * vt[i] + (1.0 - b2) * gi * gi;
            let m_hat = mt[i] / c1;
            let v_hat = vt[i] / c2;
            pt[i] = pt[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
