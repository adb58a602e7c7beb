use crate::error::{shape_err, validation_err, Result};

use super::{Matrix, Rng};

/// Dropout rate used wherever a head applies dropout without an explicit rate.
pub const DEFAULT_DROPOUT: f64 = 0.1;
pub const DEFAULT_LN_EPS: f64 = 1e-5;

/// Affine map `y = x·W + b` with `W` stored input-major (`in × out`).
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear { weight: Matrix::zeros(input, output), bias: vec![0.0; output] }
    }

    /// Uniform `±1/sqrt(input)` weights and biases.
    pub fn init(input: usize, output: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let mut lin = Linear::zeros(input, output);
        for w in lin.weight.as_mut_slice() {
            *w = rng.uniform_range(-bound, bound);
        }
        for b in &mut lin.bias {
            *b = rng.uniform_range(-bound, bound);
        }
        lin
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(shape_err!(
                "linear expects {} inputs, got {}",
                self.input_dim(),
                x.cols()
            ));
        }
        let mut out = x.matmul(&self.weight)?;
        out.add_row_vector(&self.bias)?;
        Ok(out)
    }

    /// Accumulates `∂L/∂W` and `∂L/∂b` into `grads` and returns `∂L/∂x`.
    pub fn backward(&self, x: &Matrix, grad_out: &Matrix, grads: &mut Linear) -> Result<Matrix> {
        if grad_out.cols() != self.output_dim() || grad_out.rows() != x.rows() {
            return Err(shape_err!(
                "linear backward: grad {:?} for input {:?} -> {}",
                grad_out.shape(),
                x.shape(),
                self.output_dim()
            ));
        }
        grads.weight.add_assign(&x.t_matmul(grad_out)?)?;
        for (g, s) in grads.bias.iter_mut().zip(grad_out.column_sums()) {
            *g += s;
        }
        grad_out.matmul_t(&self.weight)
    }
}

/// Per-row layer normalization with learned gain and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub eps: f64,
}

/// Saved activations for [`LayerNorm::backward`].
#[derive(Clone, Debug)]
pub struct LnCache {
    pub normalized: Matrix,
    pub inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm { gain: vec![1.0; dim], bias: vec![0.0; dim], eps: DEFAULT_LN_EPS }
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    /// `(x − mean) / sqrt(var + eps) · gain + bias`, with the biased variance.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, LnCache)> {
        let n = self.dim();
        if n == 0 || x.cols() != n {
            return Err(shape_err!("layer_norm over {n} features, got {}", x.cols()));
        }
        let mut normalized = Matrix::zeros(x.rows(), n);
        let mut out = Matrix::zeros(x.rows(), n);
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std.push(is);
            let nrow = normalized.row_mut(r);
            for (o, &v) in nrow.iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            let orow = out.row_mut(r);
            for j in 0..n {
                orow[j] = normalized.get(r, j) * self.gain[j] + self.bias[j];
            }
        }
        Ok((out, LnCache { normalized, inv_std }))
    }

    pub fn backward(&self, cache: &LnCache, grad_out: &Matrix, grads: &mut LayerNorm) -> Result<Matrix> {
        let n = self.dim();
        cache.normalized.same_shape(grad_out)?;
        let mut dx = Matrix::zeros(grad_out.rows(), n);
        let mut dxhat = vec![0.0; n];
        for r in 0..grad_out.rows() {
            let g = grad_out.row(r);
            let xhat = cache.normalized.row(r);
            for j in 0..n {
                grads.gain[j] += g[j] * xhat[j];
                grads.bias[j] += g[j];
                dxhat[j] = g[j] * self.gain[j];
            }
            let mean_d = dxhat.iter().sum::<f64>() / n as f64;
            let mean_dx = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            let is = cache.inv_std[r];
            for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
                *o = is * (dxhat[j] - mean_d - xhat[j] * mean_dx);
            }
        }
        Ok(dx)
    }
}

/// Numerically stable softmax of one vector.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        out.row_mut(r).copy_from_slice(&softmax(x.row(r)));
    }
    out
}

/// Backward of a row-wise softmax given its output `probs`.
pub fn softmax_backward_rows(probs: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
    probs.same_shape(grad_out)?;
    let mut dz = Matrix::zeros(probs.rows(), probs.cols());
    for r in 0..probs.rows() {
        let p = probs.row(r);
        let g = grad_out.row(r);
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for (j, o) in dz.row_mut(r).iter_mut().enumerate() {
            *o = p[j] * (g[j] - dot);
        }
    }
    Ok(dz)
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(sigmoid_scalar)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu(x: &Matrix) -> Matrix {
    x.map(|v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_K * v * v * v)).tanh()))
}

/// `grad_out ⊙ gelu'(x)` for the pre-activation `x`.
pub fn gelu_backward(x: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
    x.zip_map(grad_out, |v, g| {
        let u = GELU_C * (v + GELU_K * v * v * v);
        let t = u.tanh();
        let du = GELU_C * (1.0 + 3.0 * GELU_K * v * v);
        g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
    })
}

/// Inverted dropout. Returns the output and, when a mask was applied, the
/// per-entry scale (`0` or `1/(1−p)`) needed by [`dropout_backward`].
pub fn dropout(x: &Matrix, p: f64, rng: &mut Rng, training: bool) -> Result<(Matrix, Option<Matrix>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(validation_err!("dropout rate {p} outside [0, 1)"));
    }
    if !training || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let mut mask = Matrix::zeros(x.rows(), x.cols());
    for m in mask.as_mut_slice() {
        *m = if rng.uniform() < p { 0.0 } else { keep };
    }
    let out = x.zip_map(&mask, |a, m| a * m)?;
    Ok((out, Some(mask)))
}

pub fn dropout_backward(grad_out: &Matrix, mask: Option<&Matrix>) -> Result<Matrix> {
    match mask {
        None => Ok(grad_out.clone()),
        Some(m) => grad_out.zip_map(m, |g, s| g * s),
    }
}
