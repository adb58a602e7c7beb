//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod gen;
pub mod grad;

use avexpr_core::ndmath::{Matrix, ParamSet, Rng};
use avexpr_core::smoothing::Strategy;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
/// Smallest denominator in the relative error. Central differences carry about
/// 1e-11 of roundoff, which would swamp entries much smaller than this.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Worst relative error between `analytic` and central differences of `loss`
/// over every parameter entry.
pub fn fd_params<P: ParamSet>(params: &P, analytic: &P, loss: impl Fn(&P) -> f64) -> f64 {
    let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.data.to_vec()).collect();
    let mut worst = 0.0f64;
    for (t, g) in grads.iter().enumerate() {
        for i in 0..g.len() {
            let mut plus = params.clone();
            plus.tensors_mut()[t][i] += FD_STEP;
            let mut minus = params.clone();
            minus.tensors_mut()[t][i] -= FD_STEP;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(g[i], numeric));
        }
    }
    worst
}

/// Same check for a flat input vector.
pub fn fd_input(x: &Matrix, analytic: &Matrix, loss: impl Fn(&Matrix) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..x.as_slice().len() {
        let mut plus = x.clone();
        plus.as_mut_slice()[i] += FD_STEP;
        let mut minus = x.clone();
        minus.as_mut_slice()[i] -= FD_STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic.as_slice()[i], numeric));
    }
    worst
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| scale * rng.normal()).collect()).unwrap()
}

/// Random rows on the probability simplex.
pub fn random_targets(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let raw: Vec<f64> = (0..cols).map(|_| rng.uniform() + 1e-3).collect();
        let s: f64 = raw.iter().sum();
        for (k, v) in raw.into_iter().enumerate() {
            m.set(r, k, v / s);
        }
    }
    m
}

/// Macro-F1 by recounting TP, FP and FN for each class straight from the label lists.
pub fn brute_macro_f1(pred: &[usize], truth: &[Option<usize>], classes: usize) -> (f64, Vec<f64>) {
    let mut per_class = Vec::new();
    for c in 0..classes {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (p, t) in pred.iter().zip(truth) {
            let Some(t) = t else { continue };
            match (*p == c, *t == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        per_class.push(f1);
    }
    (per_class.iter().sum::<f64>() / classes as f64, per_class)
}

fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 0..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Recomputes each output frame from its own truncated window.
pub fn brute_smooth(x: &Matrix, strategy: Strategy, window: usize, sigma: f64) -> Matrix {
    let (t_len, c) = x.shape();
    let k = (window / 2) as isize;
    let mut out = Matrix::zeros(t_len, c);
    for t in 0..t_len as isize {
        let idx: Vec<usize> = (t - k..=t + k).filter(|&s| s >= 0 && s < t_len as isize).map(|s| s as usize).collect();
        if strategy == Strategy::Vote {
            let mut votes = vec![0usize; c];
            for &s in &idx {
                votes[first_max(x.row(s))] += 1;
            }
            let mut win = 0;
            for cls in 1..c {
                if votes[cls] > votes[win] {
                    win = cls;
                }
            }
            out.set(t as usize, win, 1.0);
            continue;
        }
        for ch in 0..c {
            let vals: Vec<f64> = idx.iter().map(|&s| x.get(s, ch)).collect();
            let v = match strategy {
                Strategy::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
                Strategy::Median => {
                    let mut s = vals.clone();
                    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    s[(s.len() - 1) / 2]
                }
                Strategy::Gaussian => {
                    let w: Vec<f64> = idx
                        .iter()
                        .map(|&s| {
                            let d = s as f64 - t as f64;
                            (-d * d / (2.0 * sigma * sigma)).exp()
                        })
                        .collect();
                    let total: f64 = w.iter().sum();
                    vals.iter().zip(&w).map(|(v, w)| v * w).sum::<f64>() / total
                }
                Strategy::Vote => unreachable!(),
            };
            out.set(t as usize, ch, v);
        }
    }
    out
}

/// Logits with frequent exact ties so median and vote tie rules are exercised.
pub fn random_logits(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| (rng.below(7) as f64 - 3.0) + if rng.bernoulli(0.5) { rng.normal() } else { 0.0 }).collect()).unwrap()
}

// Plain-math layers for building reference networks by hand.

pub fn ref_layer_norm(row: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Vec<f64> {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    row.iter().enumerate().map(|(i, v)| (v - mean) / (var + eps).sqrt() * gain[i] + bias[i]).collect()
}

pub fn ref_gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// `W` is `in × out`, so `y_j = Σ_i x_i W[i][j] + b_j`.
pub fn ref_affine(x: &[f64], w: &Matrix, b: &[f64]) -> Vec<f64> {
    (0..w.cols()).map(|j| b[j] + x.iter().enumerate().map(|(i, xi)| xi * w.get(i, j)).sum::<f64>()).collect()
}

pub fn ref_sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
