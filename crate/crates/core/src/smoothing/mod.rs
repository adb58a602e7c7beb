//! Inference-time temporal smoothing of per-frame logits.
//!
//! Windows are centered and truncated at the sequence edges, so frame `t`
//! sees `[t−k, t+k] ∩ [0, T)` for window `2k+1`. A window of one returns the
//! input unchanged for every strategy.

pub mod lgt1;

use std::fmt;
use std::str::FromStr;

use crate::error::{validation_err, Error, Result};
use crate::metrics::{confusion, macro_f1};
use crate::ndmath::Matrix;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Mean,
    Median,
    Gaussian,
    Vote,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Mean, Strategy::Median, Strategy::Gaussian, Strategy::Vote];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Mean => "mean",
            Strategy::Median => "median",
            Strategy::Gaussian => "gaussian",
            Strategy::Vote => "vote",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| validation_err!("unknown smoothing strategy {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingConfig {
    pub strategy: Strategy,
    /// Odd, at least one.
    pub window: usize,
    /// Gaussian width in frames; `None` means `window / 6`.
    pub gaussian_sigma: Option<f64>,
}

impl SmoothingConfig {
    pub fn new(strategy: Strategy, window: usize) -> Self {
        SmoothingConfig { strategy, window, gaussian_sigma: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(validation_err!("smoothing window must be odd and positive, got {}", self.window));
        }
        if let Some(s) = self.gaussian_sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(validation_err!("gaussian sigma must be positive, got {s}"));
            }
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.gaussian_sigma.unwrap_or(self.window as f64 / 6.0)
    }

    fn half(&self) -> usize {
        self.window / 2
    }
}

/// Truncated window bounds `[lo, hi)` around `t`.
#[inline]
fn bounds(t: usize, half: usize, len: usize) -> (usize, usize) {
    (t.saturating_sub(half), (t + half + 1).min(len))
}

/// Index of the largest entry; ties go to the smallest index.
#[inline]
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn smooth_logits(logits: &Matrix, cfg: &SmoothingConfig) -> Result<Matrix> {
    cfg.validate()?;
    let (t_len, c) = logits.shape();
    if cfg.window == 1 || t_len == 0 {
        return Ok(logits.clone());
    }
    let half = cfg.half();
    let mut out = Matrix::zeros(t_len, c);
    match cfg.strategy {
        Strategy::Vote => {
            let decisions: Vec<usize> = logits.iter_rows().map(argmax).collect();
            let mut counts = vec![0usize; c];
            for t in 0..t_len {
                let (lo, hi) = bounds(t, half, t_len);
                counts.iter_mut().for_each(|k| *k = 0);
                for &d in &decisions[lo..hi] {
                    counts[d] += 1;
                }
                let mut win = 0;
                for (k, &n) in counts.iter().enumerate() {
                    if n > counts[win] {
                        win = k;
                    }
                }
                out.set(t, win, 1.0);
            }
        }
        strategy => {
            let weights = match strategy {
                Strategy::Gaussian => {
                    let s = cfg.sigma();
                    (0..=2 * half)
                        .map(|i| {
                            let d = i as f64 - half as f64;
                            (-(d * d) / (2.0 * s * s)).exp()
                        })
                        .collect()
                }
                _ => Vec::new(),
            };
            let channels = par::map_range(c, |k| {
                let series: Vec<f64> = (0..t_len).map(|t| logits.get(t, k)).collect();
                smooth_channel(&series, half, strategy, &weights)
            });
            for (k, ch) in channels.into_iter().enumerate() {
                for (t, v) in ch.into_iter().enumerate() {
                    out.set(t, k, v);
                }
            }
        }
    }
    Ok(out)
}

fn smooth_channel(x: &[f64], half: usize, strategy: Strategy, weights: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut buf = Vec::with_capacity(2 * half + 1);
    (0..n)
        .map(|t| {
            let (lo, hi) = bounds(t, half, n);
            let win = &x[lo..hi];
            match strategy {
                Strategy::Mean => win.iter().sum::<f64>() / win.len() as f64,
                Strategy::Median => {
                    buf.clear();
                    buf.extend_from_slice(win);
                    let k = (buf.len() - 1) / 2;
                    *buf.select_nth_unstable_by(k, f64::total_cmp).1
                }
                Strategy::Gaussian => {
                    // weight index of x[lo] is lo − (t − half)
                    let off = lo + half - t;
                    let w = &weights[off..off + win.len()];
                    let norm: f64 = w.iter().sum();
                    win.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / norm
                }
                Strategy::Vote => unreachable!("vote is handled on decisions"),
            }
        })
        .collect()
}

/// Per-frame argmax class.
pub fn decide(logits: &Matrix) -> Vec<usize> {
    logits.iter_rows().map(argmax).collect()
}

/// One video's logits and ground-truth labels.
#[derive(Clone, Debug)]
pub struct LabeledLogits {
    pub logits: Matrix,
    pub labels: Vec<Option<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub window: usize,
    pub macro_f1: f64,
}

/// Macro-F1 after smoothing each video independently.
pub fn smoothed_macro_f1(videos: &[LabeledLogits], cfg: &SmoothingConfig) -> Result<f64> {
    let num_classes = videos.first().map_or(0, |v| v.logits.cols());
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for v in videos {
        if v.logits.rows() != v.labels.len() {
            return Err(validation_err!("{} logit rows for {} labels", v.logits.rows(), v.labels.len()));
        }
        if v.logits.cols() != num_classes {
            return Err(validation_err!("videos disagree on class count"));
        }
        pred.extend(decide(&smooth_logits(&v.logits, cfg)?).into_iter().map(Some));
        truth.extend_from_slice(&v.labels);
    }
    let cm = confusion(&pred, &truth, num_classes)?;
    Ok(macro_f1(&cm).score)
}

/// Macro-F1 for each window, in the given order. Missing labels are skipped.
pub fn sweep_windows(
    videos: &[LabeledLogits],
    strategy: Strategy,
    windows: &[usize],
    gaussian_sigma: Option<f64>,
) -> Result<Vec<SweepRow>> {
    for &w in windows {
        SmoothingConfig::new(strategy, w).validate()?;
    }
    par::try_map(windows, |&window| {
        let cfg = SmoothingConfig { strategy, window, gaussian_sigma };
        Ok(SweepRow { window, macro_f1: smoothed_macro_f1(videos, &cfg)? })
    })
}

/// Parses `start:stop:step` (inclusive stop) or a comma-separated list.
pub fn parse_windows(spec: &str) -> Result<Vec<usize>> {
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| validation_err!("bad window value {s:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let windows = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (parse(start)?, parse(stop)?, parse(step)?);
            if step == 0 || start > stop {
                return Err(validation_err!("bad window range {spec:?}"));
            }
            (start..=stop).step_by(step).collect()
        }
        [_] => spec.split(',').map(parse).collect::<Result<Vec<_>>>()?,
        _ => return Err(validation_err!("window spec must be start:stop:step or a list, got {spec:?}")),
    };
    for &w in &windows {
        if w % 2 == 0 {
            return Err(validation_err!("window {w} is even"));
        }
    }
    Ok(windows)
}

/// CSV with a `window,macro_f1` header.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("window,macro_f1\n");
    for r in rows {
        s.push_str(&format!("{},{:.6}\n", r.window, r.macro_f1));
    }
    s
}
