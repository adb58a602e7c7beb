//! Confusion matrices, per-class F1 and the macro-averaged F1 score.
//!
//! Zero-denominator convention: a precision, recall or F1 whose denominator is
//! zero is taken as 0. A class that never occurs and is never predicted
//! therefore contributes 0 to the macro mean.

use serde::Serialize;

use crate::error::{validation_err, Result};

/// Counts indexed `[truth][prediction]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix { num_classes, counts: vec![0; num_classes * num_classes] }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.num_classes + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Number of frames whose truth is each class.
    pub fn support(&self) -> Vec<u64> {
        (0..self.num_classes).map(|t| (0..self.num_classes).map(|p| self.get(t, p)).sum()).collect()
    }

    fn predicted(&self, c: usize) -> u64 {
        (0..self.num_classes).map(|t| self.get(t, c)).sum()
    }
}

/// Tallies predictions against ground truth. Frames with missing truth are
/// skipped before their prediction is looked at.
pub fn confusion(pred: &[Option<usize>], truth: &[Option<usize>], num_classes: usize) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(validation_err!("{} predictions for {} labels", pred.len(), truth.len()));
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for (i, (&p, &t)) in pred.iter().zip(truth).enumerate() {
        let Some(t) = t else { continue };
        let p = p.ok_or_else(|| validation_err!("prediction {i} is missing"))?;
        if p >= num_classes {
            return Err(validation_err!("prediction {i} = {p} outside {num_classes} classes"));
        }
        if t >= num_classes {
            return Err(validation_err!("label {i} = {t} outside {num_classes} classes"));
        }
        cm.add(t, p);
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct F1Report {
    pub score: f64,
    pub per_class: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

#[inline]
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn macro_f1(cm: &ConfusionMatrix) -> F1Report {
    let c = cm.num_classes();
    let mut per_class = Vec::with_capacity(c);
    let mut precision = Vec::with_capacity(c);
    let mut recall = Vec::with_capacity(c);
    let support = cm.support();
    for k in 0..c {
        let tp = cm.get(k, k) as f64;
        let p = ratio(tp, cm.predicted(k) as f64);
        let r = ratio(tp, support[k] as f64);
        precision.push(p);
        recall.push(r);
        per_class.push(ratio(2.0 * p * r, p + r));
    }
    let score = if c == 0 { 0.0 } else { per_class.iter().sum::<f64>() / c as f64 };
    F1Report { score, per_class, precision, recall }
}

/// JSON evaluation report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub macro_f1: f64,
    pub per_class: Vec<f64>,
    pub support: Vec<u64>,
    pub n_eval_frames: u64,
    /// Macro mean over classes with nonzero support only.
    pub macro_f1_present_classes: f64,
}

impl EvalReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Self {
        let f1 = macro_f1(cm);
        let support = cm.support();
        let present: Vec<f64> =
            f1.per_class.iter().zip(&support).filter(|(_, &s)| s > 0).map(|(&f, _)| f).collect();
        let present_mean = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
        EvalReport {
            macro_f1: f1.score,
            per_class: f1.per_class,
            n_eval_frames: cm.total(),
            support,
            macro_f1_present_classes: present_mean,
        }
    }
}
