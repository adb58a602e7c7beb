use crate::error::{validation_err, Result};

/// Positive per-class loss weights with mean one.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeights {
    w: Vec<f64>,
    clamped: Vec<usize>,
}

impl ClassWeights {
    pub fn uniform(num_classes: usize) -> Self {
        ClassWeights { w: vec![1.0; num_classes], clamped: Vec::new() }
    }

    /// Arbitrary positive weights, rescaled to mean one.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() || raw.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(validation_err!("class weights must be finite and positive: {raw:?}"));
        }
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        Ok(ClassWeights { w: raw.into_iter().map(|v| v / mean).collect(), clamped: Vec::new() })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Classes absent from the labels whose count was clamped to one.
    pub fn clamped_classes(&self) -> &[usize] {
        &self.clamped
    }
}

/// Inverse-frequency weights `N / (C·n_c)`, rescaled to mean one.
///
/// Missing labels are ignored. A class with no examples is counted as one
/// example and reported through [`ClassWeights::clamped_classes`] and a log
/// warning.
pub fn compute_class_weights(labels: &[Option<usize>], num_classes: usize) -> Result<ClassWeights> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels.iter().flatten() {
        if l >= num_classes {
            return Err(validation_err!("label {l} outside {num_classes} classes"));
        }
        counts[l] += 1;
    }
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(validation_err!("no valid labels to weight"));
    }
    let mut clamped = Vec::new();
    let raw: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(c, &k)| {
            if k == 0 {
                clamped.push(c);
            }
            n as f64 / (num_classes as f64 * k.max(1) as f64)
        })
        .collect();
    if !clamped.is_empty() {
        log::warn!("classes {clamped:?} have no labels; their count was clamped to 1");
    }
    let mut w = ClassWeights::from_raw(raw)?;
    w.clamped = clamped;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_from_counts(counts: &[usize]) -> Vec<Option<usize>> {
        counts.iter().enumerate().flat_map(|(c, &k)| std::iter::repeat_n(Some(c), k)).collect()
    }

    #[test]
    fn balanced_is_all_ones() {
        let w = compute_class_weights(&labels_from_counts(&[5; 8]), 8).unwrap();
        assert!(w.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn imbalanced_hand_values() {
        // N = 140: raw 140/560 = 0.25 and 140/80 = 1.75; mean raw = 12.5/8 = 1.5625.
        let w = compute_class_weights(&labels_from_counts(&[70, 10, 10, 10, 10, 10, 10, 10]), 8).unwrap();
        assert!((w.as_slice()[0] - 0.16).abs() < 1e-12);
        for &v in &w.as_slice()[1..] {
            assert!((v - 1.12).abs() < 1e-12);
        }
        let mean = w.as_slice().iter().sum::<f64>() / 8.0;
        assert!((mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn missing_labels_ignored_and_all_missing_errors() {
        let mut l = labels_from_counts(&[3; 8]);
        l.extend([None, None]);
        let w = compute_class_weights(&l, 8).unwrap();
        assert!(w.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(compute_class_weights(&[None, None], 8).is_err());
    }

    #[test]
    fn absent_class_is_clamped() {
        let w = compute_class_weights(&labels_from_counts(&[4, 4, 0, 4, 4, 4, 4, 4]), 8).unwrap();
        assert_eq!(w.clamped_classes(), &[2]);
        assert!(w.as_slice()[2] > w.as_slice()[0]);
    }

    #[test]
    fn scale_invariant_in_counts() {
        let base = [7, 1, 3, 9, 2, 5, 4, 6];
        let scaled: Vec<usize> = base.iter().map(|c| c * 13).collect();
        let a = compute_class_weights(&labels_from_counts(&base), 8).unwrap();
        let b = compute_class_weights(&labels_from_counts(&scaled), 8).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
