use std::collections::BTreeMap;

use crate::error::{validation_err, Result};
use crate::ndmath::Rng;

/// Video-level k-fold assignment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldSplit {
    pub fn fold_of(&self, video: &str) -> Option<usize> {
        self.assignment.get(video).copied()
    }

    /// Videos in fold `f`, sorted by id.
    pub fn members(&self, f: usize) -> Vec<&str> {
        self.assignment.iter().filter(|(_, &v)| v == f).map(|(k, _)| k.as_str()).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in self.assignment.values() {
            s[f] += 1;
        }
        s
    }
}

/// Shuffles the videos with `seed`, then deals them round-robin into `k`
/// folds. Fold sizes differ by at most one.
pub fn make_folds(videos: &[String], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(validation_err!("need at least 2 folds, got {k}"));
    }
    let mut ids: Vec<&String> = videos.iter().collect();
    ids.sort();
    ids.dedup();
    if ids.len() != videos.len() {
        return Err(validation_err!("duplicate video ids"));
    }
    if k > ids.len() {
        return Err(validation_err!("{k} folds for only {} videos", ids.len()));
    }
    Rng::new(seed).shuffle(&mut ids);
    let assignment = ids.into_iter().enumerate().map(|(i, v)| (v.clone(), i % k)).collect();
    Ok(FoldSplit { k, assignment })
}
