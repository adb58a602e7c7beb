//! Desk-scale versions of the ablation recipes: fusion heads, alignment
//! modes and smoothing-window sweeps on synthetic data.

use serde::Serialize;

use crate::alignment::{build_frame_pairs, AlignmentConfig};
use crate::error::Result;
use crate::head::{Batch, Head, HeadKind, HeadSpec};
use crate::ndmath::Matrix;
use crate::par;
use crate::smoothing::{sweep_windows, LabeledLogits, Strategy, SweepRow};
use crate::synth::{generate, SynthConfig, SynthVideo};
use crate::trainer::{train_spec, FeatureSet, TrainConfig};

/// Per-video feature sets after alignment, split into train and validation videos.
#[derive(Clone, Debug)]
pub struct SplitData {
    pub train: FeatureSet,
    pub val: Vec<(String, FeatureSet)>,
    pub visual_dim: usize,
    pub audio_dim: usize,
}

impl SplitData {
    pub fn val_all(&self) -> Result<FeatureSet> {
        FeatureSet::concat(&self.val.iter().map(|(_, s)| s).collect::<Vec<_>>())
    }
}

pub fn video_features(video: &SynthVideo, align: &AlignmentConfig) -> Result<FeatureSet> {
    let pairs = build_frame_pairs(&video.sequence, &video.track, align)?;
    let batch = Batch::from_pairs(&pairs, video.sequence.visual_dim, video.track.dim)?;
    FeatureSet::new(batch, video.labels())
}

/// Aligns every video and holds out the last `val_fraction` of them.
pub fn split(videos: &[SynthVideo], align: &AlignmentConfig, val_fraction: f64) -> Result<SplitData> {
    let sets = par::try_map(videos, |v| video_features(v, align))?;
    let n_val = ((videos.len() as f64 * val_fraction).round() as usize).clamp(1, videos.len() - 1);
    let n_train = videos.len() - n_val;
    let train = FeatureSet::concat(&sets[..n_train].iter().collect::<Vec<_>>())?;
    let val = videos[n_train..].iter().map(|v| v.sequence.video_id.clone()).zip(sets[n_train..].iter().cloned()).collect();
    Ok(SplitData { train, val, visual_dim: videos[0].sequence.visual_dim, audio_dim: videos[0].track.dim })
}

/// Training recipe used by the synthetic experiments.
pub fn synthetic_train_config(seed: u64) -> TrainConfig {
    TrainConfig { lr: 1e-3, batch_size: 128, seed, ..TrainConfig::default() }
}

#[derive(Clone, Debug, Serialize)]
pub struct HeadScore {
    pub head: String,
    pub params: usize,
    pub val_macro_f1: f64,
}

pub fn head_spec(kind: HeadKind, data: &SplitData, hidden: usize) -> HeadSpec {
    HeadSpec::new(kind, data.visual_dim, data.audio_dim).with_hidden(hidden)
}

/// Best-epoch validation macro-F1 of each head kind.
pub fn compare_heads(data: &SplitData, kinds: &[HeadKind], hidden: usize, cfg: &TrainConfig) -> Result<Vec<HeadScore>> {
    let val = data.val_all()?;
    par::try_map(kinds, |&kind| {
        let out = train_spec(&head_spec(kind, data, hidden), &data.train, &val, cfg)?;
        Ok(HeadScore { head: kind.name().to_string(), params: crate::ndmath::ParamSet::param_count(&out.params), val_macro_f1: out.best_val_f1() })
    })
}

/// Per-video validation logits of a trained head.
pub fn val_logits<H: Head>(head: &H, data: &SplitData) -> Result<Vec<LabeledLogits>> {
    par::try_map(&data.val, |(_, set)| {
        let logits: Matrix = head.infer(&set.inputs)?;
        Ok(LabeledLogits { logits, labels: set.labels.clone() })
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSummary {
    pub unsmoothed: f64,
    pub best_window: usize,
    pub best_macro_f1: f64,
    pub rows: Vec<(usize, f64)>,
}

impl SweepSummary {
    /// Best window lies strictly inside the swept range.
    pub fn interior_maximum(&self) -> bool {
        let first = self.rows.first().map(|r| r.0);
        let last = self.rows.last().map(|r| r.0);
        Some(self.best_window) != first && Some(self.best_window) != last
    }
}

/// Sweeps `windows` and picks the best; ties go to the smaller window.
pub fn summarize_sweep(videos: &[LabeledLogits], strategy: Strategy, windows: &[usize]) -> Result<SweepSummary> {
    let base = sweep_windows(videos, strategy, &[1], None)?[0].macro_f1;
    let rows: Vec<SweepRow> = sweep_windows(videos, strategy, windows, None)?;
    let best = rows.iter().fold(rows[0], |b, r| if r.macro_f1 > b.macro_f1 { *r } else { b });
    Ok(SweepSummary {
        unsmoothed: base,
        best_window: best.window,
        best_macro_f1: best.macro_f1,
        rows: rows.iter().map(|r| (r.window, r.macro_f1)).collect(),
    })
}

/// Generates the default synthetic dataset for a seed.
pub fn synthetic_videos(seed: u64) -> Result<Vec<SynthVideo>> {
    generate(&SynthConfig::default(), seed)
}
