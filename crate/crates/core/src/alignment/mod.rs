//! Audio-to-frame alignment and multi-scale visual averaging.

pub mod afa1;

use crate::datamodel::{Expression, FrameRecord, VideoSequence};
use crate::error::{validation_err, Result};
use crate::par;

/// Allowed deviation of consecutive timestamp gaps from the declared hop.
pub const HOP_TOLERANCE: f64 = 1e-6;

/// Slack added to the closed window boundary so entries exactly `window/2`
/// away survive decimal rounding of timestamps.
const BOUNDARY_SLACK: f64 = 1e-9;

/// Audio encoder output: evenly spaced feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioTrack {
    pub dim: usize,
    pub hop: f64,
    pub timestamps: Vec<f64>,
    /// Row-major `timestamps.len() × dim`.
    pub features: Vec<f32>,
}

impl AudioTrack {
    pub fn new(dim: usize, hop: f64) -> Self {
        AudioTrack { dim, hop, timestamps: Vec::new(), features: Vec::new() }
    }

    pub fn push(&mut self, timestamp: f64, feature: &[f32]) -> Result<()> {
        if feature.len() != self.dim {
            return Err(validation_err!("audio feature of {} dims, track has {}", feature.len(), self.dim));
        }
        self.timestamps.push(timestamp);
        self.features.extend_from_slice(feature);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hop.is_finite() && self.hop > 0.0) {
            return Err(validation_err!("hop must be positive, got {}", self.hop));
        }
        if self.features.len() != self.timestamps.len() * self.dim {
            return Err(validation_err!("feature buffer does not match {} entries", self.len()));
        }
        if self.timestamps.iter().any(|t| !t.is_finite()) || self.features.iter().any(|v| !v.is_finite()) {
            return Err(validation_err!("non-finite audio track value"));
        }
        for (i, w) in self.timestamps.windows(2).enumerate() {
            let gap = w[1] - w[0];
            if gap <= 0.0 {
                return Err(validation_err!("audio timestamps not strictly increasing at entry {}", i + 1));
            }
            if (gap - self.hop).abs() > HOP_TOLERANCE {
                return Err(validation_err!("audio gap {gap} at entry {} differs from hop {}", i + 1, self.hop));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlignmentMode {
    Nearest,
    /// Mean over entries within `window/2` seconds of the frame (closed).
    WindowMean { window: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentConfig {
    pub mode: AlignmentMode,
}

impl AlignmentConfig {
    pub fn nearest() -> Self {
        AlignmentConfig { mode: AlignmentMode::Nearest }
    }

    pub fn window_mean(window: f64) -> Self {
        AlignmentConfig { mode: AlignmentMode::WindowMean { window } }
    }

    pub fn validate(&self) -> Result<()> {
        if let AlignmentMode::WindowMean { window } = self.mode {
            if !(window.is_finite() && window > 0.0) {
                return Err(validation_err!("alignment window must be positive, got {window}"));
            }
        }
        Ok(())
    }
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig::window_mean(0.5)
    }
}

/// Audio feature for the frame at `frame_time`, or `None` when no entry qualifies.
pub fn align_audio(track: &AudioTrack, frame_time: f64, cfg: &AlignmentConfig) -> Result<Option<Vec<f64>>> {
    track.validate()?;
    cfg.validate()?;
    Ok(align_unchecked(track, frame_time, cfg))
}

fn align_unchecked(track: &AudioTrack, frame_time: f64, cfg: &AlignmentConfig) -> Option<Vec<f64>> {
    if track.is_empty() {
        return None;
    }
    let ts = &track.timestamps;
    match cfg.mode {
        AlignmentMode::Nearest => {
            // first index with t >= frame_time; candidates are it and its predecessor
            let hi = ts.partition_point(|&t| t < frame_time);
            let best = if hi == 0 {
                0
            } else if hi == ts.len() {
                ts.len() - 1
            } else if (frame_time - ts[hi - 1]) <= (ts[hi] - frame_time) {
                hi - 1
            } else {
                hi
            };
            Some(track.feature(best).iter().map(|&v| v as f64).collect())
        }
        AlignmentMode::WindowMean { window } => {
            let half = window / 2.0 + BOUNDARY_SLACK;
            let lo = ts.partition_point(|&t| t < frame_time - half);
            let hi = ts.partition_point(|&t| t <= frame_time + half);
            if lo >= hi {
                return None;
            }
            let mut acc = vec![0.0; track.dim];
            for i in lo..hi {
                for (a, &v) in acc.iter_mut().zip(track.feature(i)) {
                    *a += v as f64;
                }
            }
            let n = (hi - lo) as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            Some(acc)
        }
    }
}

/// Elementwise mean of the three scale features.
pub fn average_multiscale(rec: &FrameRecord) -> Result<Vec<f64>> {
    let d = rec.visual[0].len();
    if d == 0 || rec.visual.iter().any(|v| v.len() != d) {
        return Err(validation_err!(
            "frame {}: scale features missing or of unequal length",
            rec.frame_index
        ));
    }
    Ok((0..d)
        .map(|j| (rec.visual[0][j] as f64 + rec.visual[1][j] as f64 + rec.visual[2][j] as f64) / 3.0)
        .collect())
}

/// Fusion input for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePair {
    pub visual: Vec<f64>,
    pub audio: Option<Vec<f64>>,
    pub label: Option<Expression>,
}

/// One pair per frame, in frame order, with audio aligned from `track`.
pub fn build_frame_pairs(seq: &VideoSequence, track: &AudioTrack, cfg: &AlignmentConfig) -> Result<Vec<FramePair>> {
    seq.validate()?;
    track.validate()?;
    cfg.validate()?;
    par::try_map(&seq.records, |rec| {
        Ok(FramePair {
            visual: average_multiscale(rec)?,
            audio: align_unchecked(track, rec.timestamp, cfg),
            label: rec.label,
        })
    })
}

/// Pairs using the audio already stored in the records.
pub fn frame_pairs_from_records(seq: &VideoSequence) -> Result<Vec<FramePair>> {
    seq.validate()?;
    par::try_map(&seq.records, |rec| {
        Ok(FramePair {
            visual: average_multiscale(rec)?,
            audio: rec.audio.as_ref().map(|a| a.iter().map(|&v| v as f64).collect()),
            label: rec.label,
        })
    })
}

/// Copy of `seq` whose records carry audio aligned from `track`.
pub fn attach_audio(seq: &VideoSequence, track: &AudioTrack, cfg: &AlignmentConfig) -> Result<VideoSequence> {
    seq.validate()?;
    track.validate()?;
    cfg.validate()?;
    if track.dim == 0 {
        return Err(validation_err!("audio track has zero dimension"));
    }
    let records = par::map(&seq.records, |rec| {
        let mut r = rec.clone();
        r.audio = align_unchecked(track, rec.timestamp, cfg).map(|a| a.into_iter().map(|v| v as f32).collect());
        r
    });
    Ok(VideoSequence { audio_dim: track.dim, records, ..seq.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(entries: &[(f64, f32)], hop: f64) -> AudioTrack {
        let mut t = AudioTrack::new(1, hop);
        for &(ts, v) in entries {
            t.push(ts, &[v]).unwrap();
        }
        t
    }

    #[test]
    fn single_entry_any_mode() {
        let t = track(&[(0.3, 7.0)], 0.02);
        for cfg in [AlignmentConfig::nearest(), AlignmentConfig::window_mean(10.0)] {
            assert_eq!(align_audio(&t, 0.31, &cfg).unwrap(), Some(vec![7.0]));
        }
    }

    #[test]
    fn window_collects_all_three() {
        let t = track(&[(0.0, 1.0), (0.1, 2.0), (0.2, 6.0)], 0.1);
        let got = align_audio(&t, 0.1, &AlignmentConfig::window_mean(0.25)).unwrap().unwrap();
        assert!((got[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn far_frame_is_absent() {
        let t = track(&[(0.0, 1.0), (0.1, 2.0)], 0.1);
        assert_eq!(align_audio(&t, 5.0, &AlignmentConfig::window_mean(0.5)).unwrap(), None);
        assert_eq!(align_audio(&AudioTrack::new(1, 0.1), 0.0, &AlignmentConfig::nearest()).unwrap(), None);
    }

    #[test]
    fn nearest_ties_go_to_earlier() {
        let t = track(&[(0.0, 1.0), (0.5, 2.0), (1.0, 3.0)], 0.5);
        let cfg = AlignmentConfig::nearest();
        assert_eq!(align_audio(&t, 0.25, &cfg).unwrap(), Some(vec![1.0]));
        assert_eq!(align_audio(&t, 0.26, &cfg).unwrap(), Some(vec![2.0]));
        assert_eq!(align_audio(&t, -3.0, &cfg).unwrap(), Some(vec![1.0]));
        assert_eq!(align_audio(&t, 9.0, &cfg).unwrap(), Some(vec![3.0]));
    }

    #[test]
    fn closed_boundary_at_fifty_hz() {
        // 0.50 s window at a 20 ms hop: ±0.25 s includes both edge entries.
        let entries: Vec<(f64, f32)> = (0..101).map(|i| (i as f64 * 0.02, i as f32)).collect();
        let t = track(&entries, 0.02);
        let got = align_audio(&t, 1.0, &AlignmentConfig::window_mean(0.5)).unwrap().unwrap();
        // entries 38..=62, mean 50
        assert!((got[0] - 50.0).abs() < 1e-9);
    }

    #[test]
    fn non_monotone_track_rejected() {
        let t = track(&[(0.1, 1.0), (0.0, 2.0)], 0.1);
        assert!(align_audio(&t, 0.0, &AlignmentConfig::nearest()).is_err());
        let uneven = track(&[(0.0, 1.0), (0.1, 2.0), (0.3, 3.0)], 0.1);
        assert!(align_audio(&uneven, 0.0, &AlignmentConfig::nearest()).is_err());
    }

    fn frame(v: [[f32; 3]; 3]) -> FrameRecord {
        FrameRecord {
            frame_index: 0,
            timestamp: 0.0,
            visual: [v[0].to_vec(), v[1].to_vec(), v[2].to_vec()],
            audio: None,
            label: None,
        }
    }

    #[test]
    fn multiscale_mean() {
        let same = frame([[1.0, 2.0, 3.0]; 3]);
        assert_eq!(average_multiscale(&same).unwrap(), vec![1.0, 2.0, 3.0]);
        let basis = frame([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        for v in average_multiscale(&basis).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let mut bad = same.clone();
        bad.visual[2].pop();
        assert!(average_multiscale(&bad).is_err());
    }
}
