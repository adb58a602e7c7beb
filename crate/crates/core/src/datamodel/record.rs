use crate::error::{validation_err, Result};

use super::Expression;

/// Crop scale factors, in storage order.
pub const SCALES: [f32; 3] = [0.9, 1.2, 1.5];

/// One video frame: per-scale visual features, optional aligned audio, label.
///
/// Features are kept in `f32`, the file precision; consumers promote to `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub timestamp: f64,
    /// Visual features for [`SCALES`], in that order.
    pub visual: [Vec<f32>; 3],
    pub audio: Option<Vec<f32>>,
    pub label: Option<Expression>,
}

/// Frames of one video, ordered by `frame_index`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSequence {
    pub video_id: String,
    pub fps: f64,
    pub visual_dim: usize,
    /// Zero when the schema carries no audio.
    pub audio_dim: usize,
    pub records: Vec<FrameRecord>,
}

impl VideoSequence {
    pub fn new(video_id: impl Into<String>, fps: f64, visual_dim: usize, audio_dim: usize) -> Self {
        VideoSequence { video_id: video_id.into(), fps, visual_dim, audio_dim, records: Vec::new() }
    }

    pub fn has_audio_schema(&self) -> bool {
        self.audio_dim > 0
    }

    pub fn labels(&self) -> Vec<Option<Expression>> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(validation_err!("fps must be positive, got {}", self.fps));
        }
        if self.video_id.len() > u16::MAX as usize {
            return Err(validation_err!("video id longer than {} bytes", u16::MAX));
        }
        let mut prev: Option<&FrameRecord> = None;
        for (i, rec) in self.records.iter().enumerate() {
            for (s, v) in rec.visual.iter().enumerate() {
                if v.len() != self.visual_dim {
                    return Err(validation_err!(
                        "frame {i}: scale {} has {} dims, expected {}",
                        SCALES[s],
                        v.len(),
                        self.visual_dim
                    ));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(validation_err!("frame {i}: non-finite visual feature"));
                }
            }
            if let Some(a) = &rec.audio {
                if !self.has_audio_schema() {
                    return Err(validation_err!("frame {i}: audio present but schema has none"));
                }
                if a.len() != self.audio_dim {
                    return Err(validation_err!(
                        "frame {i}: audio has {} dims, expected {}",
                        a.len(),
                        self.audio_dim
                    ));
                }
                if a.iter().any(|x| !x.is_finite()) {
                    return Err(validation_err!("frame {i}: non-finite audio feature"));
                }
            }
            if !(rec.timestamp.is_finite() && rec.timestamp >= 0.0) {
                return Err(validation_err!("frame {i}: bad timestamp {}", rec.timestamp));
            }
            if let Some(p) = prev {
                if rec.frame_index <= p.frame_index {
                    return Err(validation_err!(
                        "frame_index not strictly increasing at position {i} ({} after {})",
                        rec.frame_index,
                        p.frame_index
                    ));
                }
                if rec.timestamp < p.timestamp {
                    return Err(validation_err!("timestamp decreases at position {i}"));
                }
            }
            prev = Some(rec);
        }
        Ok(())
    }
}
