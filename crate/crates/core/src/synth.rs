//! Synthetic audio-visual expression data with known structure.
//!
//! Labels are piecewise constant. Frames are grouped into fixed-length chunks
//! and each chunk is assigned to one of three regimes: visual informative,
//! audio informative, or neither. An informative modality carries its class
//! prototype plus noise; otherwise it is pure noise. Observed labels are the
//! latent ones with a fraction flipped to a random other class. Audio lives on
//! its own hop grid with a per-video phase offset and must be aligned.

use crate::alignment::AudioTrack;
use crate::datamodel::{Expression, FrameRecord, VideoSequence};
use crate::error::{validation_err, Result};
use crate::ndmath::Rng;
use crate::par;
use crate::NUM_CLASSES;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub videos: usize,
    pub frames_per_video: usize,
    pub visual_dim: usize,
    pub audio_dim: usize,
    pub fps: f64,
    pub audio_hop: f64,
    /// Segment lengths are drawn uniformly from this inclusive range.
    pub segment_frames: (usize, usize),
    pub flip_rate: f64,
    pub missing_rate: f64,
    /// Fraction of chunks where each modality is informative (disjoint).
    pub informative_fraction: f64,
    pub chunk_frames: usize,
    /// Prototype norm in visual / audio space.
    pub visual_signal: f64,
    pub audio_signal: f64,
    /// Per-dimension noise standard deviation.
    pub visual_noise: f64,
    pub audio_noise: f64,
    /// Extra noise that differs between the three crop scales.
    pub scale_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            videos: 32,
            frames_per_video: 600,
            visual_dim: 16,
            audio_dim: 16,
            fps: 30.0,
            audio_hop: 0.02,
            segment_frames: (60, 180),
            flip_rate: 0.15,
            missing_rate: 0.0,
            informative_fraction: 0.3,
            chunk_frames: 30,
            visual_signal: 3.0,
            audio_signal: 1.5,
            visual_noise: 1.0,
            audio_noise: 1.0,
            scale_noise: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.segment_frames;
        if self.videos == 0 || self.frames_per_video == 0 || self.visual_dim == 0 || self.audio_dim == 0 {
            return Err(validation_err!("synthetic sizes must be positive"));
        }
        if lo == 0 || lo > hi || self.chunk_frames == 0 {
            return Err(validation_err!("bad segment range ({lo}, {hi}) or chunk length"));
        }
        if !(self.fps > 0.0 && self.audio_hop > 0.0) {
            return Err(validation_err!("fps and audio hop must be positive"));
        }
        for (name, p) in [("flip", self.flip_rate), ("missing", self.missing_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(validation_err!("{name} rate {p} outside [0,1]"));
            }
        }
        if !(0.0..=0.5).contains(&self.informative_fraction) {
            return Err(validation_err!("informative fraction must lie in [0, 0.5]"));
        }
        Ok(())
    }
}

/// Which modality carries the label in a chunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Visual,
    Audio,
    Neither,
}

#[derive(Clone, Debug)]
pub struct SynthVideo {
    pub sequence: VideoSequence,
    pub track: AudioTrack,
    pub latent: Vec<usize>,
    pub regimes: Vec<Regime>,
}

impl SynthVideo {
    pub fn labels(&self) -> Vec<Option<usize>> {
        self.sequence.records.iter().map(|r| r.label.map(Expression::index)).collect()
    }
}

fn prototype(rng: &mut Rng, dim: usize, norm: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x * norm / n).collect()
}

fn noisy(rng: &mut Rng, mean: Option<&[f64]>, dim: usize, sd: f64) -> Vec<f64> {
    (0..dim).map(|j| mean.map_or(0.0, |m| m[j]) + sd * rng.normal()).collect()
}

/// Generates `cfg.videos` videos. Output depends only on `(cfg, seed)`.
pub fn generate(cfg: &SynthConfig, seed: u64) -> Result<Vec<SynthVideo>> {
    cfg.validate()?;
    let mut proto_rng = Rng::with_stream(seed, 0);
    let vis: Vec<Vec<f64>> = (0..NUM_CLASSES).map(|_| prototype(&mut proto_rng, cfg.visual_dim, cfg.visual_signal)).collect();
    let aud: Vec<Vec<f64>> = (0..NUM_CLASSES).map(|_| prototype(&mut proto_rng, cfg.audio_dim, cfg.audio_signal)).collect();
    par::try_map_range(cfg.videos, |v| generate_video(cfg, &vis, &aud, v, &mut Rng::with_stream(seed, v as u64 + 1)))
}

fn generate_video(cfg: &SynthConfig, vis: &[Vec<f64>], aud: &[Vec<f64>], index: usize, rng: &mut Rng) -> Result<SynthVideo> {
    let n = cfg.frames_per_video;
    let mut latent = Vec::with_capacity(n);
    let mut prev = None;
    while latent.len() < n {
        let (lo, hi) = cfg.segment_frames;
        let len = lo + rng.below(hi - lo + 1);
        let class = loop {
            let c = rng.below(NUM_CLASSES);
            if Some(c) != prev {
                break c;
            }
        };
        prev = Some(class);
        latent.extend(std::iter::repeat_n(class, len.min(n - latent.len())));
    }

    let chunks = n.div_ceil(cfg.chunk_frames);
    let regimes: Vec<Regime> = (0..chunks)
        .map(|_| {
            let u = rng.uniform();
            if u < cfg.informative_fraction {
                Regime::Visual
            } else if u < 2.0 * cfg.informative_fraction {
                Regime::Audio
            } else {
                Regime::Neither
            }
        })
        .collect();
    let regime_at = |frame: usize| regimes[(frame / cfg.chunk_frames).min(chunks - 1)];

    let mut seq = VideoSequence::new(format!("synth_{index:03}"), cfg.fps, cfg.visual_dim, 0);
    for (t, &class) in latent.iter().enumerate() {
        let mean = (regime_at(t) == Regime::Visual).then(|| vis[class].as_slice());
        let base = noisy(rng, mean, cfg.visual_dim, cfg.visual_noise);
        let scale = |rng: &mut Rng| -> Vec<f32> {
            base.iter().map(|&b| (b + cfg.scale_noise * rng.normal()) as f32).collect()
        };
        let visual = [scale(rng), scale(rng), scale(rng)];
        let observed = if rng.bernoulli(cfg.flip_rate) {
            (class + 1 + rng.below(NUM_CLASSES - 1)) % NUM_CLASSES
        } else {
            class
        };
        let label = if rng.bernoulli(cfg.missing_rate) { None } else { Expression::from_index(observed) };
        seq.records.push(FrameRecord { frame_index: t as u64, timestamp: t as f64 / cfg.fps, visual, audio: None, label });
    }

    let duration = n as f64 / cfg.fps;
    let offset = rng.uniform_range(0.0, cfg.audio_hop);
    let mut track = AudioTrack::new(cfg.audio_dim, cfg.audio_hop);
    let mut j = 0usize;
    loop {
        let ts = offset + j as f64 * cfg.audio_hop;
        if ts >= duration {
            break;
        }
        let frame = ((ts * cfg.fps).floor() as usize).min(n - 1);
        let mean = (regime_at(frame) == Regime::Audio).then(|| aud[latent[frame]].as_slice());
        let f: Vec<f32> = noisy(rng, mean, cfg.audio_dim, cfg.audio_noise).into_iter().map(|x| x as f32).collect();
        track.push(ts, &f)?;
        j += 1;
    }
    Ok(SynthVideo { sequence: seq, track, latent, regimes })
}
