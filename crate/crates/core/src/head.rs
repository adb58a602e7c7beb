//! Common interface of the trainable classification heads.

use std::fmt;
use std::str::FromStr;

use crate::alignment::FramePair;
use crate::error::{shape_err, validation_err, Error, Result};
use crate::fusion::{BaselineFusionParams, GatedFusionParams, LinearProbe, Modality};
use crate::moe_head::{MoEConfig, MoEHeadParams};
use crate::ndmath::{Matrix, ParamSet, Rng, TensorRef, TensorStore, DEFAULT_DROPOUT};
use crate::NUM_CLASSES;

/// Inputs for a batch of frames. Absent audio rows hold zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub visual: Matrix,
    pub audio: Matrix,
    pub audio_present: Vec<bool>,
}

impl Batch {
    pub fn new(visual: Matrix, audio: Matrix, audio_present: Vec<bool>) -> Result<Self> {
        if visual.rows() != audio.rows() || visual.rows() != audio_present.len() {
            return Err(shape_err!(
                "batch parts disagree: {} visual, {} audio, {} flags",
                visual.rows(),
                audio.rows(),
                audio_present.len()
            ));
        }
        Ok(Batch { visual, audio, audio_present })
    }

    /// Visual-only batch with a zero-width audio block.
    pub fn visual_only(visual: Matrix) -> Self {
        let n = visual.rows();
        Batch { visual, audio: Matrix::zeros(n, 0), audio_present: vec![false; n] }
    }

    pub fn from_pairs(pairs: &[FramePair], visual_dim: usize, audio_dim: usize) -> Result<Self> {
        let n = pairs.len();
        let mut visual = Matrix::zeros(n, visual_dim);
        let mut audio = Matrix::zeros(n, audio_dim);
        let mut present = vec![false; n];
        for (i, p) in pairs.iter().enumerate() {
            if p.visual.len() != visual_dim {
                return Err(shape_err!("frame {i}: visual has {} dims, expected {visual_dim}", p.visual.len()));
            }
            visual.row_mut(i).copy_from_slice(&p.visual);
            if let Some(a) = &p.audio {
                if a.len() != audio_dim {
                    return Err(shape_err!("frame {i}: audio has {} dims, expected {audio_dim}", a.len()));
                }
                audio.row_mut(i).copy_from_slice(a);
                present[i] = true;
            }
        }
        Ok(Batch { visual, audio, audio_present: present })
    }

    pub fn len(&self) -> usize {
        self.visual.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            visual: self.visual.select_rows(idx),
            audio: self.audio.select_rows(idx),
            audio_present: idx.iter().map(|&i| self.audio_present[i]).collect(),
        }
    }

    pub fn concat(parts: &[&Batch]) -> Result<Batch> {
        let first = parts.first().ok_or_else(|| validation_err!("no batches to concatenate"))?;
        let (dv, da) = (first.visual.cols(), first.audio.cols());
        let mut v = Vec::new();
        let mut a = Vec::new();
        let mut p = Vec::new();
        for b in parts {
            if b.visual.cols() != dv || b.audio.cols() != da {
                return Err(shape_err!("cannot concatenate batches of different widths"));
            }
            v.extend_from_slice(b.visual.as_slice());
            a.extend_from_slice(b.audio.as_slice());
            p.extend_from_slice(&b.audio_present);
        }
        let n = p.len();
        Batch::new(Matrix::new(n, dv, v)?, Matrix::new(n, da, a)?, p)
    }

    pub fn ensure_finite(&self) -> Result<()> {
        self.visual.ensure_finite("visual")?;
        self.audio.ensure_finite("audio")
    }
}

/// A differentiable classification head.
pub trait Head: ParamSet {
    type Cache: Send;

    fn num_classes(&self) -> usize;

    fn forward(&self, batch: &Batch, rng: &mut Rng, training: bool) -> Result<(Matrix, Self::Cache)>;

    /// Parameter gradients for `∂L/∂logits = grad_logits`.
    fn backward(&self, batch: &Batch, cache: &Self::Cache, grad_logits: &Matrix) -> Result<Self>;

    /// Deterministic inference logits.
    fn infer(&self, batch: &Batch) -> Result<Matrix> {
        Ok(self.forward(batch, &mut Rng::new(0), false)?.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeadKind {
    Moe,
    Gated,
    ConcatLinear,
    ConcatMlp,
    VisualLinear,
    AudioLinear,
}

impl HeadKind {
    pub const ALL: [HeadKind; 6] = [
        HeadKind::Moe,
        HeadKind::Gated,
        HeadKind::ConcatLinear,
        HeadKind::ConcatMlp,
        HeadKind::VisualLinear,
        HeadKind::AudioLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Moe => "moe",
            HeadKind::Gated => "gated",
            HeadKind::ConcatLinear => "concat-linear",
            HeadKind::ConcatMlp => "concat-mlp",
            HeadKind::VisualLinear => "visual-linear",
            HeadKind::AudioLinear => "audio-linear",
        }
    }

    pub fn uses_audio(self) -> bool {
        !matches!(self, HeadKind::Moe | HeadKind::VisualLinear)
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeadKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| validation_err!("unknown head {s:?}"))
    }
}

/// Shape hyperparameters for building any head.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadSpec {
    pub kind: HeadKind,
    pub visual_dim: usize,
    pub audio_dim: usize,
    pub num_classes: usize,
    /// Fusion hidden width `d`, or expert hidden width for the MoE head.
    pub hidden: usize,
    pub experts: usize,
    pub dropout: f64,
}

impl HeadSpec {
    pub fn new(kind: HeadKind, visual_dim: usize, audio_dim: usize) -> Self {
        HeadSpec {
            kind,
            visual_dim,
            audio_dim,
            num_classes: NUM_CLASSES,
            hidden: match kind {
                HeadKind::Moe => visual_dim,
                _ => 512,
            },
            experts: 4,
            dropout: DEFAULT_DROPOUT,
        }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }
}

/// Any of the heads, for callers that pick the architecture at run time.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyHead {
    Moe(MoEHeadParams),
    Gated(GatedFusionParams),
    Baseline(BaselineFusionParams),
    Probe(LinearProbe),
}

pub enum AnyCache {
    Moe(<MoEHeadParams as Head>::Cache),
    Gated(<GatedFusionParams as Head>::Cache),
    Baseline(<BaselineFusionParams as Head>::Cache),
    Probe(<LinearProbe as Head>::Cache),
}

impl AnyHead {
    pub fn init(spec: &HeadSpec, rng: &mut Rng) -> Result<Self> {
        let HeadSpec { visual_dim: dv, audio_dim: da, num_classes: c, hidden: d, .. } = *spec;
        Ok(match spec.kind {
            HeadKind::Moe => AnyHead::Moe(MoEHeadParams::init(
                &MoEConfig { input_dim: dv, num_experts: spec.experts, hidden: d, num_classes: c, dropout: spec.dropout },
                rng,
            )?),
            HeadKind::Gated => AnyHead::Gated(GatedFusionParams::init(dv, da, d, c, spec.dropout, rng)?),
            HeadKind::ConcatLinear => AnyHead::Baseline(BaselineFusionParams::concat_linear(dv, da, c, rng)?),
            HeadKind::ConcatMlp => {
                AnyHead::Baseline(BaselineFusionParams::concat_mlp(dv, da, d, c, spec.dropout, rng)?)
            }
            HeadKind::VisualLinear => AnyHead::Probe(LinearProbe::init(Modality::Visual, dv, c, rng)?),
            HeadKind::AudioLinear => AnyHead::Probe(LinearProbe::init(Modality::Audio, da, c, rng)?),
        })
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            AnyHead::Moe(_) => HeadKind::Moe,
            AnyHead::Gated(_) => HeadKind::Gated,
            AnyHead::Baseline(BaselineFusionParams::ConcatLinear { .. }) => HeadKind::ConcatLinear,
            AnyHead::Baseline(BaselineFusionParams::ConcatMlp { .. }) => HeadKind::ConcatMlp,
            AnyHead::Probe(p) => match p.modality {
                Modality::Visual => HeadKind::VisualLinear,
                Modality::Audio => HeadKind::AudioLinear,
            },
        }
    }

    /// Rebuilds a head from checkpoint tensors, recognizing it by tensor names.
    pub fn from_store(store: &TensorStore) -> Result<Self> {
        if store.contains("moe.router.weight") {
            MoEHeadParams::from_store(store).map(AnyHead::Moe)
        } else if store.contains("fuse.gate.weight") {
            GatedFusionParams::from_store(store).map(AnyHead::Gated)
        } else if store.contains("fuse.concat.weight") || store.contains("fuse.mlp.fc1.weight") {
            BaselineFusionParams::from_store(store).map(AnyHead::Baseline)
        } else if store.names().any(|n| n.starts_with("fuse.probe_")) {
            LinearProbe::from_store(store).map(AnyHead::Probe)
        } else {
            Err(Error::Format("checkpoint does not contain a known head".into()))
        }
    }

    pub fn input_dims(&self) -> (usize, usize) {
        match self {
            AnyHead::Moe(h) => (h.input_dim(), 0),
            AnyHead::Gated(h) => (h.proj_visual.input_dim(), h.proj_audio.input_dim()),
            AnyHead::Baseline(h) => h.input_dims(),
            AnyHead::Probe(p) => match p.modality {
                Modality::Visual => (p.linear.input_dim(), 0),
                Modality::Audio => (0, p.linear.input_dim()),
            },
        }
    }
}

impl ParamSet for AnyHead {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        match self {
            AnyHead::Moe(h) => h.tensors(),
            AnyHead::Gated(h) => h.tensors(),
            AnyHead::Baseline(h) => h.tensors(),
            AnyHead::Probe(h) => h.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            AnyHead::Moe(h) => h.tensors_mut(),
            AnyHead::Gated(h) => h.tensors_mut(),
            AnyHead::Baseline(h) => h.tensors_mut(),
            AnyHead::Probe(h) => h.tensors_mut(),
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            AnyHead::Moe(h) => AnyHead::Moe(h.zeros_like()),
            AnyHead::Gated(h) => AnyHead::Gated(h.zeros_like()),
            AnyHead::Baseline(h) => AnyHead::Baseline(h.zeros_like()),
            AnyHead::Probe(h) => AnyHead::Probe(h.zeros_like()),
        }
    }

    fn to_store(&self) -> TensorStore {
        match self {
            AnyHead::Moe(h) => h.to_store(),
            AnyHead::Gated(h) => h.to_store(),
            AnyHead::Baseline(h) => h.to_store(),
            AnyHead::Probe(h) => h.to_store(),
        }
    }
}

impl Head for AnyHead {
    type Cache = AnyCache;

    fn num_classes(&self) -> usize {
        match self {
            AnyHead::Moe(h) => h.num_classes(),
            AnyHead::Gated(h) => h.num_classes(),
            AnyHead::Baseline(h) => h.num_classes(),
            AnyHead::Probe(h) => h.num_classes(),
        }
    }

    fn forward(&self, batch: &Batch, rng: &mut Rng, training: bool) -> Result<(Matrix, AnyCache)> {
        Ok(match self {
            AnyHead::Moe(h) => {
                let (l, c) = h.forward(batch, rng, training)?;
                (l, AnyCache::Moe(c))
            }
            AnyHead::Gated(h) => {
                let (l, c) = h.forward(batch, rng, training)?;
                (l, AnyCache::Gated(c))
            }
            AnyHead::Baseline(h) => {
                let (l, c) = h.forward(batch, rng, training)?;
                (l, AnyCache::Baseline(c))
            }
            AnyHead::Probe(h) => {
                let (l, c) = h.forward(batch, rng, training)?;
                (l, AnyCache::Probe(c))
            }
        })
    }

    fn backward(&self, batch: &Batch, cache: &AnyCache, grad_logits: &Matrix) -> Result<Self> {
        match (self, cache) {
            (AnyHead::Moe(h), AnyCache::Moe(c)) => h.backward(batch, c, grad_logits).map(AnyHead::Moe),
            (AnyHead::Gated(h), AnyCache::Gated(c)) => h.backward(batch, c, grad_logits).map(AnyHead::Gated),
            (AnyHead::Baseline(h), AnyCache::Baseline(c)) => {
                h.backward(batch, c, grad_logits).map(AnyHead::Baseline)
            }
            (AnyHead::Probe(h), AnyCache::Probe(c)) => h.backward(batch, c, grad_logits).map(AnyHead::Probe),
            _ => Err(validation_err!("cache does not belong to this head")),
        }
    }
}
