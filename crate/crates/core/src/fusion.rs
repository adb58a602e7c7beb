//! Audio-visual fusion heads.
//!
//! The gated head projects both modalities into a shared width `d` and mixes
//! them with a sigmoid gate predicted from the raw concatenation:
//!
//! ```text
//! z_v = P_v(f_v)    z_a = P_a(f_a)
//! g   = σ(G([f_v; f_a]))
//! h   = g ⊙ z_v + (1 − g) ⊙ z_a
//! logits = W_o · Drop(LN(h)) + b_o
//! ```
//!
//! Absent audio enters every path as the zero vector. Concatenation baselines
//! and single-modality linear probes share the same [`Head`] interface.

use crate::error::{shape_err, validation_err, Error, Result};
use crate::head::{Batch, Head};
use crate::ndmath::params::{push_linear, push_linear_mut, push_ln, push_ln_mut};
use crate::ndmath::{
    dropout, dropout_backward, gelu, gelu_backward, sigmoid, LayerNorm, Linear, LnCache, Matrix, ParamSet, Rng,
    TensorRef, TensorStore, DEFAULT_DROPOUT,
};

fn check_dims(batch: &Batch, dv: usize, da: usize) -> Result<()> {
    if batch.visual.cols() != dv || batch.audio.cols() != da {
        return Err(shape_err!(
            "head expects ({dv}, {da}) input dims, got ({}, {})",
            batch.visual.cols(),
            batch.audio.cols()
        ));
    }
    batch.ensure_finite()
}

fn check_dropout(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(validation_err!("dropout {p} outside [0, 1)"));
    }
    Ok(())
}

/// Single-sample batch; absent audio becomes zeros.
fn single(f_v: &[f64], f_a: Option<&[f64]>, audio_dim: usize) -> Result<Batch> {
    let audio = match f_a {
        Some(a) => Matrix::row_vector(a),
        None => Matrix::zeros(1, audio_dim),
    };
    Batch::new(Matrix::row_vector(f_v), audio, vec![f_a.is_some()])
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatedFusionParams {
    pub proj_visual: Linear,
    pub proj_audio: Linear,
    pub gate: Linear,
    pub ln: LayerNorm,
    pub head: Linear,
    pub dropout: f64,
}

pub struct GatedCache {
    joint: Matrix,
    z_v: Matrix,
    z_a: Matrix,
    gate: Matrix,
    ln: LnCache,
    dropped: Matrix,
    mask: Option<Matrix>,
}

impl GatedCache {
    pub fn gate(&self) -> &Matrix {
        &self.gate
    }
}

impl GatedFusionParams {
    pub fn init(visual_dim: usize, audio_dim: usize, hidden: usize, classes: usize, p: f64, rng: &mut Rng) -> Result<Self> {
        if visual_dim == 0 || audio_dim == 0 || hidden == 0 || classes == 0 {
            return Err(validation_err!("gated fusion dimensions must be positive"));
        }
        check_dropout(p)?;
        Ok(GatedFusionParams {
            proj_visual: Linear::init(visual_dim, hidden, rng),
            proj_audio: Linear::init(audio_dim, hidden, rng),
            gate: Linear::init(visual_dim + audio_dim, hidden, rng),
            ln: LayerNorm::new(hidden),
            head: Linear::init(hidden, classes, rng),
            dropout: p,
        })
    }

    pub fn hidden(&self) -> usize {
        self.ln.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let (dv, da, d) = (self.proj_visual.input_dim(), self.proj_audio.input_dim(), self.hidden());
        let ok = self.proj_visual.output_dim() == d
            && self.proj_audio.output_dim() == d
            && self.gate.input_dim() == dv + da
            && self.gate.output_dim() == d
            && self.head.input_dim() == d;
        if !ok || d == 0 {
            return Err(shape_err!("inconsistent gated fusion shapes"));
        }
        Ok(())
    }

    pub fn from_store(store: &TensorStore) -> Result<Self> {
        let h = GatedFusionParams {
            proj_visual: store.linear("fuse.proj_v")?,
            proj_audio: store.linear("fuse.proj_a")?,
            gate: store.linear("fuse.gate")?,
            ln: store.layer_norm("fuse.ln")?,
            head: store.linear("fuse.head")?,
            dropout: DEFAULT_DROPOUT,
        };
        h.validate()?;
        Ok(h)
    }
}

/// Logits and gate activations for one frame.
pub fn gated_forward(
    f_v: &[f64],
    f_a: Option<&[f64]>,
    params: &GatedFusionParams,
    rng: &mut Rng,
    training: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let batch = single(f_v, f_a, params.proj_audio.input_dim())?;
    let (logits, cache) = params.forward(&batch, rng, training)?;
    Ok((logits.into_vec(), cache.gate.into_vec()))
}

impl ParamSet for GatedFusionParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        push_linear(&mut out, "fuse.proj_v", &self.proj_visual);
        push_linear(&mut out, "fuse.proj_a", &self.proj_audio);
        push_linear(&mut out, "fuse.gate", &self.gate);
        push_ln(&mut out, "fuse.ln", &self.ln);
        push_linear(&mut out, "fuse.head", &self.head);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        push_linear_mut(&mut out, &mut self.proj_visual);
        push_linear_mut(&mut out, &mut self.proj_audio);
        push_linear_mut(&mut out, &mut self.gate);
        push_ln_mut(&mut out, &mut self.ln);
        push_linear_mut(&mut out, &mut self.head);
        out
    }
}

impl Head for GatedFusionParams {
    type Cache = GatedCache;

    fn num_classes(&self) -> usize {
        self.head.output_dim()
    }

    fn forward(&self, batch: &Batch, rng: &mut Rng, training: bool) -> Result<(Matrix, GatedCache)> {
        check_dims(batch, self.proj_visual.input_dim(), self.proj_audio.input_dim())?;
        let z_v = self.proj_visual.forward(&batch.visual)?;
        let z_a = self.proj_audio.forward(&batch.audio)?;
        let joint = Matrix::hcat(&batch.visual, &batch.audio)?;
        let gate = sigmoid(&self.gate.forward(&joint)?);
        let mut fused = Matrix::zeros(z_v.rows(), z_v.cols());
        for ((h, &g), (&v, &a)) in fused
            .as_mut_slice()
            .iter_mut()
            .zip(gate.as_slice())
            .zip(z_v.as_slice().iter().zip(z_a.as_slice()))
        {
            *h = g * v + (1.0 - g) * a;
        }
        let (normed, ln) = self.ln.forward(&fused)?;
        let (dropped, mask) = dropout(&normed, self.dropout, rng, training)?;
        let logits = self.head.forward(&dropped)?;
        Ok((logits, GatedCache { joint, z_v, z_a, gate, ln, dropped, mask }))
    }

    fn backward(&self, batch: &Batch, c: &GatedCache, grad_logits: &Matrix) -> Result<Self> {
        let mut g = self.zeros_like();
        let d_dropped = self.head.backward(&c.dropped, grad_logits, &mut g.head)?;
        let d_normed = dropout_backward(&d_dropped, c.mask.as_ref())?;
        let d_fused = self.ln.backward(&c.ln, &d_normed, &mut g.ln)?;

        let n = d_fused.as_slice().len();
        let (rows, cols) = d_fused.shape();
        let mut d_zv = vec![0.0; n];
        let mut d_za = vec![0.0; n];
        let mut d_gate_pre = vec![0.0; n];
        let (gs, vs, as_) = (c.gate.as_slice(), c.z_v.as_slice(), c.z_a.as_slice());
        for (i, &dh) in d_fused.as_slice().iter().enumerate() {
            let gi = gs[i];
            d_zv[i] = gi * dh;
            d_za[i] = (1.0 - gi) * dh;
            d_gate_pre[i] = dh * (vs[i] - as_[i]) * gi * (1.0 - gi);
        }
        let d_zv = Matrix::new(rows, cols, d_zv)?;
        let d_za = Matrix::new(rows, cols, d_za)?;
        let d_gate_pre = Matrix::new(rows, cols, d_gate_pre)?;
        self.gate.backward(&c.joint, &d_gate_pre, &mut g.gate)?;
        self.proj_visual.backward(&batch.visual, &d_zv, &mut g.proj_visual)?;
        self.proj_audio.backward(&batch.audio, &d_za, &mut g.proj_audio)?;
        Ok(g)
    }
}

/// Concatenation baselines.
#[derive(Clone, Debug, PartialEq)]
pub enum BaselineFusionParams {
    /// `logits = W [f_v; f_a] + b`
    ConcatLinear { linear: Linear, visual_dim: usize },
    /// linear → GELU → LN → Drop → linear on `[f_v; f_a]`
    ConcatMlp { fc1: Linear, ln: LayerNorm, fc2: Linear, visual_dim: usize, dropout: f64 },
}

pub enum BaselineCache {
    Linear { joint: Matrix },
    Mlp { joint: Matrix, pre: Matrix, ln: LnCache, dropped: Matrix, mask: Option<Matrix> },
}

impl BaselineFusionParams {
    pub fn concat_linear(visual_dim: usize, audio_dim: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        if visual_dim + audio_dim == 0 || classes == 0 {
            return Err(validation_err!("concat-linear dimensions must be positive"));
        }
        Ok(BaselineFusionParams::ConcatLinear { linear: Linear::init(visual_dim + audio_dim, classes, rng), visual_dim })
    }

    pub fn concat_mlp(
        visual_dim: usize,
        audio_dim: usize,
        hidden: usize,
        classes: usize,
        p: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if visual_dim + audio_dim == 0 || hidden == 0 || classes == 0 {
            return Err(validation_err!("concat-mlp dimensions must be positive"));
        }
        check_dropout(p)?;
        Ok(BaselineFusionParams::ConcatMlp {
            fc1: Linear::init(visual_dim + audio_dim, hidden, rng),
            ln: LayerNorm::new(hidden),
            fc2: Linear::init(hidden, classes, rng),
            visual_dim,
            dropout: p,
        })
    }

    /// `(D_v, D_a)`.
    pub fn input_dims(&self) -> (usize, usize) {
        match self {
            BaselineFusionParams::ConcatLinear { linear, visual_dim } => (*visual_dim, linear.input_dim() - visual_dim),
            BaselineFusionParams::ConcatMlp { fc1, visual_dim, .. } => (*visual_dim, fc1.input_dim() - visual_dim),
        }
    }

    pub fn from_store(store: &TensorStore) -> Result<Self> {
        let visual_dim = store
            .get("fuse.visual_dim")
            .ok()
            .and_then(|t| t.data.first().copied())
            .ok_or_else(|| Error::Format("baseline checkpoint lacks fuse.visual_dim".into()))?
            as usize;
        let h = if store.contains("fuse.concat.weight") {
            BaselineFusionParams::ConcatLinear { linear: store.linear("fuse.concat")?, visual_dim }
        } else {
            let fc1 = store.linear("fuse.mlp.fc1")?;
            let ln = store.layer_norm("fuse.mlp.ln")?;
            let fc2 = store.linear("fuse.mlp.fc2")?;
            if fc1.output_dim() != ln.dim() || fc2.input_dim() != ln.dim() {
                return Err(shape_err!("inconsistent concat-mlp shapes"));
            }
            BaselineFusionParams::ConcatMlp { fc1, ln, fc2, visual_dim, dropout: DEFAULT_DROPOUT }
        };
        let (dv, _) = h.input_dims();
        let total = match &h {
            BaselineFusionParams::ConcatLinear { linear, .. } => linear.input_dim(),
            BaselineFusionParams::ConcatMlp { fc1, .. } => fc1.input_dim(),
        };
        if dv > total {
            return Err(shape_err!("visual width {dv} exceeds concatenated width {total}"));
        }
        Ok(h)
    }
}

/// Logits for one frame from a concatenation baseline.
pub fn baseline_forward(
    f_v: &[f64],
    f_a: Option<&[f64]>,
    params: &BaselineFusionParams,
    rng: &mut Rng,
    training: bool,
) -> Result<Vec<f64>> {
    let batch = single(f_v, f_a, params.input_dims().1)?;
    Ok(params.forward(&batch, rng, training)?.0.into_vec())
}

impl ParamSet for BaselineFusionParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        match self {
            BaselineFusionParams::ConcatLinear { linear, .. } => push_linear(&mut out, "fuse.concat", linear),
            BaselineFusionParams::ConcatMlp { fc1, ln, fc2, .. } => {
                push_linear(&mut out, "fuse.mlp.fc1", fc1);
                push_ln(&mut out, "fuse.mlp.ln", ln);
                push_linear(&mut out, "fuse.mlp.fc2", fc2);
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        match self {
            BaselineFusionParams::ConcatLinear { linear, .. } => push_linear_mut(&mut out, linear),
            BaselineFusionParams::ConcatMlp { fc1, ln, fc2, .. } => {
                push_linear_mut(&mut out, fc1);
                push_ln_mut(&mut out, ln);
                push_linear_mut(&mut out, fc2);
            }
        }
        out
    }

    fn to_store(&self) -> TensorStore {
        let mut store = default_store(self);
        // the split point is not recoverable from shapes alone
        store.tensors.push(crate::ndmath::NamedTensor {
            name: "fuse.visual_dim".into(),
            dims: vec![1],
            data: vec![self.input_dims().0 as f32],
        });
        store
    }
}

fn default_store<P: ParamSet>(p: &P) -> TensorStore {
    TensorStore {
        tensors: p
            .tensors()
            .into_iter()
            .map(|t| crate::ndmath::NamedTensor {
                name: t.name,
                dims: t.dims,
                data: t.data.iter().map(|&v| v as f32).collect(),
            })
            .collect(),
    }
}

impl Head for BaselineFusionParams {
    type Cache = BaselineCache;

    fn num_classes(&self) -> usize {
        match self {
            BaselineFusionParams::ConcatLinear { linear, .. } => linear.output_dim(),
            BaselineFusionParams::ConcatMlp { fc2, .. } => fc2.output_dim(),
        }
    }

    fn forward(&self, batch: &Batch, rng: &mut Rng, training: bool) -> Result<(Matrix, BaselineCache)> {
        let (dv, da) = self.input_dims();
        check_dims(batch, dv, da)?;
        let joint = Matrix::hcat(&batch.visual, &batch.audio)?;
        match self {
            BaselineFusionParams::ConcatLinear { linear, .. } => {
                let logits = linear.forward(&joint)?;
                Ok((logits, BaselineCache::Linear { joint }))
            }
            BaselineFusionParams::ConcatMlp { fc1, ln, fc2, dropout: p, .. } => {
                let pre = fc1.forward(&joint)?;
                let (normed, ln_cache) = ln.forward(&gelu(&pre))?;
                let (dropped, mask) = dropout(&normed, *p, rng, training)?;
                let logits = fc2.forward(&dropped)?;
                Ok((logits, BaselineCache::Mlp { joint, pre, ln: ln_cache, dropped, mask }))
            }
        }
    }

    fn backward(&self, _batch: &Batch, cache: &BaselineCache, grad_logits: &Matrix) -> Result<Self> {
        let mut g = self.zeros_like();
        match (self, &mut g, cache) {
            (
                BaselineFusionParams::ConcatLinear { linear, .. },
                BaselineFusionParams::ConcatLinear { linear: gl, .. },
                BaselineCache::Linear { joint },
            ) => {
                linear.backward(joint, grad_logits, gl)?;
            }
            (
                BaselineFusionParams::ConcatMlp { fc1, ln, fc2, .. },
                BaselineFusionParams::ConcatMlp { fc1: g1, ln: gln, fc2: g2, .. },
                BaselineCache::Mlp { joint, pre, ln: ln_cache, dropped, mask },
            ) => {
                let d_dropped = fc2.backward(dropped, grad_logits, g2)?;
                let d_normed = dropout_backward(&d_dropped, mask.as_ref())?;
                let d_act = ln.backward(ln_cache, &d_normed, gln)?;
                let d_pre = gelu_backward(pre, &d_act)?;
                fc1.backward(joint, &d_pre, g1)?;
            }
            _ => return Err(validation_err!("cache does not match baseline kind")),
        }
        Ok(g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Visual,
    Audio,
}

/// Linear classifier on one modality.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    pub modality: Modality,
    pub linear: Linear,
}

impl LinearProbe {
    pub fn init(modality: Modality, dim: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        if dim == 0 || classes == 0 {
            return Err(validation_err!("{modality:?} probe needs positive dimensions"));
        }
        Ok(LinearProbe { modality, linear: Linear::init(dim, classes, rng) })
    }

    fn prefix(&self) -> &'static str {
        match self.modality {
            Modality::Visual => "fuse.probe_visual",
            Modality::Audio => "fuse.probe_audio",
        }
    }

    fn input<'b>(&self, batch: &'b Batch) -> &'b Matrix {
        match self.modality {
            Modality::Visual => &batch.visual,
            Modality::Audio => &batch.audio,
        }
    }

    pub fn from_store(store: &TensorStore) -> Result<Self> {
        if store.contains("fuse.probe_visual.weight") {
            Ok(LinearProbe { modality: Modality::Visual, linear: store.linear("fuse.probe_visual")? })
        } else {
            Ok(LinearProbe { modality: Modality::Audio, linear: store.linear("fuse.probe_audio")? })
        }
    }
}

impl ParamSet for LinearProbe {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        push_linear(&mut out, self.prefix(), &self.linear);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        push_linear_mut(&mut out, &mut self.linear);
        out
    }
}

impl Head for LinearProbe {
    type Cache = ();

    fn num_classes(&self) -> usize {
        self.linear.output_dim()
    }

    fn forward(&self, batch: &Batch, _rng: &mut Rng, _training: bool) -> Result<(Matrix, ())> {
        let x = self.input(batch);
        x.ensure_finite("probe input")?;
        Ok((self.linear.forward(x)?, ()))
    }

    fn backward(&self, batch: &Batch, _cache: &(), grad_logits: &Matrix) -> Result<Self> {
        let mut g = self.zeros_like();
        self.linear.backward(self.input(batch), grad_logits, &mut g.linear)?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::NUM_CLASSES;

    #[test]
    fn concat_linear_reference_count() {
        let h = BaselineFusionParams::concat_linear(1024, 1024, NUM_CLASSES, &mut Rng::new(0)).unwrap();
        assert_eq!(h.param_count(), 2048 * 8 + 8);
        assert_eq!(h.param_count(), 16_392);
    }

    #[test]
    fn concat_mlp_and_gated_reference_counts() {
        let mut rng = Rng::new(0);
        let mlp = BaselineFusionParams::concat_mlp(1024, 1024, 512, 8, 0.1, &mut rng).unwrap();
        assert_eq!(mlp.param_count(), 2048 * 512 + 512 + 2 * 512 + 512 * 8 + 8);
        let gated = GatedFusionParams::init(1024, 1024, 512, 8, 0.1, &mut rng).unwrap();
        let want = 2 * (1024 * 512 + 512) + (2048 * 512 + 512) + 2 * 512 + (512 * 8 + 8);
        assert_eq!(gated.param_count(), want);
        assert_eq!(want, 2_103_816);
    }

    #[test]
    fn minimal_gated_count() {
        // d = 1, D_v = D_a = 1, C = 2: P_v 2, P_a 2, G 3, LN 2, head 4
        let h = GatedFusionParams::init(1, 1, 1, 2, 0.0, &mut Rng::new(0)).unwrap();
        assert_eq!(h.param_count(), 13);
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut h = BaselineFusionParams::concat_linear(3, 2, 4, &mut Rng::new(0)).unwrap();
        if let BaselineFusionParams::ConcatLinear { linear, .. } = &mut h {
            linear.weight = Matrix::zeros(5, 4);
            linear.bias = vec![1.0, 2.0, 3.0, 4.0];
        }
        let out = baseline_forward(&[9.0, 8.0, 7.0], Some(&[1.0, 1.0]), &h, &mut Rng::new(0), false).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn selector_weight_copies_visual() {
        // W = [I_C | 0] picks the first C visual coordinates
        let (dv, da, c) = (4, 3, 2);
        let mut w = Matrix::zeros(dv + da, c);
        for k in 0..c {
            w.set(k, k, 1.0);
        }
        let h = BaselineFusionParams::ConcatLinear { linear: Linear { weight: w, bias: vec![0.0; c] }, visual_dim: dv };
        let out = baseline_forward(&[0.5, -2.0, 7.0, 1.0], Some(&[3.0, 3.0, 3.0]), &h, &mut Rng::new(0), false).unwrap();
        assert_eq!(out, vec![0.5, -2.0]);
    }

    #[test]
    fn absent_audio_equals_zero_audio() {
        let h = GatedFusionParams::init(3, 2, 4, 5, 0.1, &mut Rng::new(9)).unwrap();
        let fv = [0.2, -0.1, 1.5];
        let a = gated_forward(&fv, None, &h, &mut Rng::new(0), false).unwrap();
        let b = gated_forward(&fv, Some(&[0.0, 0.0]), &h, &mut Rng::new(0), false).unwrap();
        assert_eq!(a, b);
        assert!(a.1.iter().all(|&g| g > 0.0 && g < 1.0));
    }

    #[test]
    fn checkpoint_round_trips_for_baselines() {
        let mut rng = Rng::new(1);
        for h in [
            BaselineFusionParams::concat_linear(3, 2, 4, &mut rng).unwrap(),
            BaselineFusionParams::concat_mlp(3, 2, 6, 4, 0.1, &mut rng).unwrap(),
        ] {
            let back = BaselineFusionParams::from_store(&h.to_store()).unwrap();
            assert_eq!(back.input_dims(), (3, 2));
            assert_eq!(back.param_count(), h.param_count());
        }
    }
}
