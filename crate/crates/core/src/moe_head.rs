//! Mixture-of-experts classification head over a backbone feature `u`:
//!
//! ```text
//! x = LN_in(u)
//! α = softmax(router(x))                 dense routing over M experts
//! ũ = Σ_m α_m · expert_m(x)              expert = linear → GELU → linear
//! logits = classifier(Drop(LN_out(ũ)))
//! ```

use crate::error::{shape_err, validation_err, Result};
use crate::head::{Batch, Head};
use crate::ndmath::params::{push_linear, push_linear_mut, push_ln, push_ln_mut};
use crate::ndmath::{
    dropout, dropout_backward, gelu, gelu_backward, softmax_backward_rows, softmax_rows, LayerNorm, Linear,
    LnCache, Matrix, ParamSet, Rng, TensorRef, TensorStore, DEFAULT_DROPOUT,
};
use crate::NUM_CLASSES;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoEConfig {
    pub input_dim: usize,
    pub num_experts: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub dropout: f64,
}

impl MoEConfig {
    /// Four experts with hidden width equal to the input width.
    pub fn new(input_dim: usize) -> Self {
        MoEConfig { input_dim, num_experts: 4, hidden: input_dim, num_classes: NUM_CLASSES, dropout: DEFAULT_DROPOUT }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_experts == 0 || self.hidden == 0 || self.num_classes == 0 {
            return Err(validation_err!("MoE head dimensions must all be positive: {self:?}"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(validation_err!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// One expert MLP, `D → H → D`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expert {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MoEHeadParams {
    pub ln_in: LayerNorm,
    pub router: Linear,
    pub experts: Vec<Expert>,
    pub ln_out: LayerNorm,
    pub classifier: Linear,
    pub dropout: f64,
}

pub struct MoECache {
    ln_in: LnCache,
    normed: Matrix,
    routing: Matrix,
    pre_act: Vec<Matrix>,
    act: Vec<Matrix>,
    expert_out: Vec<Matrix>,
    ln_out: LnCache,
    dropped: Matrix,
    mask: Option<Matrix>,
}

impl MoECache {
    /// Routing weights `α`, one row per sample.
    pub fn routing(&self) -> &Matrix {
        &self.routing
    }
}

impl MoEHeadParams {
    pub fn init(cfg: &MoEConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.input_dim;
        let router = Linear::init(d, cfg.num_experts, rng);
        let experts = (0..cfg.num_experts)
            .map(|_| Expert { fc1: Linear::init(d, cfg.hidden, rng), fc2: Linear::init(cfg.hidden, d, rng) })
            .collect();
        Ok(MoEHeadParams {
            ln_in: LayerNorm::new(d),
            router,
            experts,
            ln_out: LayerNorm::new(d),
            classifier: Linear::init(d, cfg.num_classes, rng),
            dropout: cfg.dropout,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.ln_in.dim()
    }

    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.input_dim();
        let m = self.experts.len();
        if m == 0 || d == 0 {
            return Err(validation_err!("MoE head needs at least one expert and a positive width"));
        }
        let h = self.experts[0].fc1.output_dim();
        let shapes_ok = self.router.input_dim() == d
            && self.router.output_dim() == m
            && self.ln_out.dim() == d
            && self.classifier.input_dim() == d
            && self.experts.iter().all(|e| {
                e.fc1.input_dim() == d && e.fc1.output_dim() == h && e.fc2.input_dim() == h && e.fc2.output_dim() == d
            });
        if !shapes_ok {
            return Err(shape_err!("inconsistent MoE head shapes"));
        }
        Ok(())
    }

    pub fn from_store(store: &TensorStore) -> Result<Self> {
        let mut experts = Vec::new();
        while store.contains(&format!("moe.expert{}.fc1.weight", experts.len())) {
            let m = experts.len();
            experts.push(Expert {
                fc1: store.linear(&format!("moe.expert{m}.fc1"))?,
                fc2: store.linear(&format!("moe.expert{m}.fc2"))?,
            });
        }
        let head = MoEHeadParams {
            ln_in: store.layer_norm("moe.ln_in")?,
            router: store.linear("moe.router")?,
            experts,
            ln_out: store.layer_norm("moe.ln_out")?,
            classifier: store.linear("moe.classifier")?,
            dropout: DEFAULT_DROPOUT,
        };
        head.validate()?;
        Ok(head)
    }
}

/// Logits and routing weights for a batch of backbone features.
pub fn moe_forward(u: &Matrix, params: &MoEHeadParams, rng: &mut Rng, training: bool) -> Result<(Matrix, Matrix)> {
    let (logits, cache) = params.forward(&Batch::visual_only(u.clone()), rng, training)?;
    Ok((logits, cache.routing))
}

/// Number of scalar parameters.
pub fn moe_param_count(params: &MoEHeadParams) -> usize {
    params.param_count()
}

impl ParamSet for MoEHeadParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        push_ln(&mut out, "moe.ln_in", &self.ln_in);
        push_linear(&mut out, "moe.router", &self.router);
        for (m, e) in self.experts.iter().enumerate() {
            push_linear(&mut out, &format!("moe.expert{m}.fc1"), &e.fc1);
            push_linear(&mut out, &format!("moe.expert{m}.fc2"), &e.fc2);
        }
        push_ln(&mut out, "moe.ln_out", &self.ln_out);
        push_linear(&mut out, "moe.classifier", &self.classifier);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        push_ln_mut(&mut out, &mut self.ln_in);
        push_linear_mut(&mut out, &mut self.router);
        for e in &mut self.experts {
            push_linear_mut(&mut out, &mut e.fc1);
            push_linear_mut(&mut out, &mut e.fc2);
        }
        push_ln_mut(&mut out, &mut self.ln_out);
        push_linear_mut(&mut out, &mut self.classifier);
        out
    }
}

impl Head for MoEHeadParams {
    type Cache = MoECache;

    fn num_classes(&self) -> usize {
        self.classifier.output_dim()
    }

    fn forward(&self, batch: &Batch, rng: &mut Rng, training: bool) -> Result<(Matrix, MoECache)> {
        let u = &batch.visual;
        if u.cols() != self.input_dim() {
            return Err(shape_err!("MoE head expects {} features, got {}", self.input_dim(), u.cols()));
        }
        u.ensure_finite("moe input")?;
        let (normed, ln_in) = self.ln_in.forward(u)?;
        let routing = softmax_rows(&self.router.forward(&normed)?);

        let mut mixed = Matrix::zeros(u.rows(), self.input_dim());
        let mut pre_act = Vec::with_capacity(self.experts.len());
        let mut act = Vec::with_capacity(self.experts.len());
        let mut expert_out = Vec::with_capacity(self.experts.len());
        for (m, e) in self.experts.iter().enumerate() {
            let h = e.fc1.forward(&normed)?;
            let a = gelu(&h);
            let out = e.fc2.forward(&a)?;
            for r in 0..u.rows() {
                let alpha = routing.get(r, m);
                for (acc, &v) in mixed.row_mut(r).iter_mut().zip(out.row(r)) {
                    *acc += alpha * v;
                }
            }
            pre_act.push(h);
            act.push(a);
            expert_out.push(out);
        }

        let (ln_y, ln_out) = self.ln_out.forward(&mixed)?;
        let (dropped, mask) = dropout(&ln_y, self.dropout, rng, training)?;
        let logits = self.classifier.forward(&dropped)?;
        Ok((logits, MoECache { ln_in, normed, routing, pre_act, act, expert_out, ln_out, dropped, mask }))
    }

    fn backward(&self, _batch: &Batch, c: &MoECache, grad_logits: &Matrix) -> Result<Self> {
        let mut g = self.zeros_like();
        let d_dropped = self.classifier.backward(&c.dropped, grad_logits, &mut g.classifier)?;
        let d_ln_y = dropout_backward(&d_dropped, c.mask.as_ref())?;
        let d_mixed = self.ln_out.backward(&c.ln_out, &d_ln_y, &mut g.ln_out)?;

        let rows = d_mixed.rows();
        let m_count = self.experts.len();
        let mut d_routing = Matrix::zeros(rows, m_count);
        let mut d_normed = Matrix::zeros(rows, self.input_dim());
        for (m, e) in self.experts.iter().enumerate() {
            let mut d_out = Matrix::zeros(rows, self.input_dim());
            for r in 0..rows {
                let dm = d_mixed.row(r);
                let dot: f64 = dm.iter().zip(c.expert_out[m].row(r)).map(|(a, b)| a * b).sum();
                d_routing.set(r, m, dot);
                let alpha = c.routing.get(r, m);
                for (o, &v) in d_out.row_mut(r).iter_mut().zip(dm) {
                    *o = alpha * v;
                }
            }
            let ge = &mut g.experts[m];
            let d_act = e.fc2.backward(&c.act[m], &d_out, &mut ge.fc2)?;
            let d_pre = gelu_backward(&c.pre_act[m], &d_act)?;
            d_normed.add_assign(&e.fc1.backward(&c.normed, &d_pre, &mut ge.fc1)?)?;
        }
        let d_logits_router = softmax_backward_rows(&c.routing, &d_routing)?;
        d_normed.add_assign(&self.router.backward(&c.normed, &d_logits_router, &mut g.router)?)?;
        self.ln_in.backward(&c.ln_in, &d_normed, &mut g.ln_in)?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(m: usize) -> MoEHeadParams {
        let cfg = MoEConfig { input_dim: 2, num_experts: m, hidden: 2, num_classes: 2, dropout: 0.0 };
        MoEHeadParams::init(&cfg, &mut Rng::new(5)).unwrap()
    }

    #[test]
    fn param_count_by_shape_arithmetic() {
        // ln_in 4 + router (2·1+1) 3 + expert (2·2+2)+(2·2+2) 12 + ln_out 4 + classifier (2·2+2) 6
        assert_eq!(moe_param_count(&small(1)), 4 + 3 + 12 + 4 + 6);
        let one = moe_param_count(&small(1));
        let two = moe_param_count(&small(2));
        // one more expert (12) and one more router column (2 weights + 1 bias)
        assert_eq!(two - one, 12 + 3);
        let eight = moe_param_count(&small(8));
        let four = moe_param_count(&small(4));
        assert_eq!(eight - four, 4 * (12 + 3));
    }

    #[test]
    fn zero_size_rejected() {
        let cfg = MoEConfig { input_dim: 0, ..MoEConfig::new(4) };
        assert!(MoEHeadParams::init(&cfg, &mut Rng::new(0)).is_err());
        let cfg = MoEConfig { num_experts: 0, ..MoEConfig::new(4) };
        assert!(MoEHeadParams::init(&cfg, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn zero_router_routes_uniformly() {
        let mut h = small(4);
        h.router = Linear::zeros(2, 4);
        let u = Matrix::from_rows(&[[0.3, -2.0], [5.0, 1.0], [0.0, 0.1]]).unwrap();
        let (_, routing) = moe_forward(&u, &h, &mut Rng::new(0), false).unwrap();
        assert!(routing.as_slice().iter().all(|&a| (a - 0.25).abs() < 1e-15));
    }

    #[test]
    fn single_expert_routing_is_one() {
        let h = small(1);
        let u = Matrix::from_rows(&[[1.0, 2.0], [-1.0, 0.5]]).unwrap();
        let (_, routing) = moe_forward(&u, &h, &mut Rng::new(0), false).unwrap();
        assert!(routing.as_slice().iter().all(|&a| a == 1.0));
    }

    #[test]
    fn inference_is_deterministic() {
        let mut h = small(3);
        h.dropout = 0.5;
        let u = Matrix::from_rows(&[[1.0, 2.0], [-1.0, 0.5]]).unwrap();
        let a = moe_forward(&u, &h, &mut Rng::new(1), false).unwrap().0;
        let b = moe_forward(&u, &h, &mut Rng::new(2), false).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_round_trip() {
        let h = small(3);
        let back = MoEHeadParams::from_store(&h.to_store()).unwrap();
        assert_eq!(back.num_experts(), 3);
        assert_eq!(back.param_count(), h.param_count());
    }
}
