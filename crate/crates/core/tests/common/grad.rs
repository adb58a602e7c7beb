//! Finite-difference gradient suites, one per differentiable operation.

use avexpr_core::datamodel::ClassWeights;
use avexpr_core::fusion::{BaselineFusionParams, GatedFusionParams};
use avexpr_core::head::{Batch, Head};
use avexpr_core::moe_head::{MoEConfig, MoEHeadParams};
use avexpr_core::ndmath::{
    dropout, dropout_backward, gelu, gelu_backward, weighted_soft_ce, LayerNorm, Linear, Matrix, ParamSet, Rng,
    TensorRef,
};

use super::{fd_input, fd_params, random_matrix, random_targets};

pub const SHAPES_PER_OP: usize = 20;

#[derive(Clone)]
struct Lin(Linear);

impl ParamSet for Lin {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![
            TensorRef { name: "w".into(), dims: vec![], data: self.0.weight.as_slice() },
            TensorRef { name: "b".into(), dims: vec![], data: &self.0.bias },
        ]
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.0.weight.as_mut_slice(), &mut self.0.bias]
    }
}

#[derive(Clone)]
struct Ln(LayerNorm);

impl ParamSet for Ln {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![
            TensorRef { name: "g".into(), dims: vec![], data: &self.0.gain },
            TensorRef { name: "b".into(), dims: vec![], data: &self.0.bias },
        ]
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.0.gain, &mut self.0.bias]
    }
}

/// `Σ R ⊙ y`, whose gradient with respect to `y` is `R`.
fn probe(y: &Matrix, r: &Matrix) -> f64 {
    y.as_slice().iter().zip(r.as_slice()).map(|(a, b)| a * b).sum()
}

fn dim(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

pub fn linear(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..SHAPES_PER_OP {
        let (b, i, o) = (dim(&mut rng, 1, 5), dim(&mut rng, 1, 6), dim(&mut rng, 1, 6));
        let mut lin = Linear::init(i, o, &mut rng);
        lin.bias.iter_mut().for_each(|v| *v = rng.normal());
        let x = random_matrix(&mut rng, b, i, 1.0);
        let r = random_matrix(&mut rng, b, o, 1.0);
        let mut g = Linear::zeros(i, o);
        let gx = lin.backward(&x, &r, &mut g).unwrap();
        worst = worst.max(fd_params(&Lin(lin.clone()), &Lin(g), |p| probe(&p.0.forward(&x).unwrap(), &r)));
        worst = worst.max(fd_input(&x, &gx, |x| probe(&lin.forward(x).unwrap(), &r)));
    }
    worst
}

pub fn layer_norm(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..SHAPES_PER_OP {
        let (b, d) = (dim(&mut rng, 1, 5), dim(&mut rng, 2, 7));
        let mut ln = LayerNorm::new(d);
        ln.gain.iter_mut().for_each(|v| *v = 1.0 + 0.5 * rng.normal());
        ln.bias.iter_mut().for_each(|v| *v = rng.normal());
        let x = random_matrix(&mut rng, b, d, 2.0);
        let r = random_matrix(&mut rng, b, d, 1.0);
        let (_, cache) = ln.forward(&x).unwrap();
        let mut g = Ln(LayerNorm::new(d));
        g.0.gain.iter_mut().for_each(|v| *v = 0.0);
        let gx = ln.backward(&cache, &r, &mut g.0).unwrap();
        worst = worst.max(fd_params(&Ln(ln.clone()), &g, |p| probe(&p.0.forward(&x).unwrap().0, &r)));
        worst = worst.max(fd_input(&x, &gx, |x| probe(&ln.forward(x).unwrap().0, &r)));
    }
    worst
}

/// Dropout with inference mode and with a mask replayed from a fixed seed.
pub fn dropout_paths(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for case in 0..SHAPES_PER_OP {
        let (b, d) = (dim(&mut rng, 1, 5), dim(&mut rng, 1, 7));
        let p = 0.5 * rng.uniform();
        let training = case % 2 == 1;
        let x = random_matrix(&mut rng, b, d, 1.0);
        let r = random_matrix(&mut rng, b, d, 1.0);
        let mask_seed = rng.next_u64();
        let run = |x: &Matrix| dropout(x, p, &mut Rng::new(mask_seed), training).unwrap();
        let (_, mask) = run(&x);
        let gx = dropout_backward(&r, mask.as_ref()).unwrap();
        worst = worst.max(fd_input(&x, &gx, |x| probe(&run(x).0, &r)));
    }
    worst
}

pub fn gelu_op(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..SHAPES_PER_OP {
        let (b, d) = (dim(&mut rng, 1, 5), dim(&mut rng, 1, 7));
        let x = random_matrix(&mut rng, b, d, 2.0);
        let r = random_matrix(&mut rng, b, d, 1.0);
        let gx = gelu_backward(&x, &r).unwrap();
        worst = worst.max(fd_input(&x, &gx, |x| probe(&gelu(x), &r)));
    }
    worst
}

fn random_weights(rng: &mut Rng, c: usize) -> ClassWeights {
    ClassWeights::from_raw((0..c).map(|_| 0.2 + 2.0 * rng.uniform()).collect()).unwrap()
}

pub fn softmax_ce(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..SHAPES_PER_OP {
        let (b, c) = (dim(&mut rng, 1, 6), dim(&mut rng, 2, 8));
        let z = random_matrix(&mut rng, b, c, 3.0);
        let y = random_targets(&mut rng, b, c);
        let w = random_weights(&mut rng, c);
        let (_, g) = weighted_soft_ce(&z, &y, &w).unwrap();
        worst = worst.max(fd_input(&z, &g, |z| weighted_soft_ce(z, &y, &w).unwrap().0));
    }
    worst
}

fn random_batch(rng: &mut Rng, b: usize, dv: usize, da: usize) -> Batch {
    let visual = random_matrix(rng, b, dv, 1.0);
    let mut audio = random_matrix(rng, b, da, 1.0);
    let present: Vec<bool> = (0..b).map(|_| rng.bernoulli(0.8)).collect();
    for (r, &p) in present.iter().enumerate() {
        if !p {
            audio.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Batch::new(visual, audio, present).unwrap()
}

/// End-to-end loss gradient of a head. Even cases run in inference mode,
/// odd cases replay one dropout mask.
fn head_check<H: Head>(head: &H, batch: &Batch, rng: &mut Rng, training: bool) -> f64 {
    let c = head.num_classes();
    let y = random_targets(rng, batch.len(), c);
    let w = random_weights(rng, c);
    let mask_seed = rng.next_u64();
    let loss = |h: &H| {
        let (z, _) = h.forward(batch, &mut Rng::new(mask_seed), training).unwrap();
        weighted_soft_ce(&z, &y, &w).unwrap().0
    };
    let (z, cache) = head.forward(batch, &mut Rng::new(mask_seed), training).unwrap();
    let (_, gz) = weighted_soft_ce(&z, &y, &w).unwrap();
    let grads = head.backward(batch, &cache, &gz).unwrap();
    fd_params(head, &grads, loss)
}

/// Randomizes every parameter so layer-norm gains and biases are not at their defaults.
fn jitter<P: ParamSet>(p: &mut P, rng: &mut Rng) {
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|v| *v += 0.3 * rng.normal());
    }
}

pub fn moe_head(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for case in 0..SHAPES_PER_OP {
        let cfg = MoEConfig {
            input_dim: dim(&mut rng, 2, 5),
            num_experts: dim(&mut rng, 1, 3),
            hidden: dim(&mut rng, 1, 4),
            num_classes: dim(&mut rng, 2, 4),
            dropout: 0.3 * rng.uniform(),
        };
        let mut head = MoEHeadParams::init(&cfg, &mut rng).unwrap();
        jitter(&mut head, &mut rng);
        let b = dim(&mut rng, 1, 4);
        let batch = Batch::visual_only(random_matrix(&mut rng, b, cfg.input_dim, 1.0));
        worst = worst.max(head_check(&head, &batch, &mut rng, case % 2 == 1));
    }
    worst
}

pub fn gated_fusion(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for case in 0..SHAPES_PER_OP {
        let (dv, da, d, c) = (dim(&mut rng, 1, 4), dim(&mut rng, 1, 4), dim(&mut rng, 2, 5), dim(&mut rng, 2, 4));
        let mut head = GatedFusionParams::init(dv, da, d, c, 0.3 * rng.uniform(), &mut rng).unwrap();
        jitter(&mut head, &mut rng);
        let b = dim(&mut rng, 1, 4);
        let batch = random_batch(&mut rng, b, dv, da);
        worst = worst.max(head_check(&head, &batch, &mut rng, case % 2 == 1));
    }
    worst
}

pub fn concat_linear(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..SHAPES_PER_OP {
        let (dv, da, c) = (dim(&mut rng, 1, 4), dim(&mut rng, 1, 4), dim(&mut rng, 2, 4));
        let mut head = BaselineFusionParams::concat_linear(dv, da, c, &mut rng).unwrap();
        jitter(&mut head, &mut rng);
        let b = dim(&mut rng, 1, 4);
        let batch = random_batch(&mut rng, b, dv, da);
        worst = worst.max(head_check(&head, &batch, &mut rng, false));
    }
    worst
}

pub fn concat_mlp(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for case in 0..SHAPES_PER_OP {
        let (dv, da, d, c) = (dim(&mut rng, 1, 4), dim(&mut rng, 1, 4), dim(&mut rng, 2, 5), dim(&mut rng, 2, 4));
        let mut head = BaselineFusionParams::concat_mlp(dv, da, d, c, 0.3 * rng.uniform(), &mut rng).unwrap();
        jitter(&mut head, &mut rng);
        let b = dim(&mut rng, 1, 4);
        let batch = random_batch(&mut rng, b, dv, da);
        worst = worst.max(head_check(&head, &batch, &mut rng, case % 2 == 1));
    }
    worst
}

/// Every suite with its name.
pub fn all(seed: u64) -> Vec<(&'static str, f64)> {
    vec![
        ("linear", linear(seed)),
        ("layer_norm", layer_norm(seed + 1)),
        ("dropout", dropout_paths(seed + 2)),
        ("gelu", gelu_op(seed + 3)),
        ("softmax+ce", softmax_ce(seed + 4)),
        ("moe head", moe_head(seed + 5)),
        ("gated fusion", gated_fusion(seed + 6)),
        ("concat-linear", concat_linear(seed + 7)),
        ("concat-mlp", concat_mlp(seed + 8)),
    ]
}
