#![allow(clippy::needless_range_loop)]

mod common;

use avexpr_core::error::Error;
use avexpr_core::head::{AnyHead, Batch, Head, HeadKind, HeadSpec};
use avexpr_core::metrics::confusion;
use avexpr_core::datamodel::ClassWeights;
use avexpr_core::ndmath::{weighted_soft_ce, Matrix, Rng};
use avexpr_core::smoothing::decide;
use avexpr_core::trainer::{
    adamw_step, cross_validate, soft_targets, train_head, AdamWState, ClassWeighting, FeatureSet, TrainConfig,
};

const MARGIN: f64 = 1.0;

/// Two blobs at ±2 on the first axis with bounded noise, so `x₀ = 0` separates them with margin 1.
fn blobs(rng: &mut Rng, n: usize, dim: usize) -> FeatureSet {
    let mut x = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let c = r % 2;
        for k in 0..dim {
            x.set(r, k, rng.uniform_range(-1.0, 1.0));
        }
        x.set(r, 0, if c == 0 { -2.0 } else { 2.0 } + rng.uniform_range(-1.0, 1.0));
        labels.push(Some(c));
    }
    FeatureSet::new(Batch::visual_only(x), labels).unwrap()
}

fn probe(dim: usize, classes: usize, seed: u64) -> AnyHead {
    let mut spec = HeadSpec::new(HeadKind::VisualLinear, dim, 0);
    spec.num_classes = classes;
    AnyHead::init(&spec, &mut Rng::new(seed)).unwrap()
}

fn fast(seed: u64) -> TrainConfig {
    TrainConfig { lr: 1e-2, batch_size: 32, seed, ..TrainConfig::default() }
}

#[test]
fn separable_blobs_reach_perfect_f1() {
    let mut rng = Rng::new(1);
    let train = blobs(&mut rng, 400, 4);
    let val = blobs(&mut rng, 200, 4);
    // closed-form separator: sign of the first coordinate, with margin
    for (r, l) in val.labels.iter().enumerate() {
        let x0 = val.inputs.visual.get(r, 0);
        assert!(x0.abs() >= MARGIN);
        assert_eq!(usize::from(x0 > 0.0), l.unwrap());
    }
    let out = train_head(probe(4, 2, 0), &train, &val, &fast(0)).unwrap();
    assert_eq!(out.history.len(), 12);
    assert_eq!(out.best_val_f1(), 1.0);
}

#[test]
fn zero_lr_keeps_parameters() {
    let mut rng = Rng::new(2);
    let (train, val) = (blobs(&mut rng, 100, 3), blobs(&mut rng, 50, 3));
    let init = probe(3, 2, 4);
    let cfg = TrainConfig { lr: 0.0, ..fast(1) };
    let out = train_head(init.clone(), &train, &val, &cfg).unwrap();
    assert_eq!(out.params, init);
    assert!(out.history.iter().all(|h| h.val_macro_f1 == out.history[0].val_macro_f1));
    assert_eq!(out.best_epoch, 1);
}

#[test]
fn same_seed_same_history() {
    let mut rng = Rng::new(3);
    let (train, val) = (blobs(&mut rng, 120, 3), blobs(&mut rng, 60, 3));
    let spec = HeadSpec { num_classes: 2, ..HeadSpec::new(HeadKind::Moe, 3, 0).with_hidden(4) };
    let run = || train_head(AnyHead::init(&spec, &mut Rng::new(7)).unwrap(), &train, &val, &fast(9)).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
}

#[test]
fn fixed_batch_loss_decreases() {
    let mut rng = Rng::new(4);
    let data = blobs(&mut rng, 64, 5);
    let targets = soft_targets(&data.labels, 0.1, 2).unwrap();
    let w = ClassWeights::uniform(2);
    for lr in [1e-4, 3e-4, 1e-3] {
        let spec = HeadSpec { num_classes: 2, ..HeadSpec::new(HeadKind::Moe, 5, 0).with_hidden(6) };
        let mut head = AnyHead::init(&spec, &mut Rng::new(5)).unwrap();
        let mut state = AdamWState::new(&head);
        let mut losses = Vec::new();
        for _ in 0..4 {
            let (z, cache) = head.forward(&data.inputs, &mut rng, false).unwrap();
            let (loss, g) = weighted_soft_ce(&z, &targets, &w).unwrap();
            losses.push(loss);
            let grads = head.backward(&data.inputs, &cache, &g).unwrap();
            adamw_step(&mut head, &grads, &mut state, lr, 0.01).unwrap();
        }
        assert!(losses.windows(2).all(|p| p[1] < p[0]), "lr {lr}: {losses:?}");
    }
}

/// Class 1 is rare and overlaps class 0; weighting it 10× must raise its recall.
#[test]
fn upweighting_a_class_raises_its_recall() {
    let recall = |weights: ClassWeighting, seed: u64| {
        let mut rng = Rng::new(100 + seed);
        let make = |rng: &mut Rng, n: usize| {
            let mut x = Matrix::zeros(n, 2);
            let mut labels = Vec::new();
            for r in 0..n {
                let c = usize::from(rng.uniform() < 0.15);
                x.set(r, 0, rng.normal() + if c == 1 { 1.0 } else { 0.0 });
                x.set(r, 1, rng.normal());
                labels.push(Some(c));
            }
            FeatureSet::new(Batch::visual_only(x), labels).unwrap()
        };
        let (train, val) = (make(&mut rng, 600), make(&mut rng, 600));
        let cfg = TrainConfig { class_weighting: weights, mixup_alpha: 0.0, ..fast(seed) };
        let out = train_head(probe(2, 2, seed), &train, &val, &cfg).unwrap();
        let pred: Vec<Option<usize>> = decide(&out.params.infer(&val.inputs).unwrap()).into_iter().map(Some).collect();
        let cm = confusion(&pred, &val.labels, 2).unwrap();
        cm.get(1, 1) as f64 / cm.support()[1] as f64
    };
    let seeds = 0..5u64;
    let base: f64 = seeds.clone().map(|s| recall(ClassWeighting::Uniform, s)).sum::<f64>() / 5.0;
    let boosted: f64 = seeds.map(|s| recall(ClassWeighting::Custom(vec![1.0, 10.0]), s)).sum::<f64>() / 5.0;
    assert!(boosted > base, "recall {base} -> {boosted}");
}

#[test]
fn cross_validation_on_mirrored_videos() {
    let mut rng = Rng::new(6);
    let set = blobs(&mut rng, 200, 3);
    let videos = vec![("a".to_string(), set.clone()), ("b".to_string(), set)];
    let spec = HeadSpec { num_classes: 2, ..HeadSpec::new(HeadKind::VisualLinear, 3, 0) };
    let r = cross_validate(&videos, 2, &spec, &fast(2)).unwrap();
    assert_eq!(r.per_fold.len(), 2);
    assert!((r.per_fold[0] - r.per_fold[1]).abs() < 0.05, "{:?}", r.per_fold);
    assert!((r.mean - (r.per_fold[0] + r.per_fold[1]) / 2.0).abs() < 1e-15);
}

#[test]
fn divergence_is_reported() {
    let mut rng = Rng::new(7);
    let (train, val) = (blobs(&mut rng, 64, 3), blobs(&mut rng, 32, 3));
    let spec = HeadSpec { num_classes: 2, ..HeadSpec::new(HeadKind::Moe, 3, 0).with_hidden(3) };
    let head = AnyHead::init(&spec, &mut Rng::new(1)).unwrap();
    let cfg = TrainConfig { lr: 1e300, weight_decay: 0.0, ..fast(0) };
    match train_head(head, &train, &val, &cfg) {
        Err(Error::Diverged(msg)) => assert!(msg.contains("epoch")),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.history)),
    }
}

#[test]
fn missing_labels_are_skipped_and_empty_sets_rejected() {
    let mut rng = Rng::new(8);
    let mut train = blobs(&mut rng, 80, 3);
    train.labels[0] = None;
    let val = blobs(&mut rng, 40, 3);
    assert!(train_head(probe(3, 2, 0), &train, &val, &fast(0)).is_ok());
    let empty = FeatureSet::new(Batch::visual_only(Matrix::zeros(0, 3)), vec![]).unwrap();
    assert!(train_head(probe(3, 2, 0), &empty, &val, &fast(0)).is_err());
    assert!(train_head(probe(3, 2, 0), &train, &empty, &fast(0)).is_err());
}

#[test]
fn head_dims_must_match_data() {
    let mut rng = Rng::new(9);
    let (train, val) = (blobs(&mut rng, 20, 3), blobs(&mut rng, 20, 3));
    assert!(train_head(probe(4, 2, 0), &train, &val, &fast(0)).is_err());
}
