//! Head training: AdamW, soft targets with label smoothing and feature-space
//! mixup, class weighting, best-epoch selection and k-fold orchestration.

mod adamw;

pub use adamw::{adamw_step, AdamWState};

use serde::Serialize;

use crate::datamodel::{compute_class_weights, make_folds, ClassWeights};
use crate::error::{validation_err, Error, Result};
use crate::head::{AnyHead, Batch, Head, HeadSpec};
use crate::metrics::{confusion, macro_f1};
use crate::ndmath::{weighted_soft_ce, Matrix, Rng};
use crate::par;
use crate::smoothing::decide;

#[derive(Clone, Debug, PartialEq)]
pub enum ClassWeighting {
    Uniform,
    /// Inverse frequency over the training labels.
    Balanced,
    Custom(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub label_smoothing: f64,
    /// `0` disables mixup.
    pub mixup_alpha: f64,
    pub seed: u64,
    pub class_weighting: ClassWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 12,
            lr: 3e-4,
            weight_decay: 1e-2,
            batch_size: 256,
            label_smoothing: 0.1,
            mixup_alpha: 0.2,
            seed: 0,
            class_weighting: ClassWeighting::Balanced,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(validation_err!("epochs and batch size must be positive"));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) || !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(validation_err!("lr and weight decay must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(validation_err!("label smoothing {} outside [0,1)", self.label_smoothing));
        }
        if !(self.mixup_alpha.is_finite() && self.mixup_alpha >= 0.0) {
            return Err(validation_err!("mixup alpha must be non-negative"));
        }
        Ok(())
    }
}

/// Frame inputs with their labels; `None` marks an unlabeled frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub inputs: Batch,
    pub labels: Vec<Option<usize>>,
}

impl FeatureSet {
    pub fn new(inputs: Batch, labels: Vec<Option<usize>>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(validation_err!("{} frames but {} labels", inputs.len(), labels.len()));
        }
        Ok(FeatureSet { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Only the labeled frames.
    pub fn labeled(&self) -> FeatureSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i].is_some()).collect();
        FeatureSet { inputs: self.inputs.select(&idx), labels: idx.iter().map(|&i| self.labels[i]).collect() }
    }

    pub fn concat(parts: &[&FeatureSet]) -> Result<FeatureSet> {
        let inputs = Batch::concat(&parts.iter().map(|p| &p.inputs).collect::<Vec<_>>())?;
        let labels = parts.iter().flat_map(|p| p.labels.iter().copied()).collect();
        FeatureSet::new(inputs, labels)
    }
}

/// Smoothed one-hot targets `(1−ε)·onehot + ε/C`.
pub fn soft_targets(labels: &[Option<usize>], smoothing: f64, num_classes: usize) -> Result<Matrix> {
    let off = smoothing / num_classes as f64;
    let mut t = Matrix::filled(labels.len(), num_classes, off);
    for (r, l) in labels.iter().enumerate() {
        let l = l.ok_or_else(|| validation_err!("row {r} has no label"))?;
        if l >= num_classes {
            return Err(validation_err!("label {l} outside {num_classes} classes"));
        }
        t.set(r, l, 1.0 - smoothing + off);
    }
    Ok(t)
}

/// Convex combination of each row with row `pair[i]`: `λ·x_i + (1−λ)·x_pair[i]`.
pub fn mixup(inputs: &Batch, targets: &Matrix, pair: &[usize], lambda: f64) -> Result<(Batch, Matrix)> {
    if pair.len() != inputs.len() || targets.rows() != inputs.len() {
        return Err(validation_err!("mixup pairing does not match the batch"));
    }
    let mix = |m: &Matrix| {
        let other = m.select_rows(pair);
        m.zip_map(&other, |a, b| lambda * a + (1.0 - lambda) * b)
    };
    let present = (0..pair.len()).map(|i| inputs.audio_present[i] || inputs.audio_present[pair[i]]).collect();
    Ok((Batch::new(mix(&inputs.visual)?, mix(&inputs.audio)?, present)?, mix(targets)?))
}

/// Macro-F1 of a head over the labeled frames of `data`.
pub fn evaluate<H: Head>(head: &H, data: &FeatureSet) -> Result<f64> {
    let logits = head.infer(&data.inputs)?;
    let pred: Vec<Option<usize>> = decide(&logits).into_iter().map(Some).collect();
    Ok(macro_f1(&confusion(&pred, &data.labels, head.num_classes())?).score)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<H> {
    pub params: H,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl<H> TrainOutcome<H> {
    pub fn best_val_f1(&self) -> f64 {
        self.history[self.best_epoch - 1].val_macro_f1
    }
}

fn resolve_weights(cfg: &TrainConfig, labels: &[Option<usize>], num_classes: usize) -> Result<ClassWeights> {
    match &cfg.class_weighting {
        ClassWeighting::Uniform => Ok(ClassWeights::uniform(num_classes)),
        ClassWeighting::Balanced => compute_class_weights(labels, num_classes),
        ClassWeighting::Custom(w) => {
            if w.len() != num_classes {
                return Err(validation_err!("{} custom weights for {num_classes} classes", w.len()));
            }
            ClassWeights::from_raw(w.clone())
        }
    }
}

/// Trains `init` on the labeled frames of `train`, scoring every epoch on
/// `val`. All epochs run; the parameters of the best validation epoch are
/// returned, with ties going to the earlier epoch.
pub fn train_head<H: Head>(init: H, train: &FeatureSet, val: &FeatureSet, cfg: &TrainConfig) -> Result<TrainOutcome<H>> {
    train_with_rng(init, train, val, cfg, &mut Rng::with_stream(cfg.seed, 1))
}

fn train_with_rng<H: Head>(
    init: H,
    train: &FeatureSet,
    val: &FeatureSet,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainOutcome<H>> {
    cfg.validate()?;
    let train = train.labeled();
    let val = val.labeled();
    if train.is_empty() || val.is_empty() {
        return Err(validation_err!("training needs labeled train and validation frames"));
    }
    train.inputs.ensure_finite()?;
    val.inputs.ensure_finite()?;
    let c = init.num_classes();
    let weights = resolve_weights(cfg, &train.labels, c)?;
    let targets = soft_targets(&train.labels, cfg.label_smoothing, c)?;

    let mut params = init;
    let mut state = AdamWState::new(&params);
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_f1 = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let order = rng.permutation(train.len());
        let mut loss_sum = 0.0;
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut x = train.inputs.select(idx);
            let mut y = targets.select_rows(idx);
            if cfg.mixup_alpha > 0.0 {
                let lambda = rng.beta_symmetric(cfg.mixup_alpha);
                let pair = rng.permutation(idx.len());
                (x, y) = mixup(&x, &y, &pair, lambda)?;
            }
            let (logits, cache) = params.forward(&x, rng, true)?;
            let (loss, grad) = weighted_soft_ce(&logits, &y, &weights)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("loss is {loss} at epoch {epoch}, step {}", step + 1)));
            }
            let grads = params.backward(&x, &cache, &grad)?;
            adamw_step(&mut params, &grads, &mut state, cfg.lr, cfg.weight_decay)?;
            loss_sum += loss * idx.len() as f64;
        }
        let val_f1 = evaluate(&params, &val)?;
        let train_loss = loss_sum / train.len() as f64;
        log::debug!("epoch {epoch}: train loss {train_loss:.5}, val macro-F1 {val_f1:.5}");
        history.push(EpochRecord { epoch, train_loss, val_macro_f1: val_f1 });
        if val_f1 > best_f1 {
            best_f1 = val_f1;
            best_epoch = epoch;
            best = params.clone();
        }
    }
    Ok(TrainOutcome { params: best, history, best_epoch })
}

/// Builds a head from `spec` (initialized from `seed`) and trains it.
pub fn train_spec(spec: &HeadSpec, train: &FeatureSet, val: &FeatureSet, cfg: &TrainConfig) -> Result<TrainOutcome<AnyHead>> {
    let head = AnyHead::init(spec, &mut Rng::with_stream(cfg.seed, 0))?;
    train_head(head, train, val, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvReport {
    pub per_fold: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

impl CvReport {
    pub fn from_scores(per_fold: Vec<f64>) -> Self {
        let n = per_fold.len() as f64;
        let mean = per_fold.iter().sum::<f64>() / n;
        let std = (per_fold.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
        CvReport { per_fold, mean, std }
    }
}

/// k-fold cross-validation with folds drawn over whole videos. Folds train in
/// parallel, each with its own random stream.
pub fn cross_validate(videos: &[(String, FeatureSet)], k: usize, spec: &HeadSpec, cfg: &TrainConfig) -> Result<CvReport> {
    let ids: Vec<String> = videos.iter().map(|(id, _)| id.clone()).collect();
    let split = make_folds(&ids, k, cfg.seed)?;
    let folds: Vec<usize> = (0..k).collect();
    let scores = par::try_map(&folds, |&f| {
        let (held, rest): (Vec<_>, Vec<_>) = videos.iter().partition(|(id, _)| split.fold_of(id) == Some(f));
        let val = FeatureSet::concat(&held.iter().map(|(_, s)| s).collect::<Vec<_>>())?;
        let train = FeatureSet::concat(&rest.iter().map(|(_, s)| s).collect::<Vec<_>>())?;
        let stream = 2 * (f as u64 + 1);
        let head = AnyHead::init(spec, &mut Rng::with_stream(cfg.seed, stream))?;
        let out = train_with_rng(head, &train, &val, cfg, &mut Rng::with_stream(cfg.seed, stream + 1))?;
        Ok::<f64, Error>(out.best_val_f1())
    })?;
    Ok(CvReport::from_scores(scores))
}
