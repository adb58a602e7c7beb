use std::fs;
use std::path::Path;

use avexpr_core::alignment::afa1::{read_audio_file, write_audio_file};
use avexpr_core::alignment::{attach_audio, AlignmentConfig};
use avexpr_core::datamodel::aff1::write_feature_file;
use avexpr_core::datamodel::make_folds;
use avexpr_core::datamodel::manifest::write_manifest;
use avexpr_core::datamodel::ManifestEntry;
use avexpr_core::head::{AnyHead, Head, HeadKind, HeadSpec};
use avexpr_core::imageops::ppm::{read_ppm, write_ppm};
use avexpr_core::imageops::{multiscale_crops, padaug, FaceBox, PadAugConfig, Side};
use avexpr_core::metrics::{confusion, EvalReport};
use avexpr_core::ndmath::{ntc1, ParamSet, Rng};
use avexpr_core::smoothing::{
    decide, lgt1, parse_windows, smooth_logits, sweep_csv, sweep_windows, LabeledLogits, SmoothingConfig, Strategy,
};
use avexpr_core::synth::{generate, SynthConfig};
use avexpr_core::trainer::{cross_validate, train_spec, ClassWeighting, FeatureSet, TrainConfig};
use avexpr_core::{par, Error, Result, NUM_CLASSES};
use log::info;
use serde::Serialize;

use crate::inputs::{self, emit, label_text, logits_path};
use crate::{
    AlignArgs, AlignMode, AugmentArgs, CropArgs, CvArgs, EvalArgs, FoldsArgs, HeadArgs, OptimArgs, PredictArgs,
    SmoothArgs, SmoothingArgs, StrategyArg, SweepArgs, SynthArgs, TrainArgs, Weighting,
};

/// Stream used to pick held-out videos; clear of the trainer's streams.
const HOLDOUT_STREAM: u64 = 1 << 32;

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn align(args: &AlignArgs) -> Result<()> {
    let cfg = match args.mode {
        AlignMode::Nearest => AlignmentConfig::nearest(),
        AlignMode::Window => AlignmentConfig::window_mean(args.window_s),
    };
    cfg.validate()?;
    let entries = inputs::manifest(&args.manifest)?;
    fs::create_dir_all(&args.out)?;
    let out = par::try_map(&entries, |e| {
        let seq = inputs::read_sequence(e)?;
        let audio = match &args.audio_dir {
            Some(dir) => dir.join(format!("{}.afa1", e.id)),
            None => e.path.with_extension("afa1"),
        };
        let aligned = attach_audio(&seq, &read_audio_file(&audio)?, &cfg)?;
        let name = format!("{}.aff1", e.id);
        write_feature_file(&aligned, args.out.join(&name))?;
        info!("aligned {} ({} frames)", e.id, aligned.records.len());
        Ok::<_, Error>(ManifestEntry { path: name.into(), n_frames: aligned.records.len() as u64, ..e.clone() })
    })?;
    write_manifest(&out, args.out.join("manifest.jsonl"))
}

fn train_config(o: &OptimArgs, seed: u64) -> Result<TrainConfig> {
    let class_weighting = match (&o.class_weights, o.class_weighting) {
        (Some(w), _) => ClassWeighting::Custom(w.clone()),
        (None, Weighting::Balanced) => ClassWeighting::Balanced,
        (None, Weighting::Uniform) => ClassWeighting::Uniform,
    };
    let cfg = TrainConfig {
        epochs: o.epochs,
        lr: o.lr,
        weight_decay: o.weight_decay,
        batch_size: o.batch_size,
        label_smoothing: o.label_smoothing,
        mixup_alpha: o.mixup_alpha,
        seed,
        class_weighting,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn head_spec(h: &HeadArgs, data: &FeatureSet) -> Result<HeadSpec> {
    let kind: HeadKind = h.head.parse()?;
    let mut spec = HeadSpec::new(kind, data.inputs.visual.cols(), data.inputs.audio.cols());
    if let Some(hidden) = h.hidden {
        spec = spec.with_hidden(hidden);
    }
    spec.experts = h.experts;
    spec.dropout = h.dropout;
    Ok(spec)
}

fn concat_sets(videos: &[(String, FeatureSet)]) -> Result<FeatureSet> {
    FeatureSet::concat(&videos.iter().map(|(_, s)| s).collect::<Vec<_>>())
}

type Videos = Vec<(String, FeatureSet)>;

/// Splits off a seeded `fraction` of the videos (at least one, never all).
fn hold_out(mut videos: Videos, fraction: f64, seed: u64) -> Result<(Videos, Videos)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Validation(format!("validation fraction {fraction} outside (0,1)")));
    }
    if videos.len() < 2 {
        return Err(Error::Validation("need at least two videos to hold one out".into()));
    }
    videos.sort_by(|a, b| a.0.cmp(&b.0));
    let n_val = ((videos.len() as f64 * fraction).round() as usize).clamp(1, videos.len() - 1);
    let order = Rng::with_stream(seed, HOLDOUT_STREAM).permutation(videos.len());
    let mut is_val = vec![false; videos.len()];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = videos.into_iter().zip(is_val).partition(|(_, v)| *v);
    Ok((train.into_iter().map(|(x, _)| x).collect(), val.into_iter().map(|(x, _)| x).collect()))
}

fn eval_report<H: Head>(head: &H, data: &FeatureSet) -> Result<EvalReport> {
    let pred: Vec<Option<usize>> = decide(&head.infer(&data.inputs)?).into_iter().map(Some).collect();
    Ok(EvalReport::from_confusion(&confusion(&pred, &data.labels, NUM_CLASSES)?))
}

#[derive(Serialize)]
struct History<'a> {
    head: &'a str,
    param_count: usize,
    train_videos: Vec<&'a str>,
    val_videos: Vec<&'a str>,
    best_epoch: usize,
    best_val_macro_f1: f64,
    epochs: &'a [avexpr_core::trainer::EpochRecord],
}

pub fn train(args: &TrainArgs, seed: u64) -> Result<()> {
    let cfg = train_config(&args.optim, seed)?;
    let videos = inputs::load_videos(&args.manifest)?;
    let (train_videos, val_videos) = match &args.val_manifest {
        Some(p) => (videos, inputs::load_videos(p)?),
        None => hold_out(videos, args.val_fraction, seed)?,
    };
    let train_set = concat_sets(&train_videos)?;
    let val_set = concat_sets(&val_videos)?;
    let spec = head_spec(&args.head, &train_set)?;
    info!(
        "training {} on {} frames, validating on {} frames",
        spec.kind,
        train_set.len(),
        val_set.len()
    );
    let outcome = train_spec(&spec, &train_set, &val_set, &cfg)?;
    for r in &outcome.history {
        info!("epoch {:>3}  loss {:.5}  val macro-F1 {:.4}", r.epoch, r.train_loss, r.val_macro_f1);
    }
    ntc1::save(&outcome.params.to_store(), &args.out)?;
    if let Some(path) = &args.history {
        let h = History {
            head: spec.kind.name(),
            param_count: outcome.params.param_count(),
            train_videos: train_videos.iter().map(|(id, _)| id.as_str()).collect(),
            val_videos: val_videos.iter().map(|(id, _)| id.as_str()).collect(),
            best_epoch: outcome.best_epoch,
            best_val_macro_f1: outcome.best_val_f1(),
            epochs: &outcome.history,
        };
        fs::write(path, to_json(&h)?)?;
    }
    if let Some(path) = &args.report {
        fs::write(path, to_json(&eval_report(&outcome.params, &val_set)?)?)?;
    }
    Ok(())
}

pub fn cv(args: &CvArgs, seed: u64) -> Result<()> {
    let cfg = train_config(&args.optim, seed)?;
    let videos = inputs::load_videos(&args.manifest)?;
    let spec = head_spec(&args.head, &videos[0].1)?;
    let report = cross_validate(&videos, args.k, &spec, &cfg)?;
    emit(args.out.as_deref(), &to_json(&report)?)
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let head = AnyHead::from_store(&ntc1::load(&args.checkpoint)?)?;
    let (dv, da) = head.input_dims();
    let entries = inputs::manifest(&args.manifest)?;
    fs::create_dir_all(&args.out)?;
    par::try_map(&entries, |e| {
        let seq = inputs::read_sequence(e)?;
        if seq.visual_dim != dv || (head.kind().uses_audio() && seq.audio_dim != da) {
            return Err(Error::Shape(format!(
                "{}: features are {}+{} dims, checkpoint expects {dv}+{da}",
                e.id, seq.visual_dim, seq.audio_dim
            )));
        }
        let logits = head.infer(&inputs::sequence_batch(&seq)?)?;
        lgt1::write_logits(&logits, logits_path(&args.out, &e.id))
    })?;
    Ok(())
}

fn strategy(s: StrategyArg) -> Strategy {
    match s {
        StrategyArg::Mean => Strategy::Mean,
        StrategyArg::Median => Strategy::Median,
        StrategyArg::Gaussian => Strategy::Gaussian,
        StrategyArg::Vote => Strategy::Vote,
    }
}

fn smoothing_config(s: &SmoothingArgs, window: usize) -> Result<SmoothingConfig> {
    let cfg = SmoothingConfig { strategy: strategy(s.strategy), window, gaussian_sigma: s.sigma };
    cfg.validate()?;
    Ok(cfg)
}

pub fn smooth(args: &SmoothArgs) -> Result<()> {
    let cfg = smoothing_config(&args.smoothing, args.window)?;
    let smoothed = smooth_logits(&lgt1::read_logits(&args.input)?, &cfg)?;
    lgt1::write_logits(&smoothed, &args.output)?;
    if let Some(path) = &args.decisions {
        fs::write(path, label_text(&decide(&smoothed)))?;
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let (pred, truth) = match (&args.pred, &args.truth, &args.manifest, &args.logits_dir) {
        (Some(p), Some(t), _, _) => (inputs::read_labels(p)?, inputs::read_labels(t)?),
        (_, _, Some(m), Some(dir)) => {
            let mut pred = Vec::new();
            let mut truth = Vec::new();
            for v in labeled_logits(m, dir)? {
                pred.extend(decide(&v.logits).into_iter().map(Some));
                truth.extend(v.labels);
            }
            (pred, truth)
        }
        _ => return Err(Error::Validation("give --pred and --truth, or --manifest and --logits-dir".into())),
    };
    let report = EvalReport::from_confusion(&confusion(&pred, &truth, NUM_CLASSES)?);
    emit(args.out.as_deref(), &to_json(&report)?)
}

fn labeled_logits(manifest: &Path, dir: &Path) -> Result<Vec<LabeledLogits>> {
    let entries = inputs::manifest(manifest)?;
    par::try_map(&entries, |e| {
        let labels = inputs::sequence_labels(&inputs::read_sequence(e)?);
        let logits = lgt1::read_logits(logits_path(dir, &e.id))?;
        if logits.rows() != labels.len() {
            return Err(Error::Shape(format!("{}: {} logit rows for {} frames", e.id, logits.rows(), labels.len())));
        }
        Ok(LabeledLogits { logits, labels })
    })
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let windows = parse_windows(&args.windows)?;
    for &w in &windows {
        smoothing_config(&args.smoothing, w)?;
    }
    let videos = labeled_logits(&args.manifest, &args.logits_dir)?;
    let rows = sweep_windows(&videos, strategy(args.smoothing.strategy), &windows, args.smoothing.sigma)?;
    emit(args.out.as_deref(), &sweep_csv(&rows))
}

pub fn augment(args: &AugmentArgs, seed: u64) -> Result<()> {
    let cfg = PadAugConfig {
        probability: args.probability,
        sides: args.sides.iter().map(|s| s.parse::<Side>()).collect::<Result<_>>()?,
        fraction_range: (args.fraction_min, args.fraction_max),
        max_sides_per_sample: args.max_sides,
        jitter: args.jitter,
    };
    cfg.validate()?;
    let entries = inputs::image_manifest(&args.manifest)?;
    fs::create_dir_all(&args.out)?;
    par::try_map_range(entries.len(), |i| {
        let e = &entries[i];
        let mut rng = Rng::with_stream(seed, i as u64);
        let out = padaug(&read_ppm(&e.path)?, &cfg, &mut rng)?;
        write_ppm(&out, args.out.join(format!("{}.ppm", e.id)))
    })?;
    Ok(())
}

pub fn crop(args: &CropArgs) -> Result<()> {
    let entries = inputs::image_manifest(&args.manifest)?;
    fs::create_dir_all(&args.out)?;
    par::try_map(&entries, |e| {
        let (Some(cx), Some(cy), Some(side)) = (e.cx, e.cy, e.side) else {
            return Err(Error::Validation(format!("{}: crop entries need cx, cy and side", e.id)));
        };
        let crops = multiscale_crops(&read_ppm(&e.path)?, &FaceBox { cx, cy, side }, &args.scales, args.size)?;
        for (k, img) in crops.iter().enumerate() {
            write_ppm(img, args.out.join(format!("{}_s{k}.ppm", e.id)))?;
        }
        Ok(())
    })?;
    Ok(())
}

#[derive(Serialize)]
struct FoldsOut<'a> {
    k: usize,
    seed: u64,
    folds: Vec<Vec<&'a str>>,
}

pub fn folds(args: &FoldsArgs, seed: u64) -> Result<()> {
    let ids: Vec<String> = inputs::manifest(&args.manifest)?.into_iter().map(|e| e.id).collect();
    let split = make_folds(&ids, args.k, seed)?;
    let out = FoldsOut { k: split.k, seed, folds: (0..split.k).map(|f| split.members(f)).collect() };
    emit(args.out.as_deref(), &to_json(&out)?)
}

pub fn synth(args: &SynthArgs, seed: u64) -> Result<()> {
    let cfg = SynthConfig {
        videos: args.videos,
        frames_per_video: args.frames,
        visual_dim: args.visual_dim,
        audio_dim: args.audio_dim,
        flip_rate: args.flip_rate,
        missing_rate: args.missing_rate,
        ..SynthConfig::default()
    };
    let videos = generate(&cfg, seed)?;
    fs::create_dir_all(&args.out)?;
    let entries = par::try_map(&videos, |v| {
        let id = &v.sequence.video_id;
        write_feature_file(&v.sequence, args.out.join(format!("{id}.aff1")))?;
        write_audio_file(&v.track, args.out.join(format!("{id}.afa1")))?;
        Ok::<_, Error>(ManifestEntry {
            id: id.clone(),
            path: format!("{id}.aff1").into(),
            fps: v.sequence.fps,
            n_frames: v.sequence.records.len() as u64,
        })
    })?;
    write_manifest(&entries, args.out.join("manifest.jsonl"))
}
