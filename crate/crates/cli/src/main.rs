//! `avexpr`: batch front end for frame-level expression recognition.
//!
//! Exit codes: 0 on success, 1 on data errors, 2 on usage errors. Failures
//! print one JSON line on stderr, `{"error": <kind>, "message": <text>}`.

mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use avexpr_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "avexpr", version, about = "Frame-level audio-visual expression recognition toolkit")]
struct Cli {
    /// Seed for every random choice (initialization, batching, augmentation)
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for per-video work; 0 uses every core
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Log progress to stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Attach aligned audio features to every video of a manifest
    Align(AlignArgs),
    /// Train a classification head and write checkpoint, history and report
    Train(TrainArgs),
    /// Video-level k-fold cross-validation of a head
    Cv(CvArgs),
    /// Run a checkpoint over a manifest and write per-video LGT1 logits
    Predict(PredictArgs),
    /// Temporally smooth one LGT1 logits file
    Smooth(SmoothArgs),
    /// Macro-F1 report for predictions against labels
    Eval(EvalArgs),
    /// Macro-F1 for a range of smoothing windows, as CSV
    Sweep(SweepArgs),
    /// Random black-bar padding over an image manifest
    Augment(AugmentArgs),
    /// Multi-scale face crops from frames and boxes
    Crop(CropArgs),
    /// Assign the videos of a manifest to k folds
    Folds(FoldsArgs),
    /// Write a synthetic dataset (AFF1 + AFA1 + manifest)
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AlignMode {
    Nearest,
    Window,
}

#[derive(Args, Debug)]
struct AlignArgs {
    /// Manifest of visual feature files
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding `<id>.afa1` audio files [default: next to each feature file]
    #[arg(long)]
    audio_dir: Option<PathBuf>,
    /// Output directory for aligned feature files and `manifest.jsonl`
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = AlignMode::Window)]
    mode: AlignMode,
    /// Window length in seconds for `--mode window`
    #[arg(long, default_value_t = 0.5)]
    window_s: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Weighting {
    Balanced,
    Uniform,
}

#[derive(Args, Debug)]
struct HeadArgs {
    /// Head architecture: moe, gated, concat-linear, concat-mlp, visual-linear, audio-linear
    #[arg(long, default_value = "gated")]
    head: String,
    /// Hidden width [default: input width for moe, 512 otherwise]
    #[arg(long)]
    hidden: Option<usize>,
    /// Number of experts for the moe head
    #[arg(long, default_value_t = 4)]
    experts: usize,
    /// Dropout probability
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
}

#[derive(Args, Debug)]
struct OptimArgs {
    #[arg(long, default_value_t = 12)]
    epochs: usize,
    #[arg(long, default_value_t = 3e-4)]
    lr: f64,
    #[arg(long, default_value_t = 1e-2)]
    weight_decay: f64,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    label_smoothing: f64,
    /// Beta(α, α) mixup on features; 0 disables it
    #[arg(long, default_value_t = 0.2)]
    mixup_alpha: f64,
    #[arg(long, value_enum, default_value_t = Weighting::Balanced)]
    class_weighting: Weighting,
    /// Explicit per-class loss weights, comma separated; overrides --class-weighting
    #[arg(long, value_delimiter = ',')]
    class_weights: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Manifest of aligned training videos
    #[arg(long)]
    manifest: PathBuf,
    /// Manifest of validation videos [default: hold out --val-fraction of --manifest]
    #[arg(long)]
    val_manifest: Option<PathBuf>,
    /// Fraction of training videos held out for validation
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    #[command(flatten)]
    head: HeadArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Checkpoint output (NTC1)
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch history output (JSON)
    #[arg(long)]
    history: Option<PathBuf>,
    /// Validation report for the kept checkpoint (JSON)
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[command(flatten)]
    head: HeadArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Report output (JSON) [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Checkpoint written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Manifest of aligned feature files
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for `<id>.lgt1` files
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    Mean,
    Median,
    Gaussian,
    Vote,
}

#[derive(Args, Debug)]
struct SmoothingArgs {
    #[arg(long, value_enum, default_value_t = StrategyArg::Median)]
    strategy: StrategyArg,
    /// Gaussian standard deviation in frames [default: window / 6]
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args, Debug)]
struct SmoothArgs {
    /// Input logits (LGT1)
    #[arg(long)]
    input: PathBuf,
    /// Smoothed logits output (LGT1)
    #[arg(long)]
    output: PathBuf,
    /// Odd window length in frames
    #[arg(long, default_value_t = 101)]
    window: usize,
    #[command(flatten)]
    smoothing: SmoothingArgs,
    /// Also write per-frame decisions, one class index per line
    #[arg(long)]
    decisions: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Predictions: LGT1 logits, AFF1 labels or a text file with one label per line
    #[arg(long, requires = "truth", conflicts_with_all = ["manifest", "logits_dir"])]
    pred: Option<PathBuf>,
    /// Ground truth, in any of the --pred formats
    #[arg(long, requires = "pred")]
    truth: Option<PathBuf>,
    /// Manifest supplying ground truth for multi-video evaluation
    #[arg(long, requires = "logits_dir")]
    manifest: Option<PathBuf>,
    /// Directory of `<id>.lgt1` predictions matching --manifest
    #[arg(long, requires = "manifest")]
    logits_dir: Option<PathBuf>,
    /// Report output (JSON) [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Manifest supplying ground truth
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of `<id>.lgt1` logits
    #[arg(long)]
    logits_dir: PathBuf,
    /// `start:stop:step` (inclusive) or a comma-separated list of odd windows
    #[arg(long, default_value = "3:205:2")]
    windows: String,
    #[command(flatten)]
    smoothing: SmoothingArgs,
    /// CSV output [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    /// JSON-lines image manifest, one `{"id", "path"}` object per PPM image
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for `<id>.ppm`
    #[arg(long)]
    out: PathBuf,
    /// Chance that an image receives any padding
    #[arg(long, default_value_t = 0.5)]
    probability: f64,
    /// Sides that may be padded
    #[arg(long, value_delimiter = ',', default_value = "left,right,top,bottom")]
    sides: Vec<String>,
    /// Smallest bar thickness as a fraction of the padded dimension
    #[arg(long, default_value_t = 0.05)]
    fraction_min: f64,
    /// Largest bar thickness as a fraction of the padded dimension
    #[arg(long, default_value_t = 0.25)]
    fraction_max: f64,
    /// At most this many padded sides per image (1 or 2)
    #[arg(long, default_value_t = 2)]
    max_sides: usize,
    /// Largest content shift in pixels
    #[arg(long, default_value_t = 2)]
    jitter: usize,
}

#[derive(Args, Debug)]
struct CropArgs {
    /// JSON-lines manifest of `{"id", "path", "cx", "cy", "side"}` objects
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for `<id>_s<k>.ppm`, k indexing --scales
    #[arg(long)]
    out: PathBuf,
    /// Crop scale factors relative to the face box side
    #[arg(long, value_delimiter = ',', default_value = "0.9,1.2,1.5")]
    scales: Vec<f64>,
    /// Output side length in pixels
    #[arg(long, default_value_t = 224)]
    size: usize,
}

#[derive(Args, Debug)]
struct FoldsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Assignment output (JSON) [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    videos: usize,
    #[arg(long, default_value_t = 600)]
    frames: usize,
    #[arg(long, default_value_t = 16)]
    visual_dim: usize,
    #[arg(long, default_value_t = 16)]
    audio_dim: usize,
    /// Fraction of observed labels replaced by a random class
    #[arg(long, default_value_t = 0.15)]
    flip_rate: f64,
    /// Fraction of frames whose label is missing
    #[arg(long, default_value_t = 0.0)]
    missing_rate: f64,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_target(false).init();
}

#[cfg(feature = "parallel")]
fn init_pool(jobs: usize) -> Result<(), Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn init_pool(jobs: usize) -> Result<(), Error> {
    if jobs > 1 {
        log::warn!("built without the parallel feature; --jobs {jobs} ignored");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    init_pool(cli.jobs)?;
    let seed = cli.seed;
    match cli.command {
        Command::Align(a) => commands::align(&a),
        Command::Train(a) => commands::train(&a, seed),
        Command::Cv(a) => commands::cv(&a, seed),
        Command::Predict(a) => commands::predict(&a),
        Command::Smooth(a) => commands::smooth(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Augment(a) => commands::augment(&a, seed),
        Command::Crop(a) => commands::crop(&a),
        Command::Folds(a) => commands::folds(&a, seed),
        Command::Synth(a) => commands::synth(&a, seed),
    }
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or_default();
            let msg = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", error_line("usage", msg));
            return ExitCode::from(2);
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::from(1)
        }
    }
}
