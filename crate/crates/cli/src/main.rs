use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;
mod files;
mod manifest;

use config::{PipelineConfig, SchemeKind};
use error::{CliError, CliResult};

/// Data preparation, detection scoring and confidence calibration for
/// bird-song detection pipelines.
#[derive(Debug, Parser)]
#[command(name = "songsieve", version, about)]
struct Cli {
    /// TOML configuration; flags override its fields.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Output root (each command writes into its own subdirectory).
    #[arg(long, short, global = true, env = "SONGSIEVE_OUTPUT")]
    output: Option<PathBuf>,

    /// Worker threads for per-file stages (1 = serial).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render log-frequency spectrogram PNGs (plus JSON sidecars) from WAV files.
    Spectrogram(SpectrogramArgs),
    /// Convert Audacity labels or annotation CSV into YOLO label files.
    Convert(ConvertArgs),
    /// Assign annotated files to train/validation/test subsets.
    Split(SplitArgs),
    /// Write noise/gain augmented copies and background negatives.
    Augment(AugmentArgs),
    /// Run the energy detector or ingest external detections.
    Detect(DetectArgs),
    /// Score detections against annotations by temporal IoU.
    EvalDetections(EvalDetectionsArgs),
    /// Score detections on a fixed grid of windows.
    EvalWindows(EvalWindowsArgs),
    /// Fit a logit calibration and derive confidence thresholds.
    Calibrate(CalibrateArgs),
    /// Per-class report and confusion matrix for labeled detections.
    EvalClassifier(EvalClassifierArgs),
    /// Percentage change of TP/FP/FN between two metric files.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    /// WAV file or directory (defaults to paths.audio_root).
    #[arg(long)]
    pub audio: Option<PathBuf>,
    #[arg(long)]
    pub n_fft: Option<usize>,
    #[arg(long)]
    pub hop: Option<usize>,
    #[arg(long)]
    pub fmin: Option<f64>,
    #[arg(long)]
    pub fmax: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Audacity label file or directory (defaults to paths.annotation_root).
    #[arg(long, conflicts_with = "annotations")]
    pub labels: Option<PathBuf>,
    /// Annotation interchange CSV instead of Audacity labels.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeKind>,
    /// classes.txt for the classifier scheme.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// Audio root used to look up each file's true duration.
    #[arg(long)]
    pub audio: Option<PathBuf>,
    /// Clip length for files without audio.
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Annotation interchange CSV.
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train: Option<f64>,
    #[arg(long)]
    pub validation: Option<f64>,
    #[arg(long)]
    pub test: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Directory of positive training WAVs (defaults to paths.audio_root).
    #[arg(long)]
    pub audio: Option<PathBuf>,
    /// split.csv; only files assigned to train are augmented.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// YOLO label directory mirroring the audio tree, copied alongside.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub background_dir: Option<PathBuf>,
    #[arg(long)]
    pub background_metadata: Option<PathBuf>,
    /// Target share of background-only items in the training set.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// WAV file or directory for the energy detector.
    #[arg(long, conflicts_with = "ingest")]
    pub audio: Option<PathBuf>,
    /// Detections CSV, YOLO TXT, or a directory of them.
    #[arg(long)]
    pub ingest: Option<PathBuf>,
    /// classes.txt naming YOLO class indices.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    #[arg(long)]
    pub k_mad: Option<f64>,
    #[arg(long)]
    pub min_dur: Option<f64>,
    #[arg(long)]
    pub merge_gap: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalDetectionsArgs {
    /// Ground-truth annotation CSV.
    #[arg(long)]
    pub gt: PathBuf,
    /// Detections CSV.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub iou_min: Option<f64>,
    /// Discard detections below this confidence first.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WindowModeArg {
    Window,
    Annotation,
}

#[derive(Debug, Args)]
pub struct EvalWindowsArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<WindowModeArg>,
    #[arg(long)]
    pub iou_floor: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Audio root used to look up file durations.
    #[arg(long)]
    pub audio: Option<PathBuf>,
    /// Duration for files without audio.
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Target probabilities, e.g. 0.4,0.6,0.8,0.95.
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<f64>>,
    #[arg(long)]
    pub iou_min: Option<f64>,
    /// Bootstrap replicates (0 skips the band).
    #[arg(long)]
    pub n_boot: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Round thresholds half up to this many decimals before measuring TP loss.
    #[arg(long)]
    pub round: Option<u32>,
    /// Also write calibration.svg.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormalizeArg {
    None,
    Rows,
}

#[derive(Debug, Args)]
pub struct EvalClassifierArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// Labeled detections CSV.
    #[arg(long)]
    pub pred: PathBuf,
    /// classes.txt; defaults to the labels found in the ground truth.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    #[arg(long)]
    pub min_confidence: Option<f64>,
    #[arg(long, value_enum, default_value = "none")]
    pub normalize: NormalizeArg,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Metrics JSON of the reference run.
    #[arg(long)]
    pub a: PathBuf,
    /// Metrics JSON of the new run.
    #[arg(long)]
    pub b: PathBuf,
}

/// Settings shared by every command after config, env and flags are merged.
pub struct Context {
    pub config: PipelineConfig,
    pub output_root: PathBuf,
}

impl Context {
    pub fn pool(&self) -> CliResult<rayon::ThreadPool> {
        let n = self
            .config
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::invalid(format!("thread pool: {e}")))
    }
}

fn run(cli: Cli) -> CliResult<PathBuf> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = cli.workers {
        config.workers = Some(w);
    }
    if let Some(o) = &cli.output {
        config.paths.output_root = Some(o.clone());
    }
    let output_root = config.output_root();
    let mut ctx = Context { config, output_root };

    match cli.command {
        Command::Spectrogram(a) => commands::audio::spectrogram(&mut ctx, a),
        Command::Convert(a) => commands::labels::convert(&mut ctx, a),
        Command::Split(a) => commands::labels::split(&mut ctx, a),
        Command::Augment(a) => commands::audio::augment(&mut ctx, a),
        Command::Detect(a) => commands::audio::detect(&mut ctx, a),
        Command::EvalDetections(a) => commands::scoring::eval_detections(&mut ctx, a),
        Command::EvalWindows(a) => commands::scoring::eval_windows(&mut ctx, a),
        Command::Calibrate(a) => commands::scoring::calibrate(&mut ctx, a),
        Command::EvalClassifier(a) => commands::scoring::eval_classifier(&mut ctx, a),
        Command::Compare(a) => commands::scoring::compare(&mut ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
