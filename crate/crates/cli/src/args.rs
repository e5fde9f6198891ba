//! Flag surface of the `breathid` binary.
//!
//! Every source of randomness is a required `--seed`; nothing defaults to
//! the clock. Window and overlap defaults encode the best known settings
//! per gesture: 30 frames for sniffs, 250 for deep breaths, 90% overlap
//! for both.

use std::path::PathBuf;

use breathid_core::audio::Gesture;
use breathid_core::lstm::LossKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "breathid",
    version,
    about = "Breathing-acoustics user identification pipeline",
    subcommand_required = true,
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a deterministic synthetic corpus plus its clip manifest.
    Synth(SynthArgs),
    /// Extract feature dumps for every clip in a manifest.
    Features(FeaturesArgs),
    /// Train the two-layer LSTM and retain checkpoints around the elbow.
    Train(TrainArgs),
    /// Score the retained checkpoints and keep the best model.
    Select(RunArgs),
    /// Quantize the selected model to 8-bit codes and zip the result.
    Quantize(RunArgs),
    /// Evaluate the selected model on validation, intra, and inter sets.
    Eval(EvalArgs),
    /// Train the one-vs-one linear SVM baseline.
    SvmTrain(SvmTrainArgs),
    /// Evaluate the SVM baseline on validation, intra, and inter sets.
    SvmEval(RunArgs),
    /// Measure feature extraction, model load, and inference latency.
    Bench(BenchArgs),
    /// Print a run's data tables: curves, scores, sizes, latencies.
    Report(RunArgs),
}

/// Gesture filter where "both" makes sense (corpus-level commands).
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GestureFilter {
    Sniff,
    Deep,
    Both,
}

impl GestureFilter {
    #[must_use]
    pub fn gestures(self) -> Vec<Gesture> {
        match self {
            GestureFilter::Sniff => vec![Gesture::Sniff],
            GestureFilter::Deep => vec![Gesture::Deep],
            GestureFilter::Both => vec![Gesture::Sniff, Gesture::Deep],
        }
    }
}

/// Single-gesture selector for training and evaluation commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GestureArg {
    Sniff,
    Deep,
}

impl GestureArg {
    #[must_use]
    pub fn gesture(self) -> Gesture {
        match self {
            GestureArg::Sniff => Gesture::Sniff,
            GestureArg::Deep => Gesture::Deep,
        }
    }

    /// Best known window length for the gesture, in frames.
    #[must_use]
    pub fn default_window(self) -> usize {
        match self {
            GestureArg::Sniff => 30,
            GestureArg::Deep => 250,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    /// Cross-entropy on softmax probabilities.
    Ce,
    /// Squared error against the one-hot target.
    L2,
}

impl LossArg {
    #[must_use]
    pub fn kind(self) -> LossKind {
        match self {
            LossArg::Ce => LossKind::CrossEntropy,
            LossArg::L2 => LossKind::L2OneHot,
        }
    }
}

/// Clips per user in sessions 1, 2, 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionCounts(pub [usize; 3]);

fn parse_sessions(s: &str) -> Result<SessionCounts, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated counts, e.g. 30,30,10".into());
    }
    let mut counts = [0usize; 3];
    for (slot, part) in counts.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("bad session count {part:?}"))?;
        if *slot == 0 {
            return Err("session counts must be positive".into());
        }
    }
    Ok(SessionCounts(counts))
}

fn parse_overlap(s: &str) -> Result<f64, String> {
    match s {
        "0.5" => Ok(0.5),
        "0.7" => Ok(0.7),
        "0.9" => Ok(0.9),
        _ => Err("overlap must be 0.5, 0.7, or 0.9".into()),
    }
}

#[derive(Args)]
pub struct SynthArgs {
    /// Number of synthetic users.
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    pub users: u32,
    /// Corpus seed; fixes profiles, noise, and durations.
    #[arg(long)]
    pub seed: u64,
    /// Output directory for WAVs, clips.jsonl, and the run manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Clips per user per session.
    #[arg(long, default_value = "30,30,10", value_parser = parse_sessions)]
    pub sessions: SessionCounts,
    #[arg(long, value_enum, default_value_t = GestureFilter::Both)]
    pub gesture: GestureFilter,
    /// Nominal sniff duration; each clip jitters within ±10%.
    #[arg(long, default_value_t = 400)]
    pub sniff_ms: u32,
    /// Nominal deep-breath duration; each clip jitters within ±10%.
    #[arg(long, default_value_t = 1200)]
    pub deep_ms: u32,
}

#[derive(Args)]
pub struct FeaturesArgs {
    /// Clip manifest (JSON-lines).
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = GestureFilter::Both)]
    pub gesture: GestureFilter,
    /// Output directory for .bfea dumps.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Clip manifest (JSON-lines).
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub gesture: GestureArg,
    /// Window length in frames; defaults to the gesture's best setting.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value = "0.9", value_parser = parse_overlap)]
    pub overlap: f64,
    /// Seed for splits, initialization, and batch sampling.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub iterations: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, value_enum, default_value_t = LossArg::Ce)]
    pub loss: LossArg,
    /// Augmented copies per training clip.
    #[arg(long, default_value_t = 10)]
    pub copies: usize,
    /// Session-2 clips per user held out for the intra set.
    #[arg(long, default_value_t = 10)]
    pub holdout: usize,
    /// Require the 30/30/10 session layout.
    #[arg(long)]
    pub strict: bool,
    /// Run directory; all artifacts land here.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RunArgs {
    /// Run directory produced by `train` or `svm-train`.
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Run directory produced by `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Evaluate the quantized model instead of the float one.
    #[arg(long)]
    pub quantized: bool,
}

#[derive(Args)]
pub struct SvmTrainArgs {
    /// Clip manifest (JSON-lines).
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub gesture: GestureArg,
    /// Window length in frames; defaults to the gesture's best setting.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value = "0.9", value_parser = parse_overlap)]
    pub overlap: f64,
    /// Seed for splits and epoch shuffles.
    #[arg(long)]
    pub seed: u64,
    /// Passes over each pair's windows.
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Fixed regularization trade-off; omit to grid-search {0.1, 1, 10}.
    #[arg(long)]
    pub c: Option<f64>,
    /// Augmented copies per training clip.
    #[arg(long, default_value_t = 10)]
    pub copies: usize,
    /// Session-2 clips per user held out for the intra set.
    #[arg(long, default_value_t = 10)]
    pub holdout: usize,
    /// Require the 30/30/10 session layout.
    #[arg(long)]
    pub strict: bool,
    /// Run directory; all artifacts land here.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Run directory produced by `train` (after `select`).
    #[arg(long)]
    pub run: PathBuf,
    /// Timed repetitions per benchmark.
    #[arg(long, default_value_t = 30)]
    pub reps: usize,
    /// Untimed warmup repetitions.
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
}
