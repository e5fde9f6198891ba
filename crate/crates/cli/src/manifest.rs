//! Run manifests and the other JSON artifacts a run directory holds.
//!
//! The run manifest is the reproducibility record: rerunning a command
//! with the parameters stored here regenerates every derived artifact
//! byte for byte (benchmark timings excepted). One is written beside the
//! outputs of every producing command.

use std::fs;
use std::path::{Path, PathBuf};

use breathid_core::audio::Gesture;
use breathid_core::lstm::LossKind;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const CLIP_MANIFEST_FILE: &str = "clips.jsonl";
pub const HISTORY_FILE: &str = "history.json";
pub const RING_FILE: &str = "ring.json";
pub const SELECTION_FILE: &str = "selection_report.json";
pub const BEST_MODEL_FILE: &str = "best.brnn";
pub const QUANTIZED_MODEL_FILE: &str = "best.q8.brnn";
pub const QUANTIZED_ZIP_FILE: &str = "best.q8.brnn.zip";
pub const SIZES_FILE: &str = "sizes.json";
pub const EVAL_FILE: &str = "eval_report.json";
pub const EVAL_QUANTIZED_FILE: &str = "eval_report_q8.json";
pub const SVM_MODEL_FILE: &str = "svm.bsvm";
pub const SVM_REPORT_FILE: &str = "svm_report.json";
pub const SVM_EVAL_FILE: &str = "svm_eval_report.json";
pub const BENCH_FILE: &str = "bench.json";

/// What produced a run directory, tagged by subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunManifest {
    Synth(SynthManifest),
    Features(FeaturesManifest),
    Train(TrainManifest),
    SvmTrain(SvmManifest),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthManifest {
    pub users: u32,
    pub seed: u64,
    pub sessions: [usize; 3],
    pub gestures: Vec<Gesture>,
    pub sniff_ms: u32,
    pub deep_ms: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturesManifest {
    pub dataset_manifest: PathBuf,
    pub gestures: Vec<Gesture>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainManifest {
    pub dataset_manifest: PathBuf,
    pub gesture: Gesture,
    pub window_len: usize,
    pub overlap: f64,
    pub augment_copies: usize,
    pub intra_holdout: usize,
    pub strict: bool,
    pub seed: u64,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmManifest {
    pub dataset_manifest: PathBuf,
    pub gesture: Gesture,
    pub window_len: usize,
    pub overlap: f64,
    pub augment_copies: usize,
    pub intra_holdout: usize,
    pub strict: bool,
    pub seed: u64,
    pub epochs: usize,
    /// Fixed C; `None` means the grid was searched.
    pub c: Option<f64>,
}

impl RunManifest {
    /// Writes `run_manifest.json` into the run directory.
    ///
    /// # Errors
    ///
    /// I/O failures.
    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self).expect("manifests serialize");
        fs::write(dir.join(RUN_MANIFEST_FILE), json)?;
        Ok(())
    }

    /// Reads a run directory's manifest.
    ///
    /// # Errors
    ///
    /// Missing or malformed `run_manifest.json`.
    pub fn load(dir: &Path) -> Result<RunManifest, CliError> {
        let path = dir.join(RUN_MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| {
            CliError::Invalid(format!("{} is not a run directory: {e}", dir.display()))
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// # Errors
    ///
    /// The manifest was not written by `train`.
    pub fn expect_train(&self) -> Result<&TrainManifest, CliError> {
        match self {
            RunManifest::Train(t) => Ok(t),
            _ => Err(CliError::Invalid(
                "this run directory was not produced by `train`".into(),
            )),
        }
    }

    /// # Errors
    ///
    /// The manifest was not written by `svm-train`.
    pub fn expect_svm(&self) -> Result<&SvmManifest, CliError> {
        match self {
            RunManifest::SvmTrain(s) => Ok(s),
            _ => Err(CliError::Invalid(
                "this run directory was not produced by `svm-train`".into(),
            )),
        }
    }
}

/// One retained checkpoint's whereabouts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRef {
    /// 1-based training iteration.
    pub iteration: usize,
    /// Validation window accuracy at that iteration.
    pub validation_accuracy: f64,
    /// Model file path relative to the run directory.
    pub file: String,
}

/// Elbow detection outcome plus where the candidate models live,
/// serialized as `ring.json` so `select` can rebuild the checkpoint set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RingSummary {
    pub elbow_index: usize,
    pub elbow_iteration: usize,
    pub plateau_found: bool,
    pub curve: Vec<f64>,
    pub num_users: usize,
    pub window_len: usize,
    pub candidates: Vec<CandidateRef>,
}

/// Scores of one window set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetScores {
    pub set: String,
    pub windows: usize,
    pub clips: usize,
    pub window_accuracy: f64,
    pub sample_accuracy: f64,
}

/// `eval` / `svm-eval` output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// "float", "quantized", or "svm".
    pub flavor: String,
    pub num_users: usize,
    pub window_len: usize,
    pub sets: Vec<SetScores>,
}

/// `quantize` output: sizes in bytes plus ratios against the float file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeReport {
    pub float_bytes: u64,
    pub quantized_bytes: u64,
    pub zipped_bytes: u64,
    pub quantized_ratio: f64,
    pub zipped_ratio: f64,
}

/// Reads one JSON artifact from a run directory.
///
/// # Errors
///
/// Missing files and malformed JSON.
pub fn read_json<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<T, CliError> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Invalid(format!("missing {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes one JSON artifact into a run directory.
///
/// # Errors
///
/// I/O failures.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).expect("artifacts serialize");
    fs::write(dir.join(name), json)?;
    Ok(())
}
