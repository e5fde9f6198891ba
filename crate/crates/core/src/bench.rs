//! Wall-clock measurements for the pipeline's three hot paths: feature
//! extraction, model load, and per-window inference.
//!
//! Every benchmark runs a warmup that never reaches the statistics, then
//! times each repetition with `Instant`. Reports carry a machine descriptor
//! so numbers from different hosts are never compared blind; they hold
//! timings and are exempt from byte-for-byte reproducibility.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;
use crate::features::{make_windows, FeatureError, FeatureExtractor, FeatureWindow, WindowConfig};
use crate::lstm::{LstmError, LstmModel};
use crate::store::{load_model, StoreError};

pub const DEFAULT_REPS: usize = 30;
pub const DEFAULT_WARMUP: usize = 5;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("repetition count must be at least 1")]
    InvalidRepetitionCount,
    #[error("benchmark input is empty")]
    EmptyInput,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] LstmError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("benchmark I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

/// Summary over the timed repetitions, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_ms: f64,
    /// Sample standard deviation; 0 for a single repetition.
    pub std_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub reps: usize,
}

impl TimingStats {
    /// # Panics
    ///
    /// On an empty sample set; callers validate repetition counts first.
    #[must_use]
    pub fn from_samples(samples_ms: &[f64]) -> TimingStats {
        assert!(!samples_ms.is_empty(), "no timing samples");
        let n = samples_ms.len();
        let mean = samples_ms.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let var = samples_ms.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            var.sqrt()
        } else {
            0.0
        };
        let min = samples_ms.iter().copied().fold(f64::INFINITY, f64::min);
        let max = samples_ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        TimingStats {
            mean_ms: mean,
            std_ms: std,
            min_ms: min,
            max_ms: max,
            reps: n,
        }
    }
}

/// Times `reps` runs of `work` after `warmup` untimed runs.
///
/// # Errors
///
/// `InvalidRepetitionCount` when `reps` is 0; `work` failures pass through.
pub fn time_reps<F>(reps: usize, warmup: usize, mut work: F) -> Result<TimingStats, BenchError>
where
    F: FnMut() -> Result<(), BenchError>,
{
    if reps == 0 {
        return Err(BenchError::InvalidRepetitionCount);
    }
    for _ in 0..warmup {
        work()?;
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        work()?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(TimingStats::from_samples(&samples))
}

/// Times the full front end on one clip: framing, MFCCs, deltas, windowing.
/// The extractor is built once outside the loop, mirroring production use.
///
/// # Errors
///
/// Repetition and feature errors.
pub fn bench_feature_extraction(
    clip: &AudioClip,
    window: &WindowConfig,
    reps: usize,
    warmup: usize,
) -> Result<TimingStats, BenchError> {
    let extractor = FeatureExtractor::new(clip.sample_rate_hz)?;
    time_reps(reps, warmup, || {
        let matrix = extractor.extract(&clip.samples)?;
        let windows = make_windows(&matrix, window, 0, 0);
        std::hint::black_box(windows.len());
        Ok(())
    })
}

/// Times a full load (read plus decode plus verify) of a stored model.
/// Each repetition re-reads the file, so OS caching is part of the number.
///
/// # Errors
///
/// Repetition, I/O, and decode errors.
pub fn bench_model_load(path: &Path, reps: usize, warmup: usize) -> Result<TimingStats, BenchError> {
    time_reps(reps, warmup, || {
        let model = load_model(path)?;
        std::hint::black_box(&model);
        Ok(())
    })
}

/// Times single-window forward passes. Each repetition runs every window
/// once; the recorded sample is the per-window average, so the statistics
/// read as per-window latency.
///
/// # Errors
///
/// Repetition and dimension errors.
pub fn bench_inference(
    model: &LstmModel,
    windows: &[FeatureWindow],
    reps: usize,
    warmup: usize,
) -> Result<TimingStats, BenchError> {
    if windows.is_empty() {
        return Err(BenchError::EmptyInput);
    }
    let per_rep = windows.len() as f64;
    if reps == 0 {
        return Err(BenchError::InvalidRepetitionCount);
    }
    for w in windows.iter().take(warmup.min(windows.len())) {
        std::hint::black_box(model.forward(w.data())?);
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        for w in windows {
            std::hint::black_box(model.forward(w.data())?);
        }
        samples.push(start.elapsed().as_secs_f64() * 1e3 / per_rep);
    }
    Ok(TimingStats::from_samples(&samples))
}

/// Host identification embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineInfo {
    pub os: String,
    pub arch: String,
    pub cpu_threads: usize,
}

impl MachineInfo {
    #[must_use]
    pub fn detect() -> MachineInfo {
        MachineInfo {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            cpu_threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// One named measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub name: String,
    pub stats: TimingStats,
}

/// A full benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub machine: MachineInfo,
    pub reps: usize,
    pub warmup: usize,
    pub entries: Vec<BenchEntry>,
}

impl BenchReport {
    #[must_use]
    pub fn new(reps: usize, warmup: usize) -> BenchReport {
        BenchReport {
            machine: MachineInfo::detect(),
            reps,
            warmup,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, stats: TimingStats) {
        self.entries.push(BenchEntry {
            name: name.to_string(),
            stats,
        });
    }

    #[must_use]
    pub fn entry(&self, name: &str) -> Option<&TimingStats> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.stats)
    }

    /// # Errors
    ///
    /// I/O failures.
    pub fn save(&self, path: &Path) -> Result<(), BenchError> {
        let json = serde_json::to_string_pretty(self).expect("reports serialize");
        fs::write(path, json)?;
        Ok(())
    }

    /// # Errors
    ///
    /// I/O failures and malformed JSON.
    pub fn load(path: &Path) -> Result<BenchReport, BenchError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| BenchError::IoFailure(std::io::Error::other(e.to_string())))
    }
}
