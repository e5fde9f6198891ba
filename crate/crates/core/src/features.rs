//! MFCC front-end: 10 ms Hamming frames, 32 cepstra plus deltas and
//! double-deltas (96 columns total), and fixed-length sliding windows.
//!
//! The pipeline per frame is: pre-emphasis (0.97), zero-pad to the next
//! power of two, magnitude spectrum, 64 triangular mel filters spanning
//! 0..Nyquist, natural log floored at 1e-10, orthonormal DCT-II, keep
//! coefficients 0..31.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView2};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

/// Frame length in milliseconds (non-overlapping).
pub const FRAME_MS: u32 = 10;
/// Triangular mel filters in the bank.
pub const NUM_MEL_FILTERS: usize = 64;
/// Cepstral coefficients kept after the DCT.
pub const NUM_CEPSTRA: usize = 32;
/// Columns per frame: 32 MFCC, 32 delta, 32 double-delta.
pub const FEATURE_DIM: usize = 3 * NUM_CEPSTRA;
/// Pre-emphasis coefficient.
pub const PRE_EMPHASIS: f64 = 0.97;
/// Filter energies are floored here before the log, so silence is defined.
pub const LOG_FLOOR: f64 = 1e-10;

/// Overlap fractions the windowing contract admits.
pub const OVERLAP_CHOICES: [f64; 3] = [0.5, 0.7, 0.9];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("clip of {samples} samples is shorter than one {frame_len}-sample frame")]
    ClipTooShort { samples: usize, frame_len: usize },
    #[error("sample rate {0} Hz is too low for 10 ms framing")]
    RateTooLow(u32),
    #[error("overlap {0} is not one of 0.5 / 0.7 / 0.9")]
    InvalidOverlap(f64),
    #[error("window length must be at least 1 frame")]
    InvalidWindowLen,
    #[error("malformed feature dump: {0}")]
    MalformedDump(String),
    #[error("feature I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Scalar helpers
// ---------------------------------------------------------------------------

/// Mel scale: m = 2595·log10(1 + f/700).
#[must_use]
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

/// Inverse mel scale.
#[must_use]
pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10.0f64.powf(mel / 2595.0) - 1.0)
}

/// Hamming window of length `n`: w(i) = 0.54 − 0.46·cos(2πi/(n−1)).
#[must_use]
pub fn hamming_window(n: usize) -> Vec<f64> {
    assert!(n >= 2, "Hamming window needs at least 2 points");
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// In-place pre-emphasis: y[0] = x[0], y[n] = x[n] − 0.97·x[n−1].
fn pre_emphasize(frame: &mut [f64]) {
    let mut prev = frame[0];
    for x in frame.iter_mut().skip(1) {
        let cur = *x;
        *x = cur - PRE_EMPHASIS * prev;
        prev = cur;
    }
}

/// Triangular mel filterbank as a dense (filters × bins) matrix.
///
/// Filter edges are equally spaced on the mel scale between 0 and Nyquist;
/// weights are evaluated at the exact bin frequencies k·rate/fft_len (no
/// bin snapping), which keeps the bank well-defined for any FFT size.
#[must_use]
pub fn build_mel_filterbank(num_filters: usize, fft_len: usize, sample_rate_hz: u32) -> Array2<f64> {
    let bins = fft_len / 2 + 1;
    let nyquist = f64::from(sample_rate_hz) / 2.0;
    let mel_step = hz_to_mel(nyquist) / (num_filters + 1) as f64;
    let edges_hz: Vec<f64> = (0..num_filters + 2)
        .map(|j| mel_to_hz(mel_step * j as f64))
        .collect();

    let mut bank = Array2::zeros((num_filters, bins));
    for m in 0..num_filters {
        let (lo, center, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        for k in 0..bins {
            let f = k as f64 * f64::from(sample_rate_hz) / fft_len as f64;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= center {
                (f - lo) / (center - lo)
            } else {
                (hi - f) / (hi - center)
            };
            bank[[m, k]] = w;
        }
    }
    bank
}

/// Orthonormal DCT-II matrix mapping `input` log-energies to `output`
/// cepstra: d[k][m] = α_k·cos(π(2m+1)k / 2·input).
#[must_use]
pub fn dct_ii_matrix(output: usize, input: usize) -> Array2<f64> {
    let mut d = Array2::zeros((output, input));
    let norm0 = (1.0 / input as f64).sqrt();
    let norm = (2.0 / input as f64).sqrt();
    for k in 0..output {
        let alpha = if k == 0 { norm0 } else { norm };
        for m in 0..input {
            d[[k, m]] = alpha
                * (std::f64::consts::PI * (2 * m + 1) as f64 * k as f64
                    / (2 * input) as f64)
                    .cos();
        }
    }
    d
}

// ---------------------------------------------------------------------------
// Extraction pipeline
// ---------------------------------------------------------------------------

/// Precomputed extraction state for one sample rate: FFT plan, Hamming
/// curve, filterbank, and DCT matrix. Building one per clip would swamp the
/// per-frame math, so the pipeline (and the bench harness) reuses it.
pub struct FeatureExtractor {
    sample_rate_hz: u32,
    frame_len: usize,
    fft_len: usize,
    fft: Arc<dyn Fft<f64>>,
    hamming: Vec<f64>,
    filterbank: Array2<f64>,
    dct: Array2<f64>,
}

impl FeatureExtractor {
    /// # Errors
    ///
    /// `RateTooLow` when 10 ms spans fewer than 2 samples.
    pub fn new(sample_rate_hz: u32) -> Result<FeatureExtractor, FeatureError> {
        let frame_len = (sample_rate_hz / 100) as usize;
        if frame_len < 2 {
            return Err(FeatureError::RateTooLow(sample_rate_hz));
        }
        let fft_len = frame_len.next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        Ok(FeatureExtractor {
            sample_rate_hz,
            frame_len,
            fft_len,
            fft,
            hamming: hamming_window(frame_len),
            filterbank: build_mel_filterbank(NUM_MEL_FILTERS, fft_len, sample_rate_hz),
            dct: dct_ii_matrix(NUM_CEPSTRA, NUM_MEL_FILTERS),
        })
    }

    #[must_use]
    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    #[must_use]
    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    #[must_use]
    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    /// Splits a clip into non-overlapping Hamming-weighted 10 ms frames.
    /// The trailing partial frame is discarded.
    ///
    /// # Errors
    ///
    /// `ClipTooShort` when not even one frame fits.
    pub fn frame_signal(&self, samples: &[f64]) -> Result<Vec<Vec<f64>>, FeatureError> {
        if samples.len() < self.frame_len {
            return Err(FeatureError::ClipTooShort {
                samples: samples.len(),
                frame_len: self.frame_len,
            });
        }
        Ok(samples
            .chunks_exact(self.frame_len)
            .map(|chunk| chunk.iter().zip(&self.hamming).map(|(s, w)| s * w).collect())
            .collect())
    }

    /// 32 MFCCs of one already-weighted frame.
    #[must_use]
    pub fn mfcc(&self, frame: &[f64]) -> Vec<f64> {
        assert_eq!(frame.len(), self.frame_len, "frame length mismatch");

        let mut work = frame.to_vec();
        pre_emphasize(&mut work);

        let mut buf: Vec<Complex<f64>> = work
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.fft_len)
            .collect();
        self.fft.process(&mut buf);

        let bins = self.fft_len / 2 + 1;
        let magnitude = Array1::from_iter(buf[..bins].iter().map(|c| c.norm()));

        let energies = self.filterbank.dot(&magnitude);
        let logs = energies.mapv(|e| e.max(LOG_FLOOR).ln());
        self.dct.dot(&logs).to_vec()
    }

    /// Full front-end: frames → MFCC → deltas, as a T×96 matrix.
    ///
    /// # Errors
    ///
    /// `ClipTooShort` when the clip holds less than one frame.
    pub fn extract(&self, samples: &[f64]) -> Result<FrameMatrix, FeatureError> {
        let frames = self.frame_signal(samples)?;
        let t = frames.len();
        let mut base = Array2::zeros((t, NUM_CEPSTRA));
        for (i, frame) in frames.iter().enumerate() {
            let coeffs = self.mfcc(frame);
            base.row_mut(i)
                .iter_mut()
                .zip(&coeffs)
                .for_each(|(dst, &c)| *dst = c);
        }
        Ok(add_deltas(&base))
    }
}

/// One-off framing at a clip's own sample rate. Prefer a reused
/// [`FeatureExtractor`] in loops.
///
/// # Errors
///
/// See [`FeatureExtractor::frame_signal`].
pub fn frame_signal(samples: &[f64], sample_rate_hz: u32) -> Result<Vec<Vec<f64>>, FeatureError> {
    FeatureExtractor::new(sample_rate_hz)?.frame_signal(samples)
}

/// One-off MFCC of a single weighted frame.
///
/// # Errors
///
/// `RateTooLow` for degenerate sample rates.
pub fn mfcc(frame: &[f64], sample_rate_hz: u32) -> Result<Vec<f64>, FeatureError> {
    Ok(FeatureExtractor::new(sample_rate_hz)?.mfcc(frame))
}

/// One-off full extraction.
///
/// # Errors
///
/// See [`FeatureExtractor::extract`].
pub fn extract_features(samples: &[f64], sample_rate_hz: u32) -> Result<FrameMatrix, FeatureError> {
    FeatureExtractor::new(sample_rate_hz)?.extract(samples)
}

// ---------------------------------------------------------------------------
// Deltas
// ---------------------------------------------------------------------------

/// HTK-style regression deltas, half-width 2, edge frames replicated:
/// d_t = (1·(c_{t+1} − c_{t−1}) + 2·(c_{t+2} − c_{t−2})) / 10.
fn delta_matrix(m: &Array2<f64>) -> Array2<f64> {
    let (t_len, dim) = m.dim();
    let clamp = |t: isize| -> usize { t.clamp(0, t_len as isize - 1) as usize };
    let mut out = Array2::zeros((t_len, dim));
    for t in 0..t_len as isize {
        for d in 0..dim {
            let mut acc = 0.0;
            for n in 1..=2isize {
                acc += n as f64 * (m[[clamp(t + n), d]] - m[[clamp(t - n), d]]);
            }
            out[[t as usize, d]] = acc / 10.0;
        }
    }
    out
}

/// Expands a T×32 MFCC matrix to T×96 by appending delta and double-delta
/// blocks, in that column order.
#[must_use]
pub fn add_deltas(base: &Array2<f64>) -> FrameMatrix {
    let (t_len, dim) = base.dim();
    let delta = delta_matrix(base);
    let ddelta = delta_matrix(&delta);

    let mut frames = Array2::zeros((t_len, 3 * dim));
    frames.slice_mut(s![.., 0..dim]).assign(base);
    frames.slice_mut(s![.., dim..2 * dim]).assign(&delta);
    frames.slice_mut(s![.., 2 * dim..3 * dim]).assign(&ddelta);
    FrameMatrix { frames }
}

/// A clip's feature sequence: one row per 10 ms frame, 96 columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub frames: Array2<f64>,
}

impl FrameMatrix {
    #[must_use]
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }
}

// ---------------------------------------------------------------------------
// Sliding windows
// ---------------------------------------------------------------------------

/// Window length and framewise overlap; stride is derived exactly.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WindowConfig {
    pub window_len_frames: usize,
    /// One of 0.5 / 0.7 / 0.9.
    pub overlap_fraction: f64,
}

impl WindowConfig {
    /// # Errors
    ///
    /// `InvalidOverlap` unless the fraction is exactly 0.5, 0.7, or 0.9;
    /// `InvalidWindowLen` for a zero-length window.
    pub fn new(window_len_frames: usize, overlap_fraction: f64) -> Result<WindowConfig, FeatureError> {
        if window_len_frames == 0 {
            return Err(FeatureError::InvalidWindowLen);
        }
        if !OVERLAP_CHOICES.contains(&overlap_fraction) {
            return Err(FeatureError::InvalidOverlap(overlap_fraction));
        }
        Ok(WindowConfig {
            window_len_frames,
            overlap_fraction,
        })
    }

    /// Frames advanced between windows: max(1, floor(W·(1−overlap))).
    ///
    /// Computed in integer percent so W=30 at 90% overlap is exactly 3,
    /// immune to the 0.1-is-not-representable float artifact.
    #[must_use]
    pub fn stride(&self) -> usize {
        let percent = (self.overlap_fraction * 100.0).round() as usize;
        (self.window_len_frames * (100 - percent) / 100).max(1)
    }
}

/// One LSTM input: a W×96 slice of a clip's frame matrix plus labels.
///
/// Windows share the clip's matrix instead of copying it; `data()` is the
/// W×96 view. Thousands of deep windows would otherwise duplicate hundreds
/// of megabytes.
#[derive(Debug, Clone)]
pub struct FeatureWindow {
    frames: Arc<Array2<f64>>,
    start: usize,
    window_len: usize,
    /// The user that produced the source clip.
    pub label: u32,
    /// Identifier of the source clip (unique within a dataset build).
    pub source_clip: u64,
    /// Position of this window within its clip.
    pub window_index: u32,
}

impl FeatureWindow {
    /// Builds a standalone window from an owned matrix (test helper and
    /// single-window paths).
    #[must_use]
    pub fn from_matrix(data: Array2<f64>, label: u32, source_clip: u64) -> FeatureWindow {
        let window_len = data.nrows();
        FeatureWindow {
            frames: Arc::new(data),
            start: 0,
            window_len,
            label,
            source_clip,
            window_index: 0,
        }
    }

    /// The W×96 feature view.
    #[must_use]
    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.frames
            .slice(s![self.start..self.start + self.window_len, ..])
    }

    #[must_use]
    pub fn window_len(&self) -> usize {
        self.window_len
    }
}

/// Slices a frame matrix into fixed-length windows.
///
/// Returns the empty vector when fewer than W frames exist; the clip is
/// then "skipped", a legal outcome the dataset layer counts.
#[must_use]
pub fn make_windows(
    frames: &FrameMatrix,
    config: &WindowConfig,
    label: u32,
    source_clip: u64,
) -> Vec<FeatureWindow> {
    let t = frames.num_frames();
    let w = config.window_len_frames;
    if t < w {
        return Vec::new();
    }
    let stride = config.stride();
    let shared = Arc::new(frames.frames.clone());
    let count = (t - w) / stride + 1;
    (0..count)
        .map(|i| FeatureWindow {
            frames: Arc::clone(&shared),
            start: i * stride,
            window_len: w,
            label,
            source_clip,
            window_index: i as u32,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Feature dump format (test vectors)
// ---------------------------------------------------------------------------

const DUMP_MAGIC: &[u8; 4] = b"BFEA";

/// Writes a frame matrix as the little-endian "BFEA" dump.
///
/// # Errors
///
/// `IoFailure` on write problems.
pub fn write_feature_dump(matrix: &FrameMatrix, path: &Path) -> Result<(), FeatureError> {
    let (t, d) = matrix.frames.dim();
    let mut bytes = Vec::with_capacity(12 + t * d * 8);
    bytes.extend_from_slice(DUMP_MAGIC);
    bytes.extend_from_slice(&(t as u32).to_le_bytes());
    bytes.extend_from_slice(&(d as u32).to_le_bytes());
    for row in matrix.frames.rows() {
        for &v in row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a "BFEA" dump back into a frame matrix.
///
/// # Errors
///
/// `MalformedDump` for bad magic or size mismatches, `IoFailure` on read
/// problems.
pub fn read_feature_dump(path: &Path) -> Result<FrameMatrix, FeatureError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != DUMP_MAGIC {
        return Err(FeatureError::MalformedDump("missing BFEA magic".into()));
    }
    let t = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + t * d * 8;
    if bytes.len() != expected {
        return Err(FeatureError::MalformedDump(format!(
            "expected {expected} bytes for {t}x{d}, found {}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes[12..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let frames = Array2::from_shape_vec((t, d), values)
        .map_err(|e| FeatureError::MalformedDump(e.to_string()))?;
    Ok(FrameMatrix { frames })
}
