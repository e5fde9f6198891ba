//! Waveform augmentation: linear-interpolation time warp, amplitude
//! scaling, and deterministic training-set expansion.
//!
//! Augmentation happens in the sample domain before feature extraction.
//! A warp by factor f changes duration by f and pitch by 1/f.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::audio::{AudioClip, Provenance};

/// Warp and amplitude factors are drawn uniformly from this range.
pub const FACTOR_RANGE: (f64, f64) = (0.8, 1.2);

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("augmentation factor {0} must be positive and finite")]
    InvalidFactor(f64),
    #[error("cannot augment an empty clip")]
    EmptyInput,
}

/// Resamples to round(len·factor) samples by linear interpolation at input
/// position i/factor. Factor 1.0 reproduces the input bit-exactly; factors
/// above 1 stretch (lower pitch), below 1 compress (higher pitch).
///
/// # Errors
///
/// `InvalidFactor` for non-positive or non-finite factors, `EmptyInput`
/// when the input (or the warped output) holds no samples.
pub fn time_warp(samples: &[f64], factor: f64) -> Result<Vec<f64>, AugmentError> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(AugmentError::InvalidFactor(factor));
    }
    if samples.is_empty() {
        return Err(AugmentError::EmptyInput);
    }
    let out_len = (samples.len() as f64 * factor).round() as usize;
    if out_len == 0 {
        return Err(AugmentError::EmptyInput);
    }
    let last = samples.len() - 1;
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = i as f64 / factor;
        let i0 = (pos.floor() as usize).min(last);
        let frac = pos - i0 as f64;
        let a = samples[i0];
        let b = samples[(i0 + 1).min(last)];
        out.push(a + frac * (b - a));
    }
    Ok(out)
}

/// Scales every sample by `factor`, then clamps to [−1, 1].
///
/// # Errors
///
/// `InvalidFactor` for non-positive or non-finite factors.
pub fn amplitude_scale(samples: &[f64], factor: f64) -> Result<Vec<f64>, AugmentError> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(AugmentError::InvalidFactor(factor));
    }
    Ok(samples.iter().map(|s| (s * factor).clamp(-1.0, 1.0)).collect())
}

/// Applies one warp and one amplitude factor to a clip, marking the result
/// [`Provenance::Augmented`]. Metadata other than provenance is kept.
///
/// # Errors
///
/// Propagates the underlying factor errors.
pub fn augment_clip(clip: &AudioClip, warp: f64, amp: f64) -> Result<AudioClip, AugmentError> {
    let warped = time_warp(&clip.samples, warp)?;
    let scaled = amplitude_scale(&warped, amp)?;
    Ok(AudioClip {
        samples: scaled,
        provenance: Provenance::Augmented,
        ..clip.clone()
    })
}

/// Expands a clip list to `1 + copies` variants per clip: each original
/// (untouched) followed by its augmented copies, clip order preserved.
///
/// All factor pairs are drawn up-front from one ChaCha stream in clip-major
/// order, so the expansion is a pure function of (clips, copies, seed).
///
/// # Errors
///
/// `EmptyInput` when any clip holds no samples.
pub fn expand_training_set(
    clips: &[AudioClip],
    copies: usize,
    seed: u64,
) -> Result<Vec<AudioClip>, AugmentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors: Vec<(f64, f64)> = (0..clips.len() * copies)
        .map(|_| {
            (
                rng.random_range(FACTOR_RANGE.0..FACTOR_RANGE.1),
                rng.random_range(FACTOR_RANGE.0..FACTOR_RANGE.1),
            )
        })
        .collect();

    let mut out = Vec::with_capacity(clips.len() * (1 + copies));
    for (c, clip) in clips.iter().enumerate() {
        out.push(clip.clone());
        for k in 0..copies {
            let (warp, amp) = factors[c * copies + k];
            out.push(augment_clip(clip, warp, amp)?);
        }
    }
    Ok(out)
}
