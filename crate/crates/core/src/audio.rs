//! WAV file I/O and deterministic synthetic breathing clips.
//!
//! The WAV surface is deliberately narrow: little-endian RIFF, mono,
//! 16-bit PCM or 32-bit IEEE float. Anything else is rejected rather than
//! guessed at. The synthesizer stands in for a private breathing corpus:
//! white noise shaped by 2-3 two-pole resonators and a gesture envelope,
//! fully reproducible from a 64-bit seed.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sample rate used when nothing else is requested.
pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;

/// Envelope floor relative to the burst peak. Keeps "silence" at a small
/// nonzero level so downstream log-energies stay in a sane range while the
/// burst/inter-burst RMS contrast remains far above the 3x detection bar.
const ENVELOPE_FLOOR: f64 = 0.005;

/// Full-clip RMS target after synthesis; inside the contract range [0.05, 0.5].
const TARGET_RMS: f64 = 0.15;

/// Breathing gesture kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gesture {
    /// Two quick nasal inhalations.
    Sniff,
    /// One prolonged breath.
    Deep,
}

impl Gesture {
    /// Shortest clip that can hold the gesture, in milliseconds.
    #[must_use]
    pub fn min_duration_ms(self) -> u32 {
        match self {
            Gesture::Sniff => 200,
            Gesture::Deep => 1000,
        }
    }

    #[must_use]
    pub fn as_str(self) -> &'static str {
        match self {
            Gesture::Sniff => "sniff",
            Gesture::Deep => "deep",
        }
    }
}

impl std::str::FromStr for Gesture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sniff" => Ok(Gesture::Sniff),
            "deep" => Ok(Gesture::Deep),
            other => Err(format!("unknown gesture '{other}' (expected sniff|deep)")),
        }
    }
}

impl std::fmt::Display for Gesture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a clip is raw source material or an augmented copy.
///
/// The dataset module uses this to guarantee that evaluation sets are never
/// built from augmented audio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Original,
    Augmented,
}

/// A mono audio clip plus the labels the pipeline needs.
#[derive(Debug, Clone)]
pub struct AudioClip {
    /// Samples in [-1, 1].
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
    pub gesture: Gesture,
    pub user_id: u32,
    /// Recording session, 1..=3.
    pub session: u8,
    pub provenance: Provenance,
}

impl AudioClip {
    #[must_use]
    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Root-mean-square level over the whole clip.
    #[must_use]
    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum_sq: f64 = self.samples.iter().map(|s| s * s).sum();
        (sum_sq / self.samples.len() as f64).sqrt()
    }
}

/// Errors from audio I/O and synthesis.
#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("truncated WAV data: {0}")]
    TruncatedData(String),
    #[error("audio I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("{gesture} clip of {got_ms} ms is shorter than the {min_ms} ms minimum")]
    DurationTooShort {
        gesture: Gesture,
        got_ms: u32,
        min_ms: u32,
    },
}

// ---------------------------------------------------------------------------
// WAV parsing / writing
// ---------------------------------------------------------------------------

fn le_u16(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Loads a mono 16-bit PCM or 32-bit IEEE-float WAV file.
///
/// Gesture, user, and session are not stored in WAV files, so the caller
/// (normally the dataset manifest) supplies them.
///
/// # Errors
///
/// `MalformedHeader` for anything that is not a RIFF/WAVE file with `fmt `
/// and `data` chunks, `UnsupportedEncoding` for codecs, bit depths, or
/// channel counts outside the supported subset, `TruncatedData` when the
/// data chunk promises more bytes than the file holds.
pub fn load_wav(
    path: &Path,
    gesture: Gesture,
    user_id: u32,
    session: u8,
) -> Result<AudioClip, AudioError> {
    let bytes = fs::read(path)?;
    let samples_and_rate = parse_wav(&bytes)?;
    Ok(AudioClip {
        samples: samples_and_rate.0,
        sample_rate_hz: samples_and_rate.1,
        gesture,
        user_id,
        session,
        provenance: Provenance::Original,
    })
}

/// Parses WAV bytes into normalized f64 samples plus the sample rate.
pub fn parse_wav(bytes: &[u8]) -> Result<(Vec<f64>, u32), AudioError> {
    if bytes.len() < 12 {
        return Err(AudioError::MalformedHeader(
            "file shorter than a RIFF header".into(),
        ));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::MalformedHeader(
            "missing RIFF/WAVE magic".into(),
        ));
    }

    let mut pos = 12;
    let mut format: Option<(u16, u16, u32)> = None; // (tag, bits, rate)
    let mut data: Option<&[u8]> = None;

    while pos + 8 <= bytes.len() {
        let chunk_id = &bytes[pos..pos + 4];
        let chunk_size = le_u32(bytes, pos + 4) as usize;
        pos += 8;

        match chunk_id {
            b"fmt " => {
                if chunk_size < 16 || pos + 16 > bytes.len() {
                    return Err(AudioError::MalformedHeader("fmt chunk too small".into()));
                }
                let tag = le_u16(bytes, pos);
                let channels = le_u16(bytes, pos + 2);
                let rate = le_u32(bytes, pos + 4);
                let bits = le_u16(bytes, pos + 14);
                if channels != 1 {
                    return Err(AudioError::UnsupportedEncoding(format!(
                        "{channels} channels (mono required; downmixing is not done silently)"
                    )));
                }
                if rate == 0 {
                    return Err(AudioError::MalformedHeader("zero sample rate".into()));
                }
                format = Some((tag, bits, rate));
            }
            b"data" => {
                if pos + chunk_size > bytes.len() {
                    return Err(AudioError::TruncatedData(format!(
                        "data chunk declares {chunk_size} bytes, {} available",
                        bytes.len() - pos
                    )));
                }
                data = Some(&bytes[pos..pos + chunk_size]);
            }
            _ => {} // LIST, fact, etc. are skipped
        }

        // Chunks are word-aligned; odd sizes carry a pad byte.
        pos += chunk_size + (chunk_size & 1);
    }

    let (tag, bits, rate) =
        format.ok_or_else(|| AudioError::MalformedHeader("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::MalformedHeader("missing data chunk".into()))?;

    let samples = match (tag, bits) {
        (1, 16) => {
            if data.len() % 2 != 0 {
                return Err(AudioError::TruncatedData(
                    "16-bit data chunk with odd byte count".into(),
                ));
            }
            data.chunks_exact(2)
                .map(|ch| i16::from_le_bytes([ch[0], ch[1]]) as f64 / 32768.0)
                .collect()
        }
        (3, 32) => {
            if data.len() % 4 != 0 {
                return Err(AudioError::TruncatedData(
                    "32-bit float data chunk not a multiple of 4 bytes".into(),
                ));
            }
            data.chunks_exact(4)
                .map(|ch| {
                    (f32::from_le_bytes([ch[0], ch[1], ch[2], ch[3]]) as f64).clamp(-1.0, 1.0)
                })
                .collect()
        }
        (tag, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "format tag {tag} with {bits}-bit samples (PCM16 or float32 only)"
            )));
        }
    };

    Ok((samples, rate))
}

/// Writes a clip as mono 16-bit PCM, clipping samples to [-1, 1].
///
/// Reloading reproduces every sample within one 16-bit quantization step.
///
/// # Errors
///
/// `IoFailure` when the file cannot be written.
pub fn write_wav(clip: &AudioClip, path: &Path) -> Result<(), AudioError> {
    let data_len = clip.samples.len() * 2;
    let mut bytes = Vec::with_capacity(44 + data_len);

    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    bytes.extend_from_slice(b"WAVE");

    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes()); // PCM
    bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
    bytes.extend_from_slice(&clip.sample_rate_hz.to_le_bytes());
    bytes.extend_from_slice(&(clip.sample_rate_hz * 2).to_le_bytes()); // byte rate
    bytes.extend_from_slice(&2u16.to_le_bytes()); // block align
    bytes.extend_from_slice(&16u16.to_le_bytes()); // bits

    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let code = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        bytes.extend_from_slice(&code.to_le_bytes());
    }

    fs::write(path, bytes)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic clip generation
// ---------------------------------------------------------------------------

/// Burst envelope timing in milliseconds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Envelope {
    pub attack_ms: f64,
    pub sustain_ms: f64,
    pub decay_ms: f64,
}

/// Per-user voice stand-in: resonance layout plus a per-clip noise seed.
///
/// Resonances are a pure function of (user, profile seed), so every clip of
/// a user shares the same spectral signature; `noise_seed` is what varies
/// from clip to clip.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthProfile {
    pub user_id: u32,
    /// 2-3 resonance center frequencies, primary first (largest gain).
    pub resonance_hz: Vec<f64>,
    /// -3 dB bandwidth per resonance.
    pub bandwidth_hz: Vec<f64>,
    pub envelope: Envelope,
    /// Seed for this clip's noise excitation.
    pub seed: u64,
}

/// Stable 64-bit mixer for deriving sub-seeds. SplitMix64 finalizer; kept
/// local so seed derivation never silently changes with a dependency bump.
#[must_use]
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SynthProfile {
    /// Derives a user's resonance layout from a corpus-level seed.
    ///
    /// Primary resonances sit on a 167 Hz grid with a small seeded jitter,
    /// which keeps dominant spectral peaks pairwise distinct for desk-scale
    /// cohorts (up to 12 users before the grid wraps).
    #[must_use]
    pub fn for_user(user_id: u32, corpus_seed: u64) -> SynthProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(corpus_seed, u64::from(user_id)));

        let grid = 360.0 + (f64::from(user_id) * 167.0) % 2000.0;
        let primary = grid + rng.random_range(-15.0..15.0);

        let mut resonance_hz = vec![primary];
        let mut bandwidth_hz = vec![rng.random_range(40.0..70.0)];

        let secondary = (primary * rng.random_range(1.8..2.1)).min(6000.0);
        resonance_hz.push(secondary);
        bandwidth_hz.push(rng.random_range(40.0..70.0));

        if rng.random_bool(0.5) {
            let tertiary = (primary * rng.random_range(2.9..3.3)).min(6500.0);
            resonance_hz.push(tertiary);
            bandwidth_hz.push(rng.random_range(50.0..80.0));
        }

        let envelope = Envelope {
            attack_ms: rng.random_range(15.0..25.0),
            sustain_ms: rng.random_range(60.0..100.0),
            decay_ms: rng.random_range(30.0..50.0),
        };

        SynthProfile {
            user_id,
            resonance_hz,
            bandwidth_hz,
            envelope,
            seed: corpus_seed,
        }
    }

    /// Same profile, different clip: swaps in a per-clip noise seed.
    #[must_use]
    pub fn with_noise_seed(mut self, noise_seed: u64) -> SynthProfile {
        self.seed = noise_seed;
        self
    }
}

/// Two-pole resonator: y[n] = g·x[n] + 2r·cos(θ)·y[n-1] − r²·y[n-2].
///
/// Pole radius from bandwidth as r = exp(−π·bw/fs), so narrow bandwidths put
/// the spectral peak within a fraction of a percent of `center_hz`.
fn resonate(input: &[f64], center_hz: f64, bandwidth_hz: f64, sample_rate_hz: u32) -> Vec<f64> {
    let fs = f64::from(sample_rate_hz);
    let r = (-PI * bandwidth_hz / fs).exp();
    let theta = 2.0 * PI * center_hz / fs;
    let a1 = 2.0 * r * theta.cos();
    let a2 = -(r * r);
    let gain = 1.0 - r * r;

    let mut out = vec![0.0; input.len()];
    let mut y1 = 0.0;
    let mut y2 = 0.0;
    for (n, &x) in input.iter().enumerate() {
        let y = gain * x + a1 * y1 + a2 * y2;
        out[n] = y;
        y2 = y1;
        y1 = y;
    }
    out
}

/// Writes one attack/sustain/decay burst into `env` starting at `start_ms`.
fn write_burst(env: &mut [f64], sample_rate_hz: u32, start_ms: f64, shape: Envelope) {
    let fs = f64::from(sample_rate_hz);
    let at = |ms: f64| ((ms / 1000.0) * fs) as usize;

    let a0 = at(start_ms);
    let a1 = at(start_ms + shape.attack_ms);
    let s1 = at(start_ms + shape.attack_ms + shape.sustain_ms);
    let d1 = at(start_ms + shape.attack_ms + shape.sustain_ms + shape.decay_ms);

    for i in a0..a1.min(env.len()) {
        let t = (i - a0) as f64 / (a1 - a0).max(1) as f64;
        env[i] = env[i].max(t);
    }
    for i in a1..s1.min(env.len()) {
        env[i] = 1.0;
    }
    for i in s1..d1.min(env.len()) {
        let t = (i - s1) as f64 / (d1 - s1).max(1) as f64;
        env[i] = env[i].max(1.0 - t);
    }
}

/// Gesture envelope over `n` samples: two bursts for sniff, one sustained
/// burst for deep, floored at a small nonzero level.
fn gesture_envelope(gesture: Gesture, shape: Envelope, n: usize, sample_rate_hz: u32) -> Vec<f64> {
    let duration_ms = n as f64 * 1000.0 / f64::from(sample_rate_hz);
    let mut env = vec![ENVELOPE_FLOOR; n];

    match gesture {
        Gesture::Sniff => {
            // Each burst fits inside 35% of the clip; bursts start at 5% and
            // 55%, leaving a silent gap of at least 15% between them.
            let nominal = shape.attack_ms + shape.sustain_ms + shape.decay_ms;
            let q = (0.35 * duration_ms / nominal).min(1.0);
            let scaled = Envelope {
                attack_ms: shape.attack_ms * q,
                sustain_ms: shape.sustain_ms * q,
                decay_ms: shape.decay_ms * q,
            };
            write_burst(&mut env, sample_rate_hz, 0.05 * duration_ms, scaled);
            write_burst(&mut env, sample_rate_hz, 0.55 * duration_ms, scaled);
        }
        Gesture::Deep => {
            // One burst spanning 5%..95% of the clip, sustain stretched to fill.
            let attack = shape.attack_ms.min(0.15 * duration_ms);
            let decay = shape.decay_ms.min(0.15 * duration_ms);
            let sustain = (0.90 * duration_ms - attack - decay).max(0.0);
            let scaled = Envelope {
                attack_ms: attack,
                sustain_ms: sustain,
                decay_ms: decay,
            };
            write_burst(&mut env, sample_rate_hz, 0.05 * duration_ms, scaled);
        }
    }
    env
}

/// Synthesizes one breathing clip at the default sample rate.
///
/// Pure function of its arguments: the same (profile, gesture, duration)
/// always produces bit-identical samples. The session field defaults to 1;
/// callers tracking sessions overwrite it.
///
/// # Errors
///
/// `DurationTooShort` when the clip cannot hold the gesture (sniff needs
/// 200 ms, deep 1000 ms).
pub fn synthesize_clip(
    profile: &SynthProfile,
    gesture: Gesture,
    duration_ms: u32,
) -> Result<AudioClip, AudioError> {
    synthesize_clip_at(profile, gesture, duration_ms, DEFAULT_SAMPLE_RATE)
}

/// `synthesize_clip` at an explicit sample rate.
///
/// # Errors
///
/// See [`synthesize_clip`].
pub fn synthesize_clip_at(
    profile: &SynthProfile,
    gesture: Gesture,
    duration_ms: u32,
    sample_rate_hz: u32,
) -> Result<AudioClip, AudioError> {
    let min_ms = gesture.min_duration_ms();
    if duration_ms < min_ms {
        return Err(AudioError::DurationTooShort {
            gesture,
            got_ms: duration_ms,
            min_ms,
        });
    }

    let n = (u64::from(duration_ms) * u64::from(sample_rate_hz) / 1000) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(profile.seed, gesture as u64 + 1));

    let noise: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();

    // Primary resonance carries the most energy so the dominant spectral
    // peak identifies the user; halve the gain per extra resonance.
    let mut mixed = vec![0.0; n];
    for (k, (&f, &bw)) in profile
        .resonance_hz
        .iter()
        .zip(&profile.bandwidth_hz)
        .enumerate()
    {
        let gain = 0.5f64.powi(k as i32);
        let shaped = resonate(&noise, f, bw, sample_rate_hz);
        for (m, y) in mixed.iter_mut().zip(&shaped) {
            *m += gain * y;
        }
    }

    let env = gesture_envelope(gesture, profile.envelope, n, sample_rate_hz);
    let mut samples: Vec<f64> = mixed.iter().zip(&env).map(|(&m, &e)| m * e).collect();

    let rms = (samples.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        let scale = TARGET_RMS / rms;
        for s in &mut samples {
            *s = (*s * scale).clamp(-1.0, 1.0);
        }
    }

    Ok(AudioClip {
        samples,
        sample_rate_hz,
        gesture,
        user_id: profile.user_id,
        session: 1,
        provenance: Provenance::Original,
    })
}
