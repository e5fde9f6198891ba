//! Clip manifests and deterministic session-based splits.
//!
//! A manifest is JSON-lines, one clip per line, either pointing at a WAV
//! file or carrying a synthesis descriptor. Splits follow the session
//! protocol: sessions 1 and 2 train (minus a held-out tail of session 2
//! for intra-session evaluation), session 3 is the inter-session set.
//! Only the training pool is augmented; window-level shuffling and the
//! 80/20 train/validation cut are pure functions of the split seed.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{mix_seed, synthesize_clip, AudioClip, AudioError, Gesture, SynthProfile};
use crate::augment::{expand_training_set, AugmentError};
use crate::features::{
    make_windows, FeatureError, FeatureExtractor, FeatureWindow, WindowConfig,
};

/// Session-2 clips held out for intra-session evaluation, by default.
pub const DEFAULT_INTRA_HOLDOUT: usize = 10;

/// Strict-mode session layout: clips per user in sessions 1, 2, 3.
pub const STRICT_SESSION_SIZES: [usize; 3] = [30, 30, 10];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest line {line}: {message}")]
    MalformedManifest { line: usize, message: String },
    #[error("user {user} session {session}: need {needed} clips, found {got}")]
    InsufficientSamples {
        user: u32,
        session: u8,
        needed: usize,
        got: usize,
    },
    #[error("strict layout: user {user} session {session} must hold {expected} clips, found {got}")]
    StrictLayoutViolation {
        user: u32,
        session: u8,
        expected: usize,
        got: usize,
    },
    #[error("need at least 2 users, found {got}")]
    TooFewUsers { got: usize },
    #[error("user {user} has an empty training pool")]
    EmptyTrainingPool { user: u32 },
    #[error("training pool produced no windows (all clips shorter than the window)")]
    NoTrainingWindows,
    #[error("dataset I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
}

/// Where a clip's samples come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipSource {
    /// WAV file, relative paths resolved against the manifest's directory.
    Path(PathBuf),
    /// Synthesized on demand; fully determined by the two seeds.
    Synth {
        profile_seed: u64,
        noise_seed: u64,
        duration_ms: u32,
    },
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub source: ClipSource,
    pub user: u32,
    pub gesture: Gesture,
    pub session: u8,
    pub index: u32,
}

/// An ordered clip listing. Order is load-bearing: session splits slice
/// each user's session-2 clips by their position here.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Parses JSON-lines; blank lines are allowed.
    ///
    /// # Errors
    ///
    /// `MalformedManifest` with the offending 1-based line number.
    pub fn read(path: &Path) -> Result<Manifest, DatasetError> {
        let file = fs::File::open(path)?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| {
                DatasetError::MalformedManifest {
                    line: i + 1,
                    message: e.to_string(),
                }
            })?;
            entries.push(entry);
        }
        Ok(Manifest { entries })
    }

    /// Writes JSON-lines.
    ///
    /// # Errors
    ///
    /// `IoFailure` on write problems.
    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        let mut out = fs::File::create(path)?;
        for entry in &self.entries {
            let line = serde_json::to_string(entry).expect("manifest entries serialize");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Entries for one gesture, order preserved.
    #[must_use]
    pub fn for_gesture(&self, gesture: Gesture) -> Manifest {
        Manifest {
            entries: self
                .entries
                .iter()
                .filter(|e| e.gesture == gesture)
                .cloned()
                .collect(),
        }
    }
}

/// Materializes one entry into samples.
///
/// # Errors
///
/// WAV parsing failures for path sources.
pub fn realize_clip(entry: &ManifestEntry, base_dir: &Path) -> Result<AudioClip, DatasetError> {
    match &entry.source {
        ClipSource::Path(p) => {
            let full = if p.is_absolute() {
                p.clone()
            } else {
                base_dir.join(p)
            };
            Ok(crate::audio::load_wav(
                &full,
                entry.gesture,
                entry.user,
                entry.session,
            )?)
        }
        ClipSource::Synth {
            profile_seed,
            noise_seed,
            duration_ms,
        } => {
            let profile =
                SynthProfile::for_user(entry.user, *profile_seed).with_noise_seed(*noise_seed);
            let mut clip = synthesize_clip(&profile, entry.gesture, *duration_ms)?;
            clip.session = entry.session;
            Ok(clip)
        }
    }
}

/// Materializes a whole manifest, preserving entry order.
///
/// # Errors
///
/// First clip failure aborts.
pub fn realize_manifest(
    manifest: &Manifest,
    base_dir: &Path,
) -> Result<Vec<AudioClip>, DatasetError> {
    manifest
        .entries
        .iter()
        .map(|e| realize_clip(e, base_dir))
        .collect()
}

/// Split construction knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    pub window: WindowConfig,
    pub gesture: Gesture,
    /// Augmented copies per training clip (0 = originals only).
    pub augment_copies: usize,
    /// Seeds augmentation factors and the window shuffle.
    pub seed: u64,
    /// Session-2 clips per user reserved for the intra-session set.
    pub intra_holdout: usize,
    /// Enforce the 30/30/10 session layout.
    pub strict: bool,
}

impl SplitConfig {
    #[must_use]
    pub fn new(window: WindowConfig, gesture: Gesture, seed: u64) -> SplitConfig {
        SplitConfig {
            window,
            gesture,
            augment_copies: 0,
            seed,
            intra_holdout: DEFAULT_INTRA_HOLDOUT,
            strict: false,
        }
    }
}

/// Clips that produced no windows, by destination.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedCounts {
    pub train: usize,
    pub intra: usize,
    pub inter: usize,
}

impl SkippedCounts {
    #[must_use]
    pub fn total(&self) -> usize {
        self.train + self.intra + self.inter
    }
}

/// The four window sets plus bookkeeping. Labels are class indices into
/// `users`, which lists raw user ids in ascending order.
pub struct SplitBundle {
    pub train: Vec<FeatureWindow>,
    pub validation: Vec<FeatureWindow>,
    pub intra: Vec<FeatureWindow>,
    pub inter: Vec<FeatureWindow>,
    pub users: Vec<u32>,
    pub skipped: SkippedCounts,
}

struct WindowSink {
    extractors: BTreeMap<u32, FeatureExtractor>,
    next_clip_id: u64,
}

impl WindowSink {
    fn new() -> WindowSink {
        WindowSink {
            extractors: BTreeMap::new(),
            next_clip_id: 0,
        }
    }

    /// Windows for one clip; `None` when the clip is too short and should
    /// be counted as skipped.
    fn windows_of(
        &mut self,
        clip: &AudioClip,
        config: &WindowConfig,
        label: u32,
    ) -> Result<Option<Vec<FeatureWindow>>, DatasetError> {
        let rate = clip.sample_rate_hz;
        if !self.extractors.contains_key(&rate) {
            self.extractors.insert(rate, FeatureExtractor::new(rate)?);
        }
        let extractor = &self.extractors[&rate];
        let matrix = match extractor.extract(&clip.samples) {
            Ok(m) => m,
            Err(FeatureError::ClipTooShort { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let clip_id = self.next_clip_id;
        self.next_clip_id += 1;
        let windows = make_windows(&matrix, config, label, clip_id);
        if windows.is_empty() {
            return Ok(None);
        }
        Ok(Some(windows))
    }
}

/// Builds the train/validation/intra/inter window sets from clips in
/// manifest order.
///
/// # Errors
///
/// Layout violations, too few users or session clips, and empty pools.
pub fn make_splits(clips: &[AudioClip], config: &SplitConfig) -> Result<SplitBundle, DatasetError> {
    // Group this gesture's clips by user, keeping manifest order per session.
    let mut per_user: BTreeMap<u32, [Vec<&AudioClip>; 3]> = BTreeMap::new();
    for clip in clips.iter().filter(|c| c.gesture == config.gesture) {
        let slot = match clip.session {
            1 => 0,
            2 => 1,
            3 => 2,
            other => {
                return Err(DatasetError::MalformedManifest {
                    line: 0,
                    message: format!("session {other} is not 1, 2, or 3"),
                })
            }
        };
        per_user.entry(clip.user_id).or_default()[slot].push(clip);
    }

    if per_user.len() < 2 {
        return Err(DatasetError::TooFewUsers {
            got: per_user.len(),
        });
    }
    let users: Vec<u32> = per_user.keys().copied().collect();

    if config.strict {
        for (&user, sessions) in &per_user {
            for (s, &expected) in STRICT_SESSION_SIZES.iter().enumerate() {
                if sessions[s].len() != expected {
                    return Err(DatasetError::StrictLayoutViolation {
                        user,
                        session: (s + 1) as u8,
                        expected,
                        got: sessions[s].len(),
                    });
                }
            }
        }
    }

    // Assemble per-user pools and holdouts.
    let mut pool: Vec<AudioClip> = Vec::new();
    let mut intra_clips: Vec<(u32, AudioClip)> = Vec::new();
    let mut inter_clips: Vec<(u32, AudioClip)> = Vec::new();
    for (class, &user) in users.iter().enumerate() {
        let sessions = &per_user[&user];
        let s2 = &sessions[1];
        if s2.len() < config.intra_holdout {
            return Err(DatasetError::InsufficientSamples {
                user,
                session: 2,
                needed: config.intra_holdout,
                got: s2.len(),
            });
        }
        let keep = s2.len() - config.intra_holdout;
        if sessions[0].is_empty() && keep == 0 {
            return Err(DatasetError::EmptyTrainingPool { user });
        }
        if sessions[2].is_empty() {
            return Err(DatasetError::InsufficientSamples {
                user,
                session: 3,
                needed: 1,
                got: 0,
            });
        }
        for &c in sessions[0].iter().chain(&s2[..keep]) {
            pool.push(c.clone());
        }
        for &c in &s2[keep..] {
            intra_clips.push((class as u32, c.clone()));
        }
        for &c in &sessions[2] {
            inter_clips.push((class as u32, c.clone()));
        }
    }

    // Expansion touches only the pool; evaluation clips stay original.
    let expanded = expand_training_set(&pool, config.augment_copies, mix_seed(config.seed, 0xA9))?;
    let class_of = |user: u32| users.iter().position(|&u| u == user).unwrap() as u32;

    let mut sink = WindowSink::new();
    let mut skipped = SkippedCounts::default();
    let mut pool_windows: Vec<FeatureWindow> = Vec::new();
    for clip in &expanded {
        match sink.windows_of(clip, &config.window, class_of(clip.user_id))? {
            Some(mut w) => pool_windows.append(&mut w),
            None => skipped.train += 1,
        }
    }
    if pool_windows.is_empty() {
        return Err(DatasetError::NoTrainingWindows);
    }

    let mut intra = Vec::new();
    for (class, clip) in &intra_clips {
        match sink.windows_of(clip, &config.window, *class)? {
            Some(mut w) => intra.append(&mut w),
            None => skipped.intra += 1,
        }
    }
    let mut inter = Vec::new();
    for (class, clip) in &inter_clips {
        match sink.windows_of(clip, &config.window, *class)? {
            Some(mut w) => inter.append(&mut w),
            None => skipped.inter += 1,
        }
    }

    // Global window shuffle, then the 80/20 cut.
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0x5F));
    for i in (1..pool_windows.len()).rev() {
        let j = rng.random_range(0..=i);
        pool_windows.swap(i, j);
    }
    let train_count = (0.8 * pool_windows.len() as f64).round() as usize;
    let validation = pool_windows.split_off(train_count);

    Ok(SplitBundle {
        train: pool_windows,
        validation,
        intra,
        inter,
        users,
        skipped,
    })
}
