//! Linear SVM baseline over flattened feature windows.
//!
//! One binary classifier per unordered class pair, each trained with the
//! Pegasos primal subgradient method on time-major flattened windows. The
//! bias rides along as an augmented constant-1 feature, so it is regularized
//! like every other weight. Multi-class prediction is majority vote over
//! pairs with ties resolved toward the lowest class index.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::mix_seed;
use crate::features::{FeatureWindow, FEATURE_DIM};
use crate::selection::SampleAccuracy;

/// Regularization trade-off default; λ = 1 / (C · n).
pub const DEFAULT_C: f64 = 1.0;
/// Passes over each pair's windows.
pub const DEFAULT_EPOCHS: usize = 20;
/// Grid searched by validation accuracy, first entry wins ties.
pub const C_GRID: [f64; 3] = [0.1, 1.0, 10.0];

const MAGIC: &[u8; 4] = b"BSVM";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("classes {class_a} vs {class_b}: windows of only one class")]
    SingleClassInput { class_a: u32, class_b: u32 },
    #[error("window label {label} out of range for {num_users} users")]
    LabelOutOfRange { label: u32, num_users: usize },
    #[error("expected {expected}-frame windows, got {got}")]
    WindowLenMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed classifier file: {0}")]
    MalformedFile(String),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("truncated classifier file: need {needed} bytes, got {got}")]
    TruncatedData { needed: usize, got: usize },
    #[error("classifier I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl SvmConfig {
    #[must_use]
    pub fn new(seed: u64) -> SvmConfig {
        SvmConfig {
            c: DEFAULT_C,
            epochs: DEFAULT_EPOCHS,
            seed,
        }
    }
}

/// Binary separator for one class pair; votes `class_a` on a positive margin.
#[derive(Debug, Clone, PartialEq)]
pub struct PairClassifier {
    pub class_a: u32,
    pub class_b: u32,
    pub weights: Vec<f32>,
    pub bias: f32,
}

impl PairClassifier {
    /// Signed margin for one window.
    fn margin(&self, window: &FeatureWindow) -> f64 {
        let mut acc = 0.0f64;
        let data = window.data();
        match data.as_slice() {
            Some(flat) => {
                for (w, x) in self.weights.iter().zip(flat) {
                    acc += f64::from(*w) * x;
                }
            }
            None => {
                let mut k = 0;
                for row in data.rows() {
                    for &x in row {
                        acc += f64::from(self.weights[k]) * x;
                        k += 1;
                    }
                }
            }
        }
        acc + f64::from(self.bias)
    }
}

/// All N·(N−1)/2 pair classifiers plus window geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub pairs: Vec<PairClassifier>,
    pub num_users: usize,
    pub window_len: usize,
}

impl SvmModel {
    /// Flattened window dimensionality (without the bias slot).
    #[must_use]
    pub fn feature_len(&self) -> usize {
        self.window_len * FEATURE_DIM
    }

    /// Majority vote across pairs; ties go to the lowest class index.
    ///
    /// # Errors
    ///
    /// `WindowLenMismatch` when the window geometry disagrees.
    pub fn predict(&self, window: &FeatureWindow) -> Result<u32, SvmError> {
        if window.window_len() != self.window_len {
            return Err(SvmError::WindowLenMismatch {
                expected: self.window_len,
                got: window.window_len(),
            });
        }
        let mut votes = vec![0u32; self.num_users];
        for pair in &self.pairs {
            let winner = if pair.margin(window) > 0.0 {
                pair.class_a
            } else {
                pair.class_b
            };
            votes[winner as usize] += 1;
        }
        let mut best = 0usize;
        for (i, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = i;
            }
        }
        Ok(best as u32)
    }

    /// Fraction of windows predicted correctly.
    ///
    /// # Errors
    ///
    /// Geometry mismatches; an empty set scores 0.
    pub fn window_accuracy(&self, windows: &[FeatureWindow]) -> Result<f64, SvmError> {
        if windows.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0usize;
        for w in windows {
            if self.predict(w)? == w.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / windows.len() as f64)
    }

    /// Clip-level accuracy: windows vote within their source clip, clip ties
    /// go to the lowest class index.
    ///
    /// # Errors
    ///
    /// Geometry mismatches.
    pub fn sample_accuracy(&self, windows: &[FeatureWindow]) -> Result<SampleAccuracy, SvmError> {
        use std::collections::BTreeMap;
        let mut clip_votes: BTreeMap<u64, (u32, Vec<u32>)> = BTreeMap::new();
        for w in windows {
            let predicted = self.predict(w)?;
            let entry = clip_votes
                .entry(w.source_clip)
                .or_insert_with(|| (w.label, vec![0; self.num_users]));
            entry.1[predicted as usize] += 1;
        }
        if clip_votes.is_empty() {
            return Ok(SampleAccuracy {
                fraction: 0.0,
                clips: 0,
            });
        }
        let mut hits = 0usize;
        for (label, votes) in clip_votes.values() {
            let mut best = 0usize;
            for (i, &v) in votes.iter().enumerate() {
                if v > votes[best] {
                    best = i;
                }
            }
            if best as u32 == *label {
                hits += 1;
            }
        }
        Ok(SampleAccuracy {
            fraction: hits as f64 / clip_votes.len() as f64,
            clips: clip_votes.len(),
        })
    }
}

/// Pegasos over one pair's windows. `dim` excludes the bias slot.
fn train_pair(
    windows: &[&FeatureWindow],
    class_a: u32,
    class_b: u32,
    dim: usize,
    config: &SvmConfig,
    pair_index: usize,
) -> PairClassifier {
    let n = windows.len();
    let lambda = 1.0 / (config.c * n as f64);
    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, pair_index as u64));

    let mut t = 0u64;
    for _ in 0..config.epochs {
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for &idx in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let window = windows[idx];
            let y = if window.label == class_a { 1.0 } else { -1.0 };

            let data = window.data();
            let flat = data.as_slice();
            let mut margin = b;
            match flat {
                Some(xs) => {
                    for (wk, x) in w.iter().zip(xs) {
                        margin += wk * x;
                    }
                }
                None => {
                    let mut k = 0;
                    for row in data.rows() {
                        for &x in row {
                            margin += w[k] * x;
                            k += 1;
                        }
                    }
                }
            }

            let shrink = 1.0 - eta * lambda;
            for wk in &mut w {
                *wk *= shrink;
            }
            b *= shrink;
            if y * margin < 1.0 {
                let step = eta * y;
                match flat {
                    Some(xs) => {
                        for (wk, x) in w.iter_mut().zip(xs) {
                            *wk += step * x;
                        }
                    }
                    None => {
                        let mut k = 0;
                        for row in data.rows() {
                            for &x in row {
                                w[k] += step * x;
                                k += 1;
                            }
                        }
                    }
                }
                b += step;
            }
        }
    }

    PairClassifier {
        class_a,
        class_b,
        weights: w.iter().map(|&x| x as f32).collect(),
        bias: b as f32,
    }
}

/// Trains every pair classifier.
///
/// # Errors
///
/// Empty input, out-of-range labels, bad hyperparameters, and pairs where
/// one class contributed no windows.
pub fn train_svm(
    windows: &[FeatureWindow],
    num_users: usize,
    config: &SvmConfig,
) -> Result<SvmModel, SvmError> {
    if windows.is_empty() {
        return Err(SvmError::EmptyTrainingSet);
    }
    if config.c <= 0.0 || config.epochs == 0 {
        return Err(SvmError::InvalidParameter(format!(
            "C = {}, epochs = {}",
            config.c, config.epochs
        )));
    }
    if num_users < 2 {
        return Err(SvmError::InvalidParameter(format!(
            "need at least 2 users, got {num_users}"
        )));
    }
    let window_len = windows[0].window_len();
    for w in windows {
        if w.window_len() != window_len {
            return Err(SvmError::WindowLenMismatch {
                expected: window_len,
                got: w.window_len(),
            });
        }
        if w.label as usize >= num_users {
            return Err(SvmError::LabelOutOfRange {
                label: w.label,
                num_users,
            });
        }
    }

    let dim = window_len * FEATURE_DIM;
    let mut by_class: Vec<Vec<&FeatureWindow>> = vec![Vec::new(); num_users];
    for w in windows {
        by_class[w.label as usize].push(w);
    }

    let mut pairs = Vec::with_capacity(num_users * (num_users - 1) / 2);
    let mut pair_index = 0usize;
    for a in 0..num_users {
        for b in (a + 1)..num_users {
            if by_class[a].is_empty() || by_class[b].is_empty() {
                return Err(SvmError::SingleClassInput {
                    class_a: a as u32,
                    class_b: b as u32,
                });
            }
            let mut pair_windows: Vec<&FeatureWindow> = Vec::new();
            pair_windows.extend_from_slice(&by_class[a]);
            pair_windows.extend_from_slice(&by_class[b]);
            pairs.push(train_pair(
                &pair_windows,
                a as u32,
                b as u32,
                dim,
                config,
                pair_index,
            ));
            pair_index += 1;
        }
    }

    Ok(SvmModel {
        pairs,
        num_users,
        window_len,
    })
}

/// One grid point's outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEntry {
    pub c: f64,
    pub validation_accuracy: f64,
}

/// Grid search record; `chosen_c` is the first grid point with the best
/// validation window accuracy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridReport {
    pub entries: Vec<GridEntry>,
    pub chosen_c: f64,
}

/// Trains at every C in [`C_GRID`] and keeps the best by validation window
/// accuracy, earliest grid entry on ties.
///
/// # Errors
///
/// Any training failure aborts the search.
pub fn grid_search(
    train: &[FeatureWindow],
    validation: &[FeatureWindow],
    num_users: usize,
    epochs: usize,
    seed: u64,
) -> Result<(SvmModel, GridReport), SvmError> {
    let mut best: Option<(SvmModel, f64, f64)> = None;
    let mut entries = Vec::with_capacity(C_GRID.len());
    for &c in &C_GRID {
        let config = SvmConfig { c, epochs, seed };
        let model = train_svm(train, num_users, &config)?;
        let accuracy = model.window_accuracy(validation)?;
        entries.push(GridEntry {
            c,
            validation_accuracy: accuracy,
        });
        let better = match &best {
            Some((_, _, best_acc)) => accuracy > *best_acc,
            None => true,
        };
        if better {
            best = Some((model, c, accuracy));
        }
    }
    let (model, chosen_c, _) = best.expect("grid is non-empty");
    Ok((model, GridReport { entries, chosen_c }))
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Exact file size for a given geometry.
#[must_use]
pub fn svm_file_len(num_users: usize, window_len: usize) -> u64 {
    let pairs = num_users * (num_users - 1) / 2;
    let record = 4 * (window_len * FEATURE_DIM) + 4;
    (12 + pairs * record + 4) as u64
}

/// Encodes: magic, version, users, feature dim, window length, pair records
/// in (a, b) lexicographic order, CRC32 over everything after the magic.
#[must_use]
pub fn encode_svm(model: &SvmModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(svm_file_len(model.num_users, model.window_len) as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.num_users as u16).to_le_bytes());
    out.extend_from_slice(&(FEATURE_DIM as u16).to_le_bytes());
    out.extend_from_slice(&(model.window_len as u16).to_le_bytes());
    for pair in &model.pairs {
        for w in &pair.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&pair.bias.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[4..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Decodes and verifies an encoded classifier set.
///
/// # Errors
///
/// Malformed or truncated layouts and checksum mismatches.
pub fn decode_svm(bytes: &[u8]) -> Result<SvmModel, SvmError> {
    if bytes.len() < 12 {
        return Err(SvmError::TruncatedData {
            needed: 12,
            got: bytes.len(),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(SvmError::MalformedFile("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(SvmError::MalformedFile(format!(
            "unsupported version {version}"
        )));
    }
    let num_users = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let input_dim = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let window_len = u16::from_le_bytes([bytes[10], bytes[11]]) as usize;
    if num_users < 2 || input_dim != FEATURE_DIM || window_len == 0 {
        return Err(SvmError::MalformedFile(format!(
            "geometry {num_users} users, dim {input_dim}, window {window_len}"
        )));
    }
    let expected = svm_file_len(num_users, window_len) as usize;
    if bytes.len() < expected {
        return Err(SvmError::TruncatedData {
            needed: expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(SvmError::MalformedFile(format!(
            "{} trailing bytes",
            bytes.len() - expected
        )));
    }
    let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[4..expected - 4]);
    if stored != computed {
        return Err(SvmError::ChecksumMismatch { stored, computed });
    }

    let dim = window_len * FEATURE_DIM;
    let mut at = 12usize;
    let read_f32 = |at: &mut usize| {
        let v = f32::from_le_bytes(bytes[*at..*at + 4].try_into().unwrap());
        *at += 4;
        v
    };
    let mut pairs = Vec::with_capacity(num_users * (num_users - 1) / 2);
    for a in 0..num_users {
        for b in (a + 1)..num_users {
            let mut weights = Vec::with_capacity(dim);
            for _ in 0..dim {
                weights.push(read_f32(&mut at));
            }
            let bias = read_f32(&mut at);
            pairs.push(PairClassifier {
                class_a: a as u32,
                class_b: b as u32,
                weights,
                bias,
            });
        }
    }

    Ok(SvmModel {
        pairs,
        num_users,
        window_len,
    })
}

/// Writes the encoded model, returning its size in bytes.
///
/// # Errors
///
/// I/O failures.
pub fn save_svm(model: &SvmModel, path: &Path) -> Result<u64, SvmError> {
    let bytes = encode_svm(model);
    fs::write(path, &bytes)?;
    Ok(bytes.len() as u64)
}

/// Reads and verifies a classifier file.
///
/// # Errors
///
/// See [`decode_svm`].
pub fn load_svm(path: &Path) -> Result<SvmModel, SvmError> {
    decode_svm(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    const W: usize = 2;

    /// Window whose rows are `base` everywhere except a spike of `peak` at
    /// `hot`; linearly separable across distinct `hot` positions.
    fn spiked_window(hot: usize, peak: f64, label: u32, clip: u64) -> FeatureWindow {
        let mut frames = Array2::zeros((W, FEATURE_DIM));
        for mut row in frames.rows_mut() {
            row.fill(0.1);
            row[hot] = peak;
        }
        FeatureWindow::from_matrix(frames, label, clip)
    }

    fn toy_training_set(classes: usize, per_class: usize) -> Vec<FeatureWindow> {
        let mut windows = Vec::new();
        let mut clip = 0u64;
        for class in 0..classes {
            for k in 0..per_class {
                // Vary the spike height a little so the pair sees spread.
                let peak = 2.0 + 0.1 * k as f64;
                windows.push(spiked_window(class * 7, peak, class as u32, clip));
                clip += 1;
            }
        }
        windows
    }

    #[test]
    fn separable_classes_reach_full_accuracy() {
        let windows = toy_training_set(3, 8);
        let model = train_svm(&windows, 3, &SvmConfig::new(9)).unwrap();
        assert_eq!(model.pairs.len(), 3);
        assert_eq!(model.window_accuracy(&windows).unwrap(), 1.0);
    }

    #[test]
    fn pair_count_is_quadratic() {
        let windows = toy_training_set(5, 4);
        let model = train_svm(&windows, 5, &SvmConfig::new(1)).unwrap();
        assert_eq!(model.pairs.len(), 10);
        for (i, pair) in model.pairs.iter().enumerate() {
            assert!(pair.class_a < pair.class_b, "pair {i} ordering");
        }
        assert_eq!(model.pairs[0].weights.len(), W * FEATURE_DIM);
    }

    #[test]
    fn bias_separates_offset_clusters() {
        // Both clusters sit on the positive side of feature 0, so a
        // zero-bias separator cannot split them.
        let mut windows = Vec::new();
        for k in 0..10 {
            windows.push(spiked_window(0, 1.0 + 0.02 * k as f64, 0, k));
            windows.push(spiked_window(0, 3.0 + 0.02 * k as f64, 1, 100 + k));
        }
        let model = train_svm(&windows, 2, &SvmConfig::new(4)).unwrap();
        assert_eq!(model.window_accuracy(&windows).unwrap(), 1.0);
        assert_ne!(model.pairs[0].bias, 0.0);
    }

    /// Model whose votes are fixed by bias signs alone.
    fn rigged_three_class(bias_01: f32, bias_02: f32, bias_12: f32) -> SvmModel {
        let zero = vec![0.0f32; W * FEATURE_DIM];
        SvmModel {
            pairs: vec![
                PairClassifier {
                    class_a: 0,
                    class_b: 1,
                    weights: zero.clone(),
                    bias: bias_01,
                },
                PairClassifier {
                    class_a: 0,
                    class_b: 2,
                    weights: zero.clone(),
                    bias: bias_02,
                },
                PairClassifier {
                    class_a: 1,
                    class_b: 2,
                    weights: zero,
                    bias: bias_12,
                },
            ],
            num_users: 3,
            window_len: W,
        }
    }

    #[test]
    fn vote_ties_take_the_lowest_class() {
        // Votes 0, 2, 1: one each, so the tie resolves to class 0.
        let model = rigged_three_class(1.0, -1.0, 1.0);
        let window = spiked_window(0, 1.0, 0, 0);
        assert_eq!(model.predict(&window).unwrap(), 0);

        // Votes 1, 1, 2: class 1 wins outright over 2's single vote? No:
        // (0,1)→1, (0,2)→2, (1,2)→1 gives 1 two votes.
        let model = rigged_three_class(-1.0, -1.0, 1.0);
        assert_eq!(model.predict(&window).unwrap(), 1);
    }

    #[test]
    fn sample_accuracy_votes_per_clip() {
        let model = rigged_three_class(1.0, 1.0, 1.0); // always votes 0 twice
        // Two clips labeled 0 (voted correctly) and one labeled 2.
        let windows = vec![
            spiked_window(0, 1.0, 0, 10),
            spiked_window(0, 1.0, 0, 10),
            spiked_window(0, 1.0, 0, 11),
            spiked_window(0, 1.0, 2, 12),
        ];
        let acc = model.sample_accuracy(&windows).unwrap();
        assert_eq!(acc.clips, 3);
        assert!((acc.fraction - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let windows = toy_training_set(3, 6);
        let a = train_svm(&windows, 3, &SvmConfig::new(7)).unwrap();
        let b = train_svm(&windows, 3, &SvmConfig::new(7)).unwrap();
        let c = train_svm(&windows, 3, &SvmConfig::new(8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            a.pairs[0].weights, c.pairs[0].weights,
            "epoch shuffles must follow the seed"
        );
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(
            train_svm(&[], 2, &SvmConfig::new(0)),
            Err(SvmError::EmptyTrainingSet)
        ));

        let one_class: Vec<FeatureWindow> =
            (0..4).map(|k| spiked_window(0, 2.0, 0, k)).collect();
        assert!(matches!(
            train_svm(&one_class, 2, &SvmConfig::new(0)),
            Err(SvmError::SingleClassInput { class_a: 0, class_b: 1 })
        ));

        // Class 1 absent from a three-user problem.
        let mut gap = toy_training_set(1, 3);
        gap.extend((0..3).map(|k| spiked_window(14, 2.0, 2, 50 + k)));
        assert!(matches!(
            train_svm(&gap, 3, &SvmConfig::new(0)),
            Err(SvmError::SingleClassInput { class_a: 0, class_b: 1 })
        ));

        let windows = toy_training_set(2, 3);
        let mut bad = SvmConfig::new(0);
        bad.c = 0.0;
        assert!(matches!(
            train_svm(&windows, 2, &bad),
            Err(SvmError::InvalidParameter(_))
        ));
    }

    #[test]
    fn files_round_trip_and_verify() {
        let windows = toy_training_set(3, 5);
        let model = train_svm(&windows, 3, &SvmConfig::new(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.bsvm");

        let written = save_svm(&model, &path).unwrap();
        assert_eq!(written, svm_file_len(3, W));
        let back = load_svm(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(encode_svm(&back), encode_svm(&model));

        // One flipped payload byte must fail the checksum.
        let mut bytes = encode_svm(&model);
        bytes[20] ^= 0x01;
        assert!(matches!(
            decode_svm(&bytes),
            Err(SvmError::ChecksumMismatch { .. })
        ));

        let short = &encode_svm(&model)[..40];
        assert!(matches!(
            decode_svm(short),
            Err(SvmError::TruncatedData { .. })
        ));

        let mut wrong_magic = encode_svm(&model);
        wrong_magic[0] = b'X';
        assert!(matches!(
            decode_svm(&wrong_magic),
            Err(SvmError::MalformedFile(_))
        ));
    }

    #[test]
    fn grid_search_prefers_the_best_then_earliest() {
        let train = toy_training_set(3, 6);
        let validation = toy_training_set(3, 2);
        let (model, report) = grid_search(&train, &validation, 3, 5, 3).unwrap();
        assert_eq!(report.entries.len(), C_GRID.len());
        // The toy set is separable at every C, so the tie must resolve to
        // the first grid entry.
        assert_eq!(report.chosen_c, C_GRID[0]);
        assert_eq!(model.window_accuracy(&validation).unwrap(), 1.0);
        let best = report
            .entries
            .iter()
            .map(|e| e.validation_accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(
            report
                .entries
                .iter()
                .find(|e| e.validation_accuracy == best)
                .unwrap()
                .c,
            report.chosen_c
        );
    }
}
