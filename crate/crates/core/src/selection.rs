//! Checkpoint retention and model selection on the validation-accuracy
//! curve: trailing moving average, earliest-plateau elbow rule, a bounded
//! ring of parameter snapshots, and sample-level scoring of candidates.
//!
//! The moving average is trailing, so smoothed values never change once
//! written; the first index satisfying the plateau rule is therefore
//! stable and can be pinned online, while training is still running.

use std::collections::{BTreeMap, VecDeque};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureWindow;
use crate::lstm::{
    argmax_f32, softmax, EvalModel, IterationRecord, LstmModel, TrainObserver,
};

/// Default trailing smoothing width.
pub const DEFAULT_SMOOTHING: usize = 20;
/// Plateau lookahead: how many future points must fail to improve.
pub const DEFAULT_LOOKAHEAD: usize = 4;
/// Default improvement threshold (relative, 5%).
pub const DEFAULT_THRESHOLD: f64 = 0.05;
/// Default snapshot ring capacity.
pub const DEFAULT_RING_CAPACITY: usize = 200;
/// Candidates kept on each side of the elbow.
pub const CANDIDATE_SPAN: usize = 5;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("series of {len} points is too short, need at least {needed}")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("no candidate checkpoints to select from")]
    NoCandidates,
    #[error("ring capacity {got} cannot cover the candidate span, need at least {needed}")]
    InvalidCapacity { got: usize, needed: usize },
}

/// How "no meaningful improvement" is judged against the plateau point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// Future points must stay below value·(1 + δ).
    Relative(f64),
    /// Future points must stay below value + δ.
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElbowConfig {
    pub smoothing_window: usize,
    pub lookahead: usize,
    pub mode: ThresholdMode,
}

impl Default for ElbowConfig {
    fn default() -> ElbowConfig {
        ElbowConfig {
            smoothing_window: DEFAULT_SMOOTHING,
            lookahead: DEFAULT_LOOKAHEAD,
            mode: ThresholdMode::Relative(DEFAULT_THRESHOLD),
        }
    }
}

/// Trailing moving average with prefix warm-up: out\[i\] is the mean of
/// series\[max(0, i−w+1) ..= i\].
#[must_use]
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "smoothing window must be at least 1");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= window {
            sum -= series[i - window];
        }
        let span = (i + 1).min(window);
        out.push(sum / span as f64);
    }
    out
}

/// Where the curve stops improving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElbowOutcome {
    /// 0-based index into the series.
    pub index: usize,
    /// False when no plateau was found and the last index was used.
    pub plateau_found: bool,
}

fn improvement_bound(value: f64, mode: ThresholdMode) -> f64 {
    match mode {
        ThresholdMode::Relative(delta) => value * (1.0 + delta),
        ThresholdMode::Absolute(delta) => value + delta,
    }
}

fn plateau_at(smoothed: &[f64], i: usize, config: &ElbowConfig) -> bool {
    let bound = improvement_bound(smoothed[i], config.mode);
    (i + 1..=i + config.lookahead).all(|j| smoothed[j] < bound)
}

/// Earliest index whose next `lookahead` smoothed values never clear the
/// improvement bound. Falls back to the last index (flagged) when the
/// curve keeps improving through the end.
///
/// # Errors
///
/// `SeriesTooShort` when fewer than lookahead+1 points exist.
pub fn find_elbow(series: &[f64], config: &ElbowConfig) -> Result<ElbowOutcome, SelectionError> {
    let needed = config.lookahead + 1;
    if series.len() < needed {
        return Err(SelectionError::SeriesTooShort {
            len: series.len(),
            needed,
        });
    }
    let smoothed = moving_average(series, config.smoothing_window);
    for i in 0..=smoothed.len() - 1 - config.lookahead {
        if plateau_at(&smoothed, i, config) {
            return Ok(ElbowOutcome {
                index: i,
                plateau_found: true,
            });
        }
    }
    Ok(ElbowOutcome {
        index: series.len() - 1,
        plateau_found: false,
    })
}

/// One retained model snapshot. Parameters are stored packed as f32,
/// matching the stored-model precision.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// 1-based training iteration.
    pub iteration: usize,
    pub validation_accuracy: f64,
    pub params: Vec<f32>,
}

/// Bounded snapshot store that watches the validation curve as a
/// [`TrainObserver`], detects the elbow as soon as its lookahead window
/// closes, and pins the surrounding candidates so ring eviction cannot
/// drop them.
pub struct CheckpointRing {
    capacity: usize,
    config: ElbowConfig,
    curve: Vec<f64>,
    smoothed: Vec<f64>,
    smoothing_sum: f64,
    ring: VecDeque<Checkpoint>,
    pinned: Vec<Checkpoint>,
    pinned_range: Option<(usize, usize)>,
    elbow_index: Option<usize>,
    next_check: usize,
    num_users: usize,
    window_len: usize,
}

impl CheckpointRing {
    /// # Errors
    ///
    /// `InvalidCapacity` when the ring could not hold the detection lag
    /// plus the candidate span.
    pub fn new(capacity: usize, config: ElbowConfig) -> Result<CheckpointRing, SelectionError> {
        let needed = config.lookahead + CANDIDATE_SPAN + 1;
        if capacity < needed {
            return Err(SelectionError::InvalidCapacity {
                got: capacity,
                needed,
            });
        }
        Ok(CheckpointRing {
            capacity,
            config,
            curve: Vec::new(),
            smoothed: Vec::new(),
            smoothing_sum: 0.0,
            ring: VecDeque::new(),
            pinned: Vec::new(),
            pinned_range: None,
            elbow_index: None,
            next_check: 0,
            num_users: 0,
            window_len: 0,
        })
    }

    #[must_use]
    pub fn with_defaults() -> CheckpointRing {
        CheckpointRing::new(DEFAULT_RING_CAPACITY, ElbowConfig::default())
            .expect("default capacity covers the candidate span")
    }

    /// Snapshots currently resident (pinned ones excluded).
    #[must_use]
    pub fn resident(&self) -> usize {
        self.ring.len()
    }

    #[must_use]
    pub fn elbow_index(&self) -> Option<usize> {
        self.elbow_index
    }

    fn append_smoothed(&mut self, value: f64) {
        self.curve.push(value);
        self.smoothing_sum += value;
        let i = self.curve.len() - 1;
        if i >= self.config.smoothing_window {
            self.smoothing_sum -= self.curve[i - self.config.smoothing_window];
        }
        let span = (i + 1).min(self.config.smoothing_window);
        self.smoothed.push(self.smoothing_sum / span as f64);
    }

    fn detect_elbow(&mut self) {
        if self.elbow_index.is_some() || self.smoothed.len() < self.config.lookahead + 1 {
            return;
        }
        let last_decidable = self.smoothed.len() - 1 - self.config.lookahead;
        while self.next_check <= last_decidable {
            let e = self.next_check;
            if plateau_at(&self.smoothed, e, &self.config) {
                self.elbow_index = Some(e);
                let elbow_iter = e + 1;
                let lo = elbow_iter.saturating_sub(CANDIDATE_SPAN).max(1);
                let hi = elbow_iter + CANDIDATE_SPAN;
                self.pinned_range = Some((lo, hi));
                // Rescue in-range snapshots already sitting in the ring.
                let mut keep = VecDeque::new();
                while let Some(cp) = self.ring.pop_front() {
                    if cp.iteration >= lo && cp.iteration <= hi {
                        self.pinned.push(cp);
                    } else {
                        keep.push_back(cp);
                    }
                }
                self.ring = keep;
                return;
            }
            self.next_check += 1;
        }
    }

    /// The elbow and its surviving candidates. Call after training; when
    /// no plateau emerged the elbow is the final iteration and candidates
    /// clamp to the end of the run.
    ///
    /// # Errors
    ///
    /// `NoCandidates` when no iterations were observed.
    pub fn finalize(mut self) -> Result<RingOutcome, SelectionError> {
        if self.curve.is_empty() {
            return Err(SelectionError::NoCandidates);
        }
        let (elbow_index, plateau_found) = match self.elbow_index {
            Some(e) => (e, true),
            None => (self.curve.len() - 1, false),
        };
        let candidates = if plateau_found {
            self.pinned.sort_by_key(|cp| cp.iteration);
            self.pinned
        } else {
            let elbow_iter = elbow_index + 1;
            let lo = elbow_iter.saturating_sub(CANDIDATE_SPAN).max(1);
            let mut from_ring: Vec<Checkpoint> = self
                .ring
                .into_iter()
                .filter(|cp| cp.iteration >= lo)
                .collect();
            from_ring.sort_by_key(|cp| cp.iteration);
            from_ring
        };
        if candidates.is_empty() {
            return Err(SelectionError::NoCandidates);
        }
        Ok(RingOutcome {
            elbow_index,
            elbow_iteration: elbow_index + 1,
            plateau_found,
            candidates,
            curve: self.curve,
            num_users: self.num_users,
            window_len: self.window_len,
        })
    }
}

impl TrainObserver for CheckpointRing {
    fn on_iteration(&mut self, model: &LstmModel, record: &IterationRecord) {
        if self.num_users == 0 {
            self.num_users = model.num_users;
            self.window_len = model.window_len;
        }
        self.append_smoothed(record.validation_accuracy);

        let cp = Checkpoint {
            iteration: record.iteration,
            validation_accuracy: record.validation_accuracy,
            params: model.pack_f32(),
        };
        let in_pinned_range = self
            .pinned_range
            .is_some_and(|(lo, hi)| cp.iteration >= lo && cp.iteration <= hi);
        if in_pinned_range {
            self.pinned.push(cp);
        } else {
            self.ring.push_back(cp);
            if self.ring.len() > self.capacity {
                self.ring.pop_front();
            }
        }
        self.detect_elbow();
    }
}

/// What a finished ring hands to selection.
#[derive(Debug)]
pub struct RingOutcome {
    pub elbow_index: usize,
    pub elbow_iteration: usize,
    pub plateau_found: bool,
    pub candidates: Vec<Checkpoint>,
    pub curve: Vec<f64>,
    pub num_users: usize,
    pub window_len: usize,
}

// ---------------------------------------------------------------------------
// Sample-level accuracy
// ---------------------------------------------------------------------------

/// Sample-level (per-clip) accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleAccuracy {
    pub fraction: f64,
    pub clips: usize,
}

/// Aggregates per-window logits into per-clip decisions: softmax each
/// window, average the probabilities per source clip, argmax with ties to
/// the lowest user index.
#[must_use]
pub fn sample_accuracy_from_logits(
    windows: &[FeatureWindow],
    logits: ArrayView2<'_, f32>,
) -> SampleAccuracy {
    assert_eq!(windows.len(), logits.nrows());
    let mut groups: BTreeMap<u64, (u32, Vec<f64>, usize)> = BTreeMap::new();
    for (row, window) in windows.iter().enumerate() {
        let probs_f64: Vec<f64> = logits
            .row(row)
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        let probs = softmax(ndarray::ArrayView1::from(&probs_f64));
        let entry = groups
            .entry(window.source_clip)
            .or_insert_with(|| (window.label, vec![0.0; probs.len()], 0));
        for (acc, &p) in entry.1.iter_mut().zip(probs.iter()) {
            *acc += p;
        }
        entry.2 += 1;
    }

    let clips = groups.len();
    if clips == 0 {
        return SampleAccuracy {
            fraction: 0.0,
            clips: 0,
        };
    }
    let mut correct = 0usize;
    for (label, sums, _count) in groups.values() {
        let mut best = 0usize;
        for (k, &v) in sums.iter().enumerate() {
            if v > sums[best] {
                best = k;
            }
        }
        if best == *label as usize {
            correct += 1;
        }
    }
    SampleAccuracy {
        fraction: correct as f64 / clips as f64,
        clips,
    }
}

/// Per-clip accuracy of a model over a window set.
#[must_use]
pub fn sample_accuracy(eval: &EvalModel, windows: &[FeatureWindow]) -> SampleAccuracy {
    let logits = eval.logits(windows);
    sample_accuracy_from_logits(windows, logits.view())
}

/// Window-level accuracy (argmax per window, no clip grouping).
#[must_use]
pub fn window_accuracy_of(eval: &EvalModel, windows: &[FeatureWindow]) -> f64 {
    if windows.is_empty() {
        return 0.0;
    }
    let logits = eval.logits(windows);
    let correct = windows
        .iter()
        .enumerate()
        .filter(|(j, w)| argmax_f32(logits.row(*j)) == w.label as usize)
        .count();
    correct as f64 / windows.len() as f64
}

/// One candidate's scores across the three evaluation sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateScore {
    pub iteration: usize,
    pub validation_sample_accuracy: f64,
    pub intra_sample_accuracy: f64,
    pub inter_sample_accuracy: f64,
    pub mean_accuracy: f64,
}

/// Everything selection decided, serialized as the selection report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub elbow_iteration: usize,
    pub plateau_found: bool,
    pub candidates: Vec<CandidateScore>,
    pub best_iteration: usize,
}

/// Scores every candidate at sample level on validation, intra-session,
/// and inter-session sets, then picks the best unweighted mean. Ties go
/// to the earliest iteration.
///
/// # Errors
///
/// `NoCandidates` for an empty candidate list.
pub fn select_best(
    outcome: &RingOutcome,
    validation: &[FeatureWindow],
    intra: &[FeatureWindow],
    inter: &[FeatureWindow],
) -> Result<(SelectionReport, LstmModel), SelectionError> {
    if outcome.candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }

    let mut scores = Vec::with_capacity(outcome.candidates.len());
    let mut best: Option<(usize, f64)> = None;
    for (k, cp) in outcome.candidates.iter().enumerate() {
        let model = LstmModel::unpack_f32(&cp.params, outcome.num_users, outcome.window_len);
        let eval = EvalModel::from_model(&model);
        let val = sample_accuracy(&eval, validation).fraction;
        let intra_acc = sample_accuracy(&eval, intra).fraction;
        let inter_acc = sample_accuracy(&eval, inter).fraction;
        let mean = (val + intra_acc + inter_acc) / 3.0;
        scores.push(CandidateScore {
            iteration: cp.iteration,
            validation_sample_accuracy: val,
            intra_sample_accuracy: intra_acc,
            inter_sample_accuracy: inter_acc,
            mean_accuracy: mean,
        });
        if best.is_none() || mean > best.unwrap().1 {
            best = Some((k, mean));
        }
    }

    let (best_idx, _) = best.unwrap();
    let winner = &outcome.candidates[best_idx];
    let model = LstmModel::unpack_f32(&winner.params, outcome.num_users, outcome.window_len);
    let report = SelectionReport {
        elbow_iteration: outcome.elbow_iteration,
        plateau_found: outcome.plateau_found,
        candidates: scores,
        best_iteration: winner.iteration,
    };
    Ok((report, model))
}
