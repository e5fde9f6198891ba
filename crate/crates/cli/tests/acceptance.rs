//! Release checklist. Ten numbered checks cover stored-model sizes, the
//! numeric oracles (gradients, front end, quantization, elbow), end-to-end
//! identification accuracy, latency orderings, run reproducibility, and
//! the SVM baseline. Each check prints exactly one verdict line; run with
//! `--nocapture` to see the passing ones too.
//!
//! Checks 05, 06, and 10 share one trained five-user fixture, built lazily
//! on first use.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::LazyLock;
use std::time::Instant;

use breathid_core::audio::{mix_seed, synthesize_clip, AudioClip, Gesture, SynthProfile};
use breathid_core::bench::{bench_inference, bench_model_load};
use breathid_core::dataset::{make_splits, SplitBundle, SplitConfig};
use breathid_core::features::{FeatureWindow, WindowConfig, FEATURE_DIM};
use breathid_core::lstm::{
    compute_batch_gradient, train, EvalModel, LossKind, LstmModel, TrainConfig,
};
use breathid_core::quantize::{
    dequantize_tensor, quantization_bound, quantize_model, quantize_tensor, quantized_forward,
};
use breathid_core::selection::{
    find_elbow, sample_accuracy, select_best, CheckpointRing, ElbowConfig, SelectionReport,
    ThresholdMode,
};
use breathid_core::store::{
    encode_float_model, encode_quantized_model, model_file_len, save_float_model,
    save_quantized_model, write_zip_single, Flavor,
};
use breathid_core::svm::{grid_search, train_svm, SvmConfig, DEFAULT_EPOCHS};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One verdict line per check; the line carries the numbers the check is
/// judged on, so a log of the run doubles as a results table.
fn verdict(check: &str, pass: bool, detail: &str) {
    println!("[{}] {check}: {detail}", if pass { "ok " } else { "FAIL" });
    assert!(pass, "{check}: {detail}");
}

fn argmax(row: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn random_window(rng: &mut ChaCha8Rng, frames: usize, label: u32, clip: u64) -> FeatureWindow {
    let data = Array2::from_shape_fn((frames, FEATURE_DIM), |_| rng.random_range(-1.0..1.0));
    FeatureWindow::from_matrix(data, label, clip)
}

// ---------------------------------------------------------------------------
// Shared trained fixture: 5 users, sniff gesture, 40 clips per user
// ---------------------------------------------------------------------------

const FIXTURE_SEED: u64 = 0xB10_CE55;
const FIXTURE_USERS: usize = 5;
const FIXTURE_ITERATIONS: usize = 150;

struct Fixture {
    bundle: SplitBundle,
    report: SelectionReport,
    best: LstmModel,
    build_secs: f64,
}

/// In-memory corpus with the session layout of a real capture campaign:
/// two enrollment sessions plus a later third one, nominal duration
/// jittered ±10% per clip.
fn synth_corpus(
    users: usize,
    sessions: [usize; 3],
    corpus_seed: u64,
    nominal_ms: u32,
) -> Vec<AudioClip> {
    let mut clips = Vec::new();
    let mut counter = 0u64;
    for user in 0..users as u32 {
        let profile = SynthProfile::for_user(user, corpus_seed);
        for (slot, &count) in sessions.iter().enumerate() {
            for _ in 0..count {
                let noise = mix_seed(corpus_seed, counter);
                counter += 1;
                let percent = 90 + (mix_seed(noise, 0xD1) % 21) as u32;
                let clip_profile = profile.clone().with_noise_seed(noise);
                let mut clip =
                    synthesize_clip(&clip_profile, Gesture::Sniff, nominal_ms * percent / 100)
                        .expect("nominal duration stays above the sniff minimum");
                clip.session = (slot + 1) as u8;
                clips.push(clip);
            }
        }
    }
    clips
}

static FIXTURE: LazyLock<Fixture> = LazyLock::new(|| {
    let start = Instant::now();
    let clips = synth_corpus(FIXTURE_USERS, [15, 15, 10], FIXTURE_SEED, 400);

    let window = WindowConfig::new(30, 0.9).expect("supported overlap");
    let mut split = SplitConfig::new(window, Gesture::Sniff, mix_seed(FIXTURE_SEED, 1));
    split.augment_copies = 10;
    let bundle = make_splits(&clips, &split).expect("corpus satisfies the session protocol");

    let mut model = LstmModel::new(FIXTURE_USERS, 30, mix_seed(FIXTURE_SEED, 2));
    let config = TrainConfig::new(FIXTURE_ITERATIONS, mix_seed(FIXTURE_SEED, 3));
    let mut ring = CheckpointRing::with_defaults();
    train(&mut model, &bundle.train, &bundle.validation, &config, &mut ring)
        .expect("training converges on the synthetic corpus");
    let outcome = ring.finalize().expect("ring saw every iteration");
    let (report, best) = select_best(&outcome, &bundle.validation, &bundle.intra, &bundle.inter)
        .expect("candidates survive the ring");

    Fixture {
        bundle,
        report,
        best,
        build_secs: start.elapsed().as_secs_f64(),
    }
});

// ---------------------------------------------------------------------------
// 01: stored model sizes
// ---------------------------------------------------------------------------

#[test]
fn check_01_stored_model_sizes() {
    let model = LstmModel::new(10, 250, 0x01);
    let float_bytes = encode_float_model(&model);
    let q = quantize_model(&model).expect("finite weights");
    let quant_bytes = encode_quantized_model(&q);

    let payload = 4 * model.param_count() as u64;
    let overhead = float_bytes.len() as u64 - payload;
    let ratio = quant_bytes.len() as f64 / float_bytes.len() as f64;

    let dir = tempfile::tempdir().unwrap();
    let zip_path = dir.path().join("model.q8.brnn.zip");
    let zip_len = write_zip_single(&zip_path, "model.q8.brnn", &quant_bytes).unwrap();
    let zip_factor = float_bytes.len() as f64 / zip_len as f64;

    let pass = payload == 992_296
        && float_bytes.len() as u64 == model_file_len(10, Flavor::Float)
        && quant_bytes.len() as u64 == model_file_len(10, Flavor::Quantized)
        && overhead < 256
        && (0.24..=0.27).contains(&ratio)
        && zip_len < quant_bytes.len() as u64;
    verdict(
        "check 01 stored model sizes",
        pass,
        &format!(
            "float payload {payload} B (+{overhead} B framing), quantized ratio {ratio:.4}, \
             zipped quantized {zip_len} B ({zip_factor:.2}x below float)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 02: analytic gradients against central finite differences
// ---------------------------------------------------------------------------

/// Probe positions covering all six tensors: biases and the dense layer
/// exhaustively, the two big weight matrices on a fixed stride.
fn gradient_probes(num_users: usize) -> Vec<usize> {
    let sizes = [
        4 * 128 * (96 + 128),
        4 * 128,
        4 * 128 * (128 + 128),
        4 * 128,
        num_users * 128,
        num_users,
    ];
    let mut probes = Vec::new();
    let mut offset = 0;
    for size in sizes {
        let stride = if size > 2048 { 457 } else { 1 };
        let mut i = 0;
        while i < size {
            probes.push(offset + i);
            i += stride;
        }
        offset += size;
    }
    probes
}

#[test]
fn check_02_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x02);
    let windows = [
        random_window(&mut rng, 3, 0, 0),
        random_window(&mut rng, 3, 1, 1),
    ];
    let refs: Vec<&FeatureWindow> = windows.iter().collect();

    let epsilon = 1e-5;
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for loss in [LossKind::CrossEntropy, LossKind::L2OneHot] {
        let mut model = LstmModel::new(2, 3, 0x0202);
        let (_, grads) = compute_batch_gradient(&model, &refs, loss).unwrap();
        for index in gradient_probes(2) {
            let analytic = grads.at(index);
            let saved = model.param_at(index);
            model.set_param_at(index, saved + epsilon);
            let up = compute_batch_gradient(&model, &refs, loss).unwrap().0;
            model.set_param_at(index, saved - epsilon);
            let down = compute_batch_gradient(&model, &refs, loss).unwrap().0;
            model.set_param_at(index, saved);
            let fd = (up - down) / (2.0 * epsilon);

            checked += 1;
            let magnitude = analytic.abs().max(fd.abs());
            if magnitude < 1e-7 {
                continue; // both zero at finite-difference resolution
            }
            let rel = (analytic - fd).abs() / magnitude;
            worst = worst.max(rel);
            if rel > 1e-4 {
                failures += 1;
            }
        }
    }

    let secs = start.elapsed().as_secs_f64();
    verdict(
        "check 02 gradient oracle",
        failures == 0 && secs < 60.0,
        &format!(
            "{checked} probed parameters across both losses, worst relative error {worst:.3e}, \
             {failures} over 1e-4, {secs:.1} s"
        ),
    );
}

// ---------------------------------------------------------------------------
// 03: front end against a direct-summation DFT reference
// ---------------------------------------------------------------------------

const ORACLE_RATE: u32 = 44_100;
const ORACLE_FRAME: usize = 441;
const ORACLE_FFT: usize = 512;
const ORACLE_FILTERS: usize = 64;
const ORACLE_CEPSTRA: usize = 32;

/// Scalar-loop reference sharing no code with the library: own pre-emphasis,
/// O(N²) spectrum, filterbank, and DCT.
fn reference_mfcc(frame: &[f64]) -> Vec<f64> {
    let mut emphasized = vec![frame[0]];
    for i in 1..frame.len() {
        emphasized.push(frame[i] - 0.97 * frame[i - 1]);
    }

    let mut mags = Vec::with_capacity(ORACLE_FFT / 2 + 1);
    for k in 0..=ORACLE_FFT / 2 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (n, &x) in emphasized.iter().enumerate() {
            let angle = -2.0 * std::f64::consts::PI * k as f64 * n as f64 / ORACLE_FFT as f64;
            re += x * angle.cos();
            im += x * angle.sin();
        }
        mags.push((re * re + im * im).sqrt());
    }

    let hz_to_mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let mel_to_hz = |mel: f64| 700.0 * (10.0f64.powf(mel / 2595.0) - 1.0);
    let mel_step = hz_to_mel(f64::from(ORACLE_RATE) / 2.0) / (ORACLE_FILTERS + 1) as f64;
    let mut log_energies = Vec::with_capacity(ORACLE_FILTERS);
    for m in 0..ORACLE_FILTERS {
        let lo = mel_to_hz(mel_step * m as f64);
        let center = mel_to_hz(mel_step * (m + 1) as f64);
        let hi = mel_to_hz(mel_step * (m + 2) as f64);
        let mut energy = 0.0;
        for (k, &mag) in mags.iter().enumerate() {
            let f = k as f64 * f64::from(ORACLE_RATE) / ORACLE_FFT as f64;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= center {
                (f - lo) / (center - lo)
            } else {
                (hi - f) / (hi - center)
            };
            energy += w * mag;
        }
        log_energies.push(energy.max(1e-10).ln());
    }

    let mut cepstra = Vec::with_capacity(ORACLE_CEPSTRA);
    for k in 0..ORACLE_CEPSTRA {
        let alpha = if k == 0 {
            (1.0 / ORACLE_FILTERS as f64).sqrt()
        } else {
            (2.0 / ORACLE_FILTERS as f64).sqrt()
        };
        let mut acc = 0.0;
        for (m, &le) in log_energies.iter().enumerate() {
            acc += le
                * (std::f64::consts::PI * (2 * m + 1) as f64 * k as f64
                    / (2 * ORACLE_FILTERS) as f64)
                    .cos();
        }
        cepstra.push(alpha * acc);
    }
    cepstra
}

#[test]
fn check_03_front_end_matches_direct_dft() {
    let start = Instant::now();
    let extractor = breathid_core::features::FeatureExtractor::new(ORACLE_RATE).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x03);

    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for _ in 0..100 {
        let frame: Vec<f64> = (0..ORACLE_FRAME).map(|_| rng.random_range(-1.0..1.0)).collect();
        let actual = extractor.mfcc(&frame);
        let expected = reference_mfcc(&frame);
        for (&a, &e) in actual.iter().zip(&expected) {
            let rel = (a - e).abs() / e.abs().max(1.0);
            worst = worst.max(rel);
            if rel > 1e-9 {
                failures += 1;
            }
        }
    }

    let secs = start.elapsed().as_secs_f64();
    verdict(
        "check 03 front-end oracle",
        failures == 0 && secs < 60.0,
        &format!(
            "100 random frames, 32 coefficients each, worst relative error {worst:.3e}, {secs:.1} s"
        ),
    );
}

// ---------------------------------------------------------------------------
// 04: quantization round-trip properties on 1000 random tensors
// ---------------------------------------------------------------------------

#[test]
fn check_04_quantization_round_trip_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x04);
    let mut bound_failures = 0usize;
    let mut endpoint_failures = 0usize;
    let mut idempotence_failures = 0usize;

    // All kinds stay at parameter-scale magnitudes (|x| < 2): the bound's
    // fixed 1e-7 headroom only has to absorb f32 narrowing there.
    for trial in 0..1000u32 {
        let len = rng.random_range(1..=1200);
        let values: Vec<f32> = match trial % 5 {
            // Uniform at a random decade.
            0 => {
                let scale = 10f32.powi(rng.random_range(-3..=0));
                (0..len).map(|_| rng.random_range(-scale..=scale)).collect()
            }
            // Constant; degenerate range.
            1 => vec![rng.random_range(-2.0..2.0); len],
            // Bell-shaped via sums of uniforms.
            2 => (0..len)
                .map(|_| (0..4).map(|_| rng.random_range(-0.5..0.5)).sum())
                .collect(),
            // Tiny spread on an offset; the fixed headroom dominates.
            3 => {
                let offset = rng.random_range(-0.5..0.5);
                (0..len).map(|_| offset + rng.random_range(-1e-3..1e-3)).collect()
            }
            // One outlier stretching the range two decades past the body.
            _ => {
                let mut v: Vec<f32> = (0..len).map(|_| rng.random_range(-0.02..0.02)).collect();
                v[0] = 2.0;
                v
            }
        };

        let q = quantize_tensor(&values, "t").unwrap();
        let back = dequantize_tensor(&q);
        let min = values.iter().copied().fold(f32::INFINITY, f32::min);
        let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let bound = quantization_bound(min, max);

        for (&a, &b) in values.iter().zip(&back) {
            if f64::from((a - b).abs()) > bound {
                bound_failures += 1;
            }
            if (a == min || a == max) && a.to_bits() != b.to_bits() {
                endpoint_failures += 1;
            }
        }
        let again = quantize_tensor(&back, "t").unwrap();
        if again.codes != q.codes {
            idempotence_failures += 1;
        }
    }

    verdict(
        "check 04 quantization bound",
        bound_failures == 0 && endpoint_failures == 0 && idempotence_failures == 0,
        &format!(
            "1000 tensors: {bound_failures} bound violations, {endpoint_failures} inexact \
             endpoints, {idempotence_failures} idempotence breaks"
        ),
    );
}

// ---------------------------------------------------------------------------
// 05: float vs quantized decisions on the trained fixture
// ---------------------------------------------------------------------------

#[test]
fn check_05_quantized_model_keeps_float_decisions() {
    let fx = &*FIXTURE;
    let q = quantize_model(&fx.best).expect("trained weights are finite");
    let dequantized = q.to_model();

    let windows: Vec<&FeatureWindow> = fx
        .bundle
        .validation
        .iter()
        .chain(&fx.bundle.intra)
        .chain(&fx.bundle.inter)
        .collect();

    // The helper and the reconstructed model must be the same path.
    let probe = windows[0];
    assert_eq!(
        quantized_forward(&q, probe.data()).unwrap(),
        dequantized.forward(probe.data()).unwrap()
    );

    let mut agree = 0usize;
    for w in &windows {
        let float_choice = argmax(&fx.best.forward(w.data()).unwrap());
        let quant_choice = argmax(&dequantized.forward(w.data()).unwrap());
        if float_choice == quant_choice {
            agree += 1;
        }
    }
    let agreement = agree as f64 / windows.len() as f64;

    verdict(
        "check 05 quantized decision parity",
        windows.len() >= 1000 && agreement >= 0.99,
        &format!(
            "{agree}/{} windows agree ({:.2}%)",
            windows.len(),
            agreement * 100.0
        ),
    );
}

// ---------------------------------------------------------------------------
// 06: end-to-end identification on the synthetic five-user corpus
// ---------------------------------------------------------------------------

#[test]
fn check_06_five_user_identification() {
    let fx = &*FIXTURE;
    let eval = EvalModel::from_model(&fx.best);
    let intra = sample_accuracy(&eval, &fx.bundle.intra);
    let inter = sample_accuracy(&eval, &fx.bundle.inter);

    verdict(
        "check 06 synthetic identification",
        intra.fraction >= 0.90 && fx.build_secs < 900.0,
        &format!(
            "intra {:.1}% over {} clips (inter {:.1}%), best iteration {}, fixture built in {:.0} s",
            intra.fraction * 100.0,
            intra.clips,
            inter.fraction * 100.0,
            fx.report.best_iteration,
            fx.build_secs
        ),
    );
}

// ---------------------------------------------------------------------------
// 07: online elbow against an exhaustive reference scan
// ---------------------------------------------------------------------------

fn naive_moving_average(series: &[f64], window: usize) -> Vec<f64> {
    (0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &series[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

fn naive_elbow(series: &[f64], config: &ElbowConfig) -> (usize, bool) {
    let smoothed = naive_moving_average(series, config.smoothing_window);
    for i in 0..=smoothed.len() - 1 - config.lookahead {
        let bound = match config.mode {
            ThresholdMode::Relative(delta) => smoothed[i] * (1.0 + delta),
            ThresholdMode::Absolute(delta) => smoothed[i] + delta,
        };
        if (i + 1..=i + config.lookahead).all(|j| smoothed[j] < bound) {
            return (i, true);
        }
    }
    (series.len() - 1, false)
}

#[test]
fn check_07_elbow_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x07);
    let configs = [
        ElbowConfig::default(),
        ElbowConfig {
            smoothing_window: 1,
            lookahead: 2,
            mode: ThresholdMode::Relative(0.10),
        },
        ElbowConfig {
            smoothing_window: 5,
            lookahead: 3,
            mode: ThresholdMode::Absolute(0.01),
        },
        ElbowConfig {
            smoothing_window: 8,
            lookahead: 6,
            mode: ThresholdMode::Relative(0.02),
        },
    ];

    let mut mismatches = 0usize;
    let mut fallbacks = 0usize;
    let total = 10_000usize;
    for trial in 0..total {
        let config = &configs[trial % configs.len()];
        let len = rng.random_range(config.lookahead + 1..=60);
        let series: Vec<f64> = match trial % 10 {
            // Keeps improving through the end; must fall back, flagged.
            6 | 7 => {
                let slope = rng.random_range(0.06..0.25);
                (0..len).map(|i| 0.2 + slope * i as f64).collect()
            }
            // Flat from the start.
            8 => vec![rng.random_range(0.1..0.9); len],
            // Climb, then a hard plateau partway in.
            9 => {
                let knee = rng.random_range(1..len.max(2));
                (0..len)
                    .map(|i| if i < knee { 0.1 + 0.2 * i as f64 } else { 0.1 + 0.2 * knee as f64 })
                    .collect()
            }
            // Unstructured noise.
            _ => (0..len).map(|_| rng.random_range(0.0..1.0)).collect(),
        };

        let fast = find_elbow(&series, config).unwrap();
        let (slow_index, slow_found) = naive_elbow(&series, config);
        if fast.index != slow_index || fast.plateau_found != slow_found {
            mismatches += 1;
        }
        if !slow_found {
            fallbacks += 1;
        }
    }

    verdict(
        "check 07 elbow oracle",
        mismatches == 0 && fallbacks > 0,
        &format!("{total} series ({fallbacks} without a plateau), {mismatches} mismatches"),
    );
}

// ---------------------------------------------------------------------------
// 08: latency orderings between window lengths and model flavors
// ---------------------------------------------------------------------------

#[test]
fn check_08_latency_orderings() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x08);
    let sniff_model = LstmModel::new(5, 30, 0x0801);
    let deep_model = LstmModel::new(5, 250, 0x0802);
    let sniff_windows: Vec<FeatureWindow> =
        (0..24).map(|i| random_window(&mut rng, 30, 0, i)).collect();
    let deep_windows: Vec<FeatureWindow> =
        (0..24).map(|i| random_window(&mut rng, 250, 0, i)).collect();

    let sniff = bench_inference(&sniff_model, &sniff_windows, 12, 2).unwrap();
    let deep = bench_inference(&deep_model, &deep_windows, 12, 2).unwrap();
    let ratio = deep.mean_ms / sniff.mean_ms;

    let dir = tempfile::tempdir().unwrap();
    let float_path = dir.path().join("m.brnn");
    let quant_path = dir.path().join("m.q8.brnn");
    save_float_model(&sniff_model, &float_path).unwrap();
    save_quantized_model(&quantize_model(&sniff_model).unwrap(), &quant_path).unwrap();
    let float_load = bench_model_load(&float_path, 30, 5).unwrap();
    let quant_load = bench_model_load(&quant_path, 30, 5).unwrap();

    verdict(
        "check 08 latency orderings",
        (4.0..=16.0).contains(&ratio) && quant_load.mean_ms <= float_load.mean_ms,
        &format!(
            "deep/sniff inference ratio {ratio:.1} ({:.3} ms vs {:.3} ms per window), \
             load {:.3} ms quantized vs {:.3} ms float",
            deep.mean_ms, sniff.mean_ms, quant_load.mean_ms, float_load.mean_ms
        ),
    );
}

// ---------------------------------------------------------------------------
// 09: byte-level reproducibility of full pipeline runs
// ---------------------------------------------------------------------------

fn breathid(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_breathid"))
        .args(args)
        .output()
        .expect("binary runs")
        .status
        .success()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("under root")
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, fs::read(&path).expect("readable file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn check_09_pipeline_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(breathid(&[
        "synth", "--users", "2", "--seed", "7", "--out", data.to_str().unwrap(),
        "--sessions", "4,4,2", "--gesture", "sniff", "--sniff-ms", "300",
    ]));
    let manifest = data.join("clips.jsonl");

    for run in ["r1", "r2"] {
        let lstm_dir = dir.path().join(run).join("lstm");
        let svm_dir = dir.path().join(run).join("svm");
        let common = [
            "--manifest", manifest.to_str().unwrap(), "--gesture", "sniff",
            "--window", "10", "--overlap", "0.5", "--seed", "11",
            "--copies", "1", "--holdout", "1",
        ];

        let mut args = vec!["train"];
        args.extend_from_slice(&common);
        args.extend_from_slice(&["--iterations", "12", "--batch", "8", "--out", lstm_dir.to_str().unwrap()]);
        assert!(breathid(&args), "train {run}");
        for sub in ["select", "quantize", "eval"] {
            assert!(breathid(&[sub, "--run", lstm_dir.to_str().unwrap()]), "{sub} {run}");
        }
        assert!(breathid(&["eval", "--run", lstm_dir.to_str().unwrap(), "--quantized"]));

        let mut args = vec!["svm-train"];
        args.extend_from_slice(&common);
        args.extend_from_slice(&["--epochs", "4", "--c", "1.0", "--out", svm_dir.to_str().unwrap()]);
        assert!(breathid(&args), "svm-train {run}");
        assert!(breathid(&["svm-eval", "--run", svm_dir.to_str().unwrap()]), "svm-eval {run}");
    }

    let first = tree(&dir.path().join("r1"));
    let second = tree(&dir.path().join("r2"));
    let files = first.len();
    let models = first.keys().filter(|k| k.ends_with(".brnn") || k.ends_with(".bsvm")).count();

    verdict(
        "check 09 reproducibility",
        first == second && models >= 3,
        &format!("two full runs, {files} files each ({models} model files), byte-identical"),
    );
}

// ---------------------------------------------------------------------------
// 10: SVM baseline sanity and parity with the network
// ---------------------------------------------------------------------------

/// Three classes, each lighting up its own feature column: linearly
/// separable by construction.
fn separable_toy(rng: &mut ChaCha8Rng) -> Vec<FeatureWindow> {
    let mut windows = Vec::new();
    for class in 0..3u32 {
        for i in 0..30u64 {
            let mut data =
                Array2::from_shape_fn((2, FEATURE_DIM), |_| rng.random_range(-0.05..0.05));
            for row in 0..2 {
                data[[row, class as usize]] += 4.0;
            }
            windows.push(FeatureWindow::from_matrix(data, class, u64::from(class) * 30 + i));
        }
    }
    windows
}

#[test]
fn check_10_svm_baseline_tracks_the_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x10);
    let toy = separable_toy(&mut rng);
    let toy_model = train_svm(&toy, 3, &SvmConfig::new(0x10)).unwrap();
    let toy_accuracy = toy_model.window_accuracy(&toy).unwrap();

    let fx = &*FIXTURE;
    let (svm_model, grid) = grid_search(
        &fx.bundle.train,
        &fx.bundle.validation,
        FIXTURE_USERS,
        DEFAULT_EPOCHS,
        mix_seed(FIXTURE_SEED, 4),
    )
    .unwrap();
    let svm_intra = svm_model.sample_accuracy(&fx.bundle.intra).unwrap();
    let lstm_intra = sample_accuracy(&EvalModel::from_model(&fx.best), &fx.bundle.intra);
    let gap = lstm_intra.fraction - svm_intra.fraction;

    verdict(
        "check 10 svm baseline",
        toy_accuracy == 1.0
            && toy_model.pairs.len() == 3
            && svm_model.pairs.len() == FIXTURE_USERS * (FIXTURE_USERS - 1) / 2
            && gap <= 0.10,
        &format!(
            "toy {:.0}% with {} pair classifiers, fixture intra {:.1}% vs network {:.1}% \
             (C = {})",
            toy_accuracy * 100.0,
            toy_model.pairs.len(),
            svm_intra.fraction * 100.0,
            lstm_intra.fraction * 100.0,
            grid.chosen_c
        ),
    );
}
