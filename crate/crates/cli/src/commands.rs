//! Subcommand implementations.
//!
//! Producing commands (`synth`, `features`, `train`, `svm-train`) write a
//! run manifest beside their artifacts; consuming commands take `--run`
//! and regenerate whatever intermediate state they need from that
//! manifest, so artifacts never have to be shipped between steps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use breathid_core::audio::{
    mix_seed, synthesize_clip, write_wav, Gesture, SynthProfile,
};
use breathid_core::bench::{
    bench_feature_extraction, bench_inference, bench_model_load, BenchReport,
};
use breathid_core::dataset::{
    make_splits, realize_clip, realize_manifest, ClipSource, Manifest, ManifestEntry,
    SplitBundle, SplitConfig,
};
use breathid_core::features::{FeatureExtractor, WindowConfig};
use breathid_core::lstm::{
    train, EvalModel, IterationRecord, LstmModel, TrainConfig, TrainHistory, TrainObserver,
};
use breathid_core::quantize::quantize_model;
use breathid_core::selection::{
    sample_accuracy, select_best, window_accuracy_of, Checkpoint, CheckpointRing, RingOutcome,
};
use breathid_core::store::{
    encode_quantized_model, load_float_model, load_quantized_model, save_float_model,
    save_quantized_model, write_zip_single,
};
use breathid_core::svm::{grid_search, load_svm, save_svm, train_svm, GridReport, SvmConfig};

use crate::args::{
    BenchArgs, Command, EvalArgs, FeaturesArgs, RunArgs, SvmTrainArgs, SynthArgs, TrainArgs,
};
use crate::manifest::{
    read_json, write_json, CandidateRef, EvalReport, FeaturesManifest, RingSummary, RunManifest,
    SetScores, SizeReport, SvmManifest, SynthManifest, TrainManifest, BENCH_FILE,
    BEST_MODEL_FILE, CLIP_MANIFEST_FILE, EVAL_FILE, EVAL_QUANTIZED_FILE, HISTORY_FILE,
    QUANTIZED_MODEL_FILE, QUANTIZED_ZIP_FILE, RING_FILE, SELECTION_FILE, SIZES_FILE,
    SVM_EVAL_FILE, SVM_MODEL_FILE, SVM_REPORT_FILE,
};
use crate::CliError;

// Distinct sub-seed streams derived from the one user-facing seed.
const SALT_SPLIT: u64 = 0x53;
const SALT_INIT: u64 = 0x49;
const SALT_BATCH: u64 = 0x42;
const SALT_SVM: u64 = 0x56;

const DEFAULT_LEARNING_RATE: f64 = 1e-3;
/// Inference benches average over at most this many windows per rep.
const BENCH_WINDOW_CAP: usize = 200;

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(args) => cmd_synth(&args),
        Command::Features(args) => cmd_features(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Select(args) => cmd_select(&args),
        Command::Quantize(args) => cmd_quantize(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::SvmTrain(args) => cmd_svm_train(&args),
        Command::SvmEval(args) => cmd_svm_eval(&args),
        Command::Bench(args) => cmd_bench(&args),
        Command::Report(args) => cmd_report(&args),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Absolute form of a user-supplied path, so run manifests keep working
/// when later commands run from a different directory.
fn absolutize(path: &Path) -> Result<PathBuf, CliError> {
    fs::canonicalize(path)
        .map_err(|e| CliError::Invalid(format!("cannot resolve {}: {e}", path.display())))
}

/// Rebuilds the split bundle a training-side manifest describes. Pure in
/// the manifest fields, so every consuming command sees identical windows.
fn rebuild_splits(
    dataset_manifest: &Path,
    gesture: Gesture,
    window_len: usize,
    overlap: f64,
    augment_copies: usize,
    intra_holdout: usize,
    strict: bool,
    seed: u64,
) -> Result<SplitBundle, CliError> {
    let manifest = Manifest::read(dataset_manifest)?;
    let filtered = manifest.for_gesture(gesture);
    if filtered.entries.is_empty() {
        return Err(CliError::Invalid(format!(
            "manifest {} has no {gesture} clips",
            dataset_manifest.display()
        )));
    }
    let base = dataset_manifest.parent().unwrap_or(Path::new("."));
    let clips = realize_manifest(&filtered, base)?;

    let mut config = SplitConfig::new(
        WindowConfig::new(window_len, overlap)?,
        gesture,
        mix_seed(seed, SALT_SPLIT),
    );
    config.augment_copies = augment_copies;
    config.intra_holdout = intra_holdout;
    config.strict = strict;
    Ok(make_splits(&clips, &config)?)
}

fn splits_for_train(m: &TrainManifest) -> Result<SplitBundle, CliError> {
    rebuild_splits(
        &m.dataset_manifest,
        m.gesture,
        m.window_len,
        m.overlap,
        m.augment_copies,
        m.intra_holdout,
        m.strict,
        m.seed,
    )
}

fn splits_for_svm(m: &SvmManifest) -> Result<SplitBundle, CliError> {
    rebuild_splits(
        &m.dataset_manifest,
        m.gesture,
        m.window_len,
        m.overlap,
        m.augment_copies,
        m.intra_holdout,
        m.strict,
        m.seed,
    )
}

fn print_split_shape(bundle: &SplitBundle) {
    println!(
        "splits: {} train / {} validation / {} intra / {} inter windows, {} users",
        bundle.train.len(),
        bundle.validation.len(),
        bundle.intra.len(),
        bundle.inter.len(),
        bundle.users.len()
    );
    if bundle.skipped.total() > 0 {
        println!(
            "skipped short clips: {} train, {} intra, {} inter",
            bundle.skipped.train, bundle.skipped.intra, bundle.skipped.inter
        );
    }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    fs::create_dir_all(&args.out)?;
    let gestures = args.gesture.gestures();
    let sessions = args.sessions.0;

    let mut entries = Vec::new();
    let mut clip_counter = 0u64;
    for user in 0..args.users {
        let profile = SynthProfile::for_user(user, args.seed);
        for &gesture in &gestures {
            let base_ms = match gesture {
                Gesture::Sniff => args.sniff_ms,
                Gesture::Deep => args.deep_ms,
            };
            for (slot, &count) in sessions.iter().enumerate() {
                let session = (slot + 1) as u8;
                for index in 0..count {
                    let noise_seed = mix_seed(args.seed, clip_counter);
                    clip_counter += 1;
                    // ±10% duration jitter in 1% steps, seeded not clocked.
                    let jitter = 90 + (mix_seed(noise_seed, 0xD1) % 21) as u32;
                    let duration_ms = base_ms * jitter / 100;

                    let mut clip = synthesize_clip(
                        &profile.clone().with_noise_seed(noise_seed),
                        gesture,
                        duration_ms,
                    )?;
                    clip.session = session;

                    let rel = format!(
                        "u{user:02}/{gesture}/s{session}/clip_{index:03}.wav",
                        gesture = gesture.as_str()
                    );
                    let full = args.out.join(&rel);
                    fs::create_dir_all(full.parent().expect("clip paths have parents"))?;
                    write_wav(&clip, &full)?;

                    entries.push(ManifestEntry {
                        source: ClipSource::Path(PathBuf::from(rel)),
                        user,
                        gesture,
                        session,
                        index: index as u32,
                    });
                }
            }
        }
    }

    let manifest = Manifest { entries };
    manifest.write(&args.out.join(CLIP_MANIFEST_FILE))?;
    RunManifest::Synth(SynthManifest {
        users: args.users,
        seed: args.seed,
        sessions,
        gestures,
        sniff_ms: args.sniff_ms,
        deep_ms: args.deep_ms,
    })
    .save(&args.out)?;

    println!(
        "wrote {} clips for {} users to {}",
        manifest.entries.len(),
        args.users,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

fn cmd_features(args: &FeaturesArgs) -> Result<(), CliError> {
    let dataset_manifest = absolutize(&args.manifest)?;
    fs::create_dir_all(&args.out)?;
    let manifest = Manifest::read(&dataset_manifest)?;
    let base = dataset_manifest.parent().unwrap_or(Path::new("."));
    let gestures = args.gesture.gestures();

    let mut extractors: BTreeMap<u32, FeatureExtractor> = BTreeMap::new();
    let mut written = 0usize;
    for entry in manifest
        .entries
        .iter()
        .filter(|e| gestures.contains(&e.gesture))
    {
        let clip = realize_clip(entry, base)?;
        if !extractors.contains_key(&clip.sample_rate_hz) {
            extractors.insert(clip.sample_rate_hz, FeatureExtractor::new(clip.sample_rate_hz)?);
        }
        let matrix = extractors[&clip.sample_rate_hz].extract(&clip.samples)?;
        let name = format!(
            "u{user:02}_{gesture}_s{session}_c{index:03}.bfea",
            user = entry.user,
            gesture = entry.gesture.as_str(),
            session = entry.session,
            index = entry.index
        );
        breathid_core::features::write_feature_dump(&matrix, &args.out.join(name))?;
        written += 1;
    }

    if written == 0 {
        return Err(CliError::Invalid(
            "manifest has no clips for the requested gesture".into(),
        ));
    }
    RunManifest::Features(FeaturesManifest {
        dataset_manifest,
        gestures,
    })
    .save(&args.out)?;
    println!("wrote {written} feature dumps to {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Forwards to the checkpoint ring and keeps a light heartbeat on stderr.
struct RingWithProgress {
    ring: CheckpointRing,
    every: usize,
}

impl TrainObserver for RingWithProgress {
    fn on_iteration(&mut self, model: &LstmModel, record: &IterationRecord) {
        self.ring.on_iteration(model, record);
        if record.iteration % self.every == 0 {
            eprintln!(
                "iter {:>5}  loss {:>9.5}  val {:>6.4}",
                record.iteration, record.train_loss, record.validation_accuracy
            );
        }
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    if args.iterations < 5 {
        return Err(CliError::Invalid(
            "elbow detection needs at least 5 iterations".into(),
        ));
    }
    let dataset_manifest = absolutize(&args.manifest)?;
    fs::create_dir_all(&args.out)?;
    let window_len = args.window.unwrap_or_else(|| args.gesture.default_window());
    let train_manifest = TrainManifest {
        dataset_manifest,
        gesture: args.gesture.gesture(),
        window_len,
        overlap: args.overlap,
        augment_copies: args.copies,
        intra_holdout: args.holdout,
        strict: args.strict,
        seed: args.seed,
        iterations: args.iterations,
        batch_size: args.batch,
        learning_rate: DEFAULT_LEARNING_RATE,
        loss: args.loss.kind(),
    };

    let bundle = splits_for_train(&train_manifest)?;
    print_split_shape(&bundle);

    let mut model = LstmModel::new(
        bundle.users.len(),
        window_len,
        mix_seed(args.seed, SALT_INIT),
    );
    let config = TrainConfig {
        iterations: args.iterations,
        batch_size: args.batch,
        learning_rate: DEFAULT_LEARNING_RATE,
        loss: args.loss.kind(),
        seed: mix_seed(args.seed, SALT_BATCH),
    };
    let mut observer = RingWithProgress {
        ring: CheckpointRing::with_defaults(),
        every: 50,
    };
    let history: TrainHistory =
        train(&mut model, &bundle.train, &bundle.validation, &config, &mut observer)?;
    let outcome = observer.ring.finalize()?;

    let candidate_dir = args.out.join("candidates");
    fs::create_dir_all(&candidate_dir)?;
    let mut refs = Vec::with_capacity(outcome.candidates.len());
    for checkpoint in &outcome.candidates {
        let snapshot = LstmModel::unpack_f32(
            &checkpoint.params,
            outcome.num_users,
            outcome.window_len,
        );
        let file = format!("candidates/candidate_{:04}.brnn", checkpoint.iteration);
        save_float_model(&snapshot, &args.out.join(&file))?;
        refs.push(CandidateRef {
            iteration: checkpoint.iteration,
            validation_accuracy: checkpoint.validation_accuracy,
            file,
        });
    }

    write_json(&args.out, HISTORY_FILE, &history)?;
    write_json(
        &args.out,
        RING_FILE,
        &RingSummary {
            elbow_index: outcome.elbow_index,
            elbow_iteration: outcome.elbow_iteration,
            plateau_found: outcome.plateau_found,
            curve: outcome.curve.clone(),
            num_users: outcome.num_users,
            window_len: outcome.window_len,
            candidates: refs,
        },
    )?;
    RunManifest::Train(train_manifest).save(&args.out)?;

    let last = history.records.last().expect("at least one iteration");
    println!(
        "trained {} iterations, final validation window accuracy {:.4}",
        last.iteration, last.validation_accuracy
    );
    println!(
        "elbow at iteration {}{}, kept {} candidates in {}",
        outcome.elbow_iteration,
        if outcome.plateau_found {
            ""
        } else {
            " (no plateau; curve end)"
        },
        outcome.candidates.len(),
        candidate_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

fn cmd_select(args: &RunArgs) -> Result<(), CliError> {
    let run_manifest = RunManifest::load(&args.run)?;
    let train_manifest = run_manifest.expect_train()?;
    let ring: RingSummary = read_json(&args.run, RING_FILE)?;

    let bundle = splits_for_train(train_manifest)?;
    let mut candidates = Vec::with_capacity(ring.candidates.len());
    for c in &ring.candidates {
        let model = load_float_model(&args.run.join(&c.file))?;
        candidates.push(Checkpoint {
            iteration: c.iteration,
            validation_accuracy: c.validation_accuracy,
            params: model.pack_f32(),
        });
    }
    let outcome = RingOutcome {
        elbow_index: ring.elbow_index,
        elbow_iteration: ring.elbow_iteration,
        plateau_found: ring.plateau_found,
        candidates,
        curve: ring.curve,
        num_users: ring.num_users,
        window_len: ring.window_len,
    };

    let (report, best) = select_best(&outcome, &bundle.validation, &bundle.intra, &bundle.inter)?;
    save_float_model(&best, &args.run.join(BEST_MODEL_FILE))?;
    write_json(&args.run, SELECTION_FILE, &report)?;

    println!("candidate scores (sample-level):");
    println!("{:>6}  {:>10}  {:>10}  {:>10}  {:>10}", "iter", "validation", "intra", "inter", "mean");
    for c in &report.candidates {
        println!(
            "{:>6}  {:>10.4}  {:>10.4}  {:>10.4}  {:>10.4}",
            c.iteration,
            c.validation_sample_accuracy,
            c.intra_sample_accuracy,
            c.inter_sample_accuracy,
            c.mean_accuracy
        );
    }
    println!(
        "selected iteration {} -> {}",
        report.best_iteration,
        args.run.join(BEST_MODEL_FILE).display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// quantize
// ---------------------------------------------------------------------------

fn cmd_quantize(args: &RunArgs) -> Result<(), CliError> {
    RunManifest::load(&args.run)?.expect_train()?;
    let float_path = args.run.join(BEST_MODEL_FILE);
    let model = load_float_model(&float_path)?;
    let float_bytes = fs::metadata(&float_path)?.len();

    let quantized = quantize_model(&model)?;
    let quantized_bytes =
        save_quantized_model(&quantized, &args.run.join(QUANTIZED_MODEL_FILE))?;
    let zipped_bytes = write_zip_single(
        &args.run.join(QUANTIZED_ZIP_FILE),
        QUANTIZED_MODEL_FILE,
        &encode_quantized_model(&quantized),
    )?;

    let sizes = SizeReport {
        float_bytes,
        quantized_bytes,
        zipped_bytes,
        quantized_ratio: quantized_bytes as f64 / float_bytes as f64,
        zipped_ratio: zipped_bytes as f64 / float_bytes as f64,
    };
    write_json(&args.run, SIZES_FILE, &sizes)?;

    println!("float     {:>10} bytes", sizes.float_bytes);
    println!(
        "quantized {:>10} bytes  ({:.4} of float)",
        sizes.quantized_bytes, sizes.quantized_ratio
    );
    println!(
        "zipped    {:>10} bytes  ({:.4} of float, {:.2}x smaller)",
        sizes.zipped_bytes,
        sizes.zipped_ratio,
        1.0 / sizes.zipped_ratio
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn score_sets(
    eval: &EvalModel,
    bundle: &SplitBundle,
) -> Vec<SetScores> {
    let sets: [(&str, &[breathid_core::features::FeatureWindow]); 3] = [
        ("validation", &bundle.validation),
        ("intra", &bundle.intra),
        ("inter", &bundle.inter),
    ];
    sets.iter()
        .map(|(name, windows)| {
            let sample = sample_accuracy(eval, windows);
            SetScores {
                set: (*name).to_string(),
                windows: windows.len(),
                clips: sample.clips,
                window_accuracy: window_accuracy_of(eval, windows),
                sample_accuracy: sample.fraction,
            }
        })
        .collect()
}

fn print_scores(flavor: &str, sets: &[SetScores]) {
    println!("{flavor} model accuracy:");
    println!(
        "{:>12}  {:>8}  {:>6}  {:>10}  {:>10}",
        "set", "windows", "clips", "window", "sample"
    );
    for s in sets {
        println!(
            "{:>12}  {:>8}  {:>6}  {:>10.4}  {:>10.4}",
            s.set, s.windows, s.clips, s.window_accuracy, s.sample_accuracy
        );
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let run_manifest = RunManifest::load(&args.run)?;
    let train_manifest = run_manifest.expect_train()?;
    let bundle = splits_for_train(train_manifest)?;

    let (flavor, model, out_file) = if args.quantized {
        let q = load_quantized_model(&args.run.join(QUANTIZED_MODEL_FILE))?;
        ("quantized", q.to_model(), EVAL_QUANTIZED_FILE)
    } else {
        let m = load_float_model(&args.run.join(BEST_MODEL_FILE))?;
        ("float", m, EVAL_FILE)
    };

    let eval = EvalModel::from_model(&model);
    let sets = score_sets(&eval, &bundle);
    let report = EvalReport {
        flavor: flavor.to_string(),
        num_users: bundle.users.len(),
        window_len: train_manifest.window_len,
        sets,
    };
    write_json(&args.run, out_file, &report)?;
    print_scores(flavor, &report.sets);
    Ok(())
}

// ---------------------------------------------------------------------------
// svm-train / svm-eval
// ---------------------------------------------------------------------------

fn cmd_svm_train(args: &SvmTrainArgs) -> Result<(), CliError> {
    let dataset_manifest = absolutize(&args.manifest)?;
    fs::create_dir_all(&args.out)?;
    let window_len = args.window.unwrap_or_else(|| args.gesture.default_window());
    let svm_manifest = SvmManifest {
        dataset_manifest,
        gesture: args.gesture.gesture(),
        window_len,
        overlap: args.overlap,
        augment_copies: args.copies,
        intra_holdout: args.holdout,
        strict: args.strict,
        seed: args.seed,
        epochs: args.epochs,
        c: args.c,
    };

    let bundle = splits_for_svm(&svm_manifest)?;
    print_split_shape(&bundle);
    let num_users = bundle.users.len();
    let svm_seed = mix_seed(args.seed, SALT_SVM);

    let (model, grid): (_, Option<GridReport>) = match args.c {
        Some(c) => {
            let config = SvmConfig {
                c,
                epochs: args.epochs,
                seed: svm_seed,
            };
            (train_svm(&bundle.train, num_users, &config)?, None)
        }
        None => {
            let (model, report) =
                grid_search(&bundle.train, &bundle.validation, num_users, args.epochs, svm_seed)?;
            (model, Some(report))
        }
    };

    let validation_accuracy = model.window_accuracy(&bundle.validation)?;
    save_svm(&model, &args.out.join(SVM_MODEL_FILE))?;

    #[derive(serde::Serialize)]
    struct SvmTrainReport<'a> {
        chosen_c: f64,
        epochs: usize,
        pairs: usize,
        validation_window_accuracy: f64,
        grid: &'a Option<GridReport>,
    }
    let chosen_c = args.c.or(grid.as_ref().map(|g| g.chosen_c)).expect("one source of C");
    write_json(
        &args.out,
        SVM_REPORT_FILE,
        &SvmTrainReport {
            chosen_c,
            epochs: args.epochs,
            pairs: model.pairs.len(),
            validation_window_accuracy: validation_accuracy,
            grid: &grid,
        },
    )?;
    RunManifest::SvmTrain(svm_manifest).save(&args.out)?;

    if let Some(g) = &grid {
        for entry in &g.entries {
            println!("C = {:>6}  validation window accuracy {:.4}", entry.c, entry.validation_accuracy);
        }
    }
    println!(
        "trained {} pair classifiers at C = {chosen_c}, validation window accuracy {validation_accuracy:.4}",
        model.pairs.len()
    );
    Ok(())
}

fn cmd_svm_eval(args: &RunArgs) -> Result<(), CliError> {
    let run_manifest = RunManifest::load(&args.run)?;
    let svm_manifest = run_manifest.expect_svm()?;
    let bundle = splits_for_svm(svm_manifest)?;
    let model = load_svm(&args.run.join(SVM_MODEL_FILE))?;

    let sets: [(&str, &[breathid_core::features::FeatureWindow]); 3] = [
        ("validation", &bundle.validation),
        ("intra", &bundle.intra),
        ("inter", &bundle.inter),
    ];
    let mut scores = Vec::with_capacity(3);
    for (name, windows) in sets {
        let sample = model.sample_accuracy(windows)?;
        scores.push(SetScores {
            set: name.to_string(),
            windows: windows.len(),
            clips: sample.clips,
            window_accuracy: model.window_accuracy(windows)?,
            sample_accuracy: sample.fraction,
        });
    }
    let report = EvalReport {
        flavor: "svm".to_string(),
        num_users: bundle.users.len(),
        window_len: svm_manifest.window_len,
        sets: scores,
    };
    write_json(&args.run, SVM_EVAL_FILE, &report)?;
    print_scores("svm", &report.sets);
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let run_manifest = RunManifest::load(&args.run)?;
    let train_manifest = run_manifest.expect_train()?;

    // One representative clip for the front-end measurement.
    let manifest = Manifest::read(&train_manifest.dataset_manifest)?;
    let filtered = manifest.for_gesture(train_manifest.gesture);
    let first = filtered.entries.first().ok_or_else(|| {
        CliError::Invalid("dataset manifest has no clips for the trained gesture".into())
    })?;
    let base = train_manifest
        .dataset_manifest
        .parent()
        .unwrap_or(Path::new("."));
    let clip = realize_clip(first, base)?;

    let float_path = args.run.join(BEST_MODEL_FILE);
    if !float_path.exists() {
        return Err(CliError::Invalid(
            "no selected model in the run directory; run `select` first".into(),
        ));
    }
    let model = load_float_model(&float_path)?;

    let bundle = splits_for_train(train_manifest)?;
    let windows = if bundle.intra.is_empty() {
        &bundle.validation
    } else {
        &bundle.intra
    };
    let windows = &windows[..windows.len().min(BENCH_WINDOW_CAP)];

    let window_config = WindowConfig::new(train_manifest.window_len, train_manifest.overlap)?;
    let mut report = BenchReport::new(args.reps, args.warmup);
    report.push(
        "feature_extraction",
        bench_feature_extraction(&clip, &window_config, args.reps, args.warmup)?,
    );
    report.push(
        "model_load_float",
        bench_model_load(&float_path, args.reps, args.warmup)?,
    );
    let quant_path = args.run.join(QUANTIZED_MODEL_FILE);
    if quant_path.exists() {
        report.push(
            "model_load_quantized",
            bench_model_load(&quant_path, args.reps, args.warmup)?,
        );
    }
    report.push(
        "inference",
        bench_inference(&model, windows, args.reps, args.warmup)?,
    );

    report.save(&args.run.join(BENCH_FILE))?;
    print_bench(&report);
    Ok(())
}

fn print_bench(report: &BenchReport) {
    let threads = report.machine.cpu_threads;
    println!(
        "latency over {} reps ({} warmup), {} {} with {} thread{}:",
        report.reps,
        report.warmup,
        report.machine.os,
        report.machine.arch,
        threads,
        if threads == 1 { "" } else { "s" }
    );
    println!(
        "{:>22}  {:>10}  {:>10}  {:>10}  {:>10}",
        "benchmark", "mean ms", "std ms", "min ms", "max ms"
    );
    for entry in &report.entries {
        println!(
            "{:>22}  {:>10.4}  {:>10.4}  {:>10.4}  {:>10.4}",
            entry.name, entry.stats.mean_ms, entry.stats.std_ms, entry.stats.min_ms, entry.stats.max_ms
        );
    }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn cmd_report(args: &RunArgs) -> Result<(), CliError> {
    let run_manifest = RunManifest::load(&args.run)?;
    match &run_manifest {
        RunManifest::Train(m) => {
            println!(
                "train run: {} gesture, window {} frames at {:.0}% overlap, seed {}",
                m.gesture.as_str(), m.window_len, m.overlap * 100.0, m.seed
            );
            report_train_artifacts(&args.run)?;
        }
        RunManifest::SvmTrain(m) => {
            println!(
                "svm run: {} gesture, window {} frames at {:.0}% overlap, seed {}",
                m.gesture.as_str(), m.window_len, m.overlap * 100.0, m.seed
            );
            report_svm_artifacts(&args.run)?;
        }
        RunManifest::Synth(m) => {
            println!(
                "synthetic corpus: {} users, sessions {:?}, seed {}",
                m.users, m.sessions, m.seed
            );
        }
        RunManifest::Features(m) => {
            println!(
                "feature dumps extracted from {}",
                m.dataset_manifest.display()
            );
        }
    }
    Ok(())
}

fn report_train_artifacts(run: &Path) -> Result<(), CliError> {
    match read_json::<TrainHistory>(run, HISTORY_FILE) {
        Ok(history) => {
            println!("\nvalidation curve (window accuracy):");
            println!("{:>6}  {:>10}  {:>8}", "iter", "loss", "val");
            let n = history.records.len();
            let step = n.div_ceil(40).max(1);
            for record in history.records.iter().step_by(step) {
                println!(
                    "{:>6}  {:>10.5}  {:>8.4}",
                    record.iteration, record.train_loss, record.validation_accuracy
                );
            }
            if (n - 1) % step != 0 {
                let last = &history.records[n - 1];
                println!(
                    "{:>6}  {:>10.5}  {:>8.4}",
                    last.iteration, last.train_loss, last.validation_accuracy
                );
            }
        }
        Err(_) => println!("(no training history yet)"),
    }

    match read_json::<breathid_core::selection::SelectionReport>(run, SELECTION_FILE) {
        Ok(report) => {
            println!(
                "\nelbow at iteration {}{}; selected iteration {}",
                report.elbow_iteration,
                if report.plateau_found { "" } else { " (no plateau)" },
                report.best_iteration
            );
            println!(
                "{:>6}  {:>10}  {:>10}  {:>10}  {:>10}",
                "iter", "validation", "intra", "inter", "mean"
            );
            for c in &report.candidates {
                println!(
                    "{:>6}  {:>10.4}  {:>10.4}  {:>10.4}  {:>10.4}",
                    c.iteration,
                    c.validation_sample_accuracy,
                    c.intra_sample_accuracy,
                    c.inter_sample_accuracy,
                    c.mean_accuracy
                );
            }
        }
        Err(_) => println!("\n(no selection report yet)"),
    }

    for (file, label) in [(EVAL_FILE, "float"), (EVAL_QUANTIZED_FILE, "quantized")] {
        if let Ok(report) = read_json::<EvalReport>(run, file) {
            println!();
            print_scores(label, &report.sets);
        }
    }

    if let Ok(sizes) = read_json::<SizeReport>(run, SIZES_FILE) {
        println!(
            "\nmodel sizes: float {} B, quantized {} B ({:.4}), zipped {} B ({:.2}x smaller)",
            sizes.float_bytes,
            sizes.quantized_bytes,
            sizes.quantized_ratio,
            sizes.zipped_bytes,
            1.0 / sizes.zipped_ratio
        );
    }

    if let Ok(bench) = BenchReport::load(&run.join(BENCH_FILE)) {
        println!();
        print_bench(&bench);
    }
    Ok(())
}

fn report_svm_artifacts(run: &Path) -> Result<(), CliError> {
    #[derive(serde::Deserialize)]
    struct SvmTrainReport {
        chosen_c: f64,
        epochs: usize,
        pairs: usize,
        validation_window_accuracy: f64,
        grid: Option<GridReport>,
    }
    match read_json::<SvmTrainReport>(run, SVM_REPORT_FILE) {
        Ok(report) => {
            if let Some(grid) = &report.grid {
                for entry in &grid.entries {
                    println!(
                        "C = {:>6}  validation window accuracy {:.4}",
                        entry.c, entry.validation_accuracy
                    );
                }
            }
            println!(
                "{} pairs at C = {}, {} epochs, validation window accuracy {:.4}",
                report.pairs, report.chosen_c, report.epochs, report.validation_window_accuracy
            );
        }
        Err(_) => println!("(no svm training report yet)"),
    }
    if let Ok(report) = read_json::<EvalReport>(run, SVM_EVAL_FILE) {
        println!();
        print_scores("svm", &report.sets);
    }
    Ok(())
}
