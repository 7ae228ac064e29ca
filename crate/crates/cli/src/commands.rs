//! Command implementations behind the `nfc` binary. Kept in the library
//! so integration tests can drive them in-process.

use std::fs;
use std::path::{Path, PathBuf};

use nfc_core::checkpoint::{load_model, save_model};
use nfc_core::error::{NfcError, Result};
use nfc_core::features::{feature_matrix, write_feature_csv};
use nfc_core::gradcheck::{check_model, compare_gradients, finite_diff, jitter_params, GradCheckReport, CHECK_STEP};
use nfc_core::mat::Mat;
use nfc_core::metrics::EvalReport;
use nfc_core::model::{init_model, ArchConfig, FusionKind, Mode, NfcModel};
use nfc_core::seed::substream;
use nfc_core::signal::{
    apply_standardizer, fit_standardizer, generate_synthetic, load_recordings, save_manifest,
    stratified_split, window_signal, write_recording_binary, write_recording_csv, ClassLabel,
    DataFormat, Manifest, ManifestEntry, RawRecording, SignalSegment, SplitDataset,
};
use nfc_core::train::{evaluate_model, softmax_cross_entropy, train};

use crate::config::RunConfig;

/// Synthesizes the per-class recordings a config implies. Each recording's
/// seed derives from the master seed via a `synth/<label>/<index>` stream.
pub fn synthesize_recordings(cfg: &RunConfig) -> Result<Vec<RawRecording>> {
    let mut recordings = Vec::new();
    for label in ClassLabel::ALL {
        for i in 0..cfg.data.recordings_per_class {
            let seed = substream(cfg.seed, &format!("synth/{}/{i}", label.name()));
            let synth = cfg.synth.to_config(seed);
            recordings.push(generate_synthetic(&synth, label)?);
        }
    }
    Ok(recordings)
}

/// Full data path: load or synthesize recordings, window, stratified
/// split, then standardize both sides with training-pool statistics.
pub fn build_dataset(cfg: &RunConfig) -> Result<SplitDataset> {
    let recordings = match &cfg.data.manifest {
        Some(path) => load_recordings(path, cfg.data.format)?,
        None => synthesize_recordings(cfg)?,
    };
    let mut segments: Vec<SignalSegment> = Vec::new();
    for rec in &recordings {
        segments.extend(window_signal(rec, cfg.data.window_len, cfg.data.overlap)?);
    }
    let split = stratified_split(&segments, cfg.data.test_fraction, substream(cfg.seed, "split"))?;
    let standardizer = fit_standardizer(&split.train)?;
    Ok(SplitDataset {
        train: split
            .train
            .iter()
            .map(|s| apply_standardizer(&standardizer, s))
            .collect(),
        test: split
            .test
            .iter()
            .map(|s| apply_standardizer(&standardizer, s))
            .collect(),
        seed: split.seed,
    })
}

/// Files produced by `gen-data`.
#[derive(Debug)]
pub struct GenSummary {
    pub manifest_path: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Writes per-class synthetic recordings plus their manifest.
pub fn cmd_gen_data(cfg: &RunConfig, out_dir: &Path) -> Result<GenSummary> {
    fs::create_dir_all(out_dir)?;
    let recordings = synthesize_recordings(cfg)?;
    let extension = match cfg.data.format {
        DataFormat::Csv => "csv",
        DataFormat::FloatBinary => "bin",
    };
    let mut entries = Vec::new();
    let mut files = Vec::new();
    let mut per_class_counter = [0usize; ClassLabel::COUNT];
    for rec in &recordings {
        let idx = per_class_counter[rec.label.index()];
        per_class_counter[rec.label.index()] += 1;
        let name = format!("{}_{idx:03}.{extension}", rec.label.name());
        let path = out_dir.join(&name);
        match cfg.data.format {
            DataFormat::Csv => write_recording_csv(&path, rec)?,
            DataFormat::FloatBinary => write_recording_binary(&path, rec)?,
        }
        entries.push(ManifestEntry {
            file: name,
            label: rec.label.name().into(),
            sample_rate: rec.sample_rate,
        });
        files.push(path);
    }
    let manifest_path = out_dir.join("manifest.json");
    save_manifest(&manifest_path, &Manifest { recordings: entries })?;
    Ok(GenSummary {
        manifest_path,
        files,
    })
}

/// Files produced by `train`.
#[derive(Debug)]
pub struct TrainOutputs {
    pub checkpoint_path: PathBuf,
    pub history_path: PathBuf,
    pub report_json_path: PathBuf,
    pub report_text_path: PathBuf,
    pub report: EvalReport,
}

/// Full pipeline: build the dataset, train the configured model, and emit
/// checkpoint, history CSV, and the evaluation report in both formats.
pub fn cmd_train(cfg: &RunConfig, out_dir: &Path) -> Result<TrainOutputs> {
    fs::create_dir_all(out_dir)?;
    let data = build_dataset(cfg)?;
    let arch = cfg.arch_config();
    let mut model = init_model(&arch, substream(cfg.seed, "init"))?;
    let train_cfg = cfg.train.to_config(cfg.seed);
    let history = train(&mut model, &data, &train_cfg)?;
    let eval_set = if data.test.is_empty() {
        &data.train
    } else {
        &data.test
    };
    let (_, report) = evaluate_model(&model, eval_set, train_cfg.batch_size)?;
    let checkpoint_path = out_dir.join("checkpoint.json");
    save_model(&model, &checkpoint_path)?;
    let history_path = out_dir.join("history.csv");
    history.write_csv(&history_path)?;
    let report_json_path = out_dir.join("report.json");
    fs::write(&report_json_path, report.to_json()?)?;
    let report_text_path = out_dir.join("report.txt");
    fs::write(&report_text_path, report.to_text())?;
    Ok(TrainOutputs {
        checkpoint_path,
        history_path,
        report_json_path,
        report_text_path,
        report,
    })
}

/// Eval-mode inference of a saved checkpoint over the config's test split;
/// emits the report in both formats.
pub fn cmd_eval(checkpoint: &Path, cfg: &RunConfig, out_dir: &Path) -> Result<EvalReport> {
    fs::create_dir_all(out_dir)?;
    let model = load_model(checkpoint)?;
    if model.input_len() != cfg.data.window_len {
        return Err(NfcError::Parameter(format!(
            "checkpoint expects windows of {}, config produces {}",
            model.input_len(),
            cfg.data.window_len
        )));
    }
    let data = build_dataset(cfg)?;
    let eval_set = if data.test.is_empty() {
        &data.train
    } else {
        &data.test
    };
    let (_, report) = evaluate_model(&model, eval_set, cfg.train.batch_size)?;
    fs::write(out_dir.join("report.json"), report.to_json()?)?;
    fs::write(out_dir.join("report.txt"), report.to_text())?;
    Ok(report)
}

/// The small architectures exercised by `gradcheck`.
fn gradcheck_archs() -> [(&'static str, ArchConfig); 2] {
    [
        (
            "cp",
            ArchConfig {
                input_len: 16,
                fusion: FusionKind::Cp { rank: 4 },
                hidden: vec![8, 6],
                dropout: 0.3,
                num_classes: 4,
            },
        ),
        (
            "tucker",
            ArchConfig {
                input_len: 16,
                fusion: FusionKind::Tucker { p: 3, q: 3 },
                hidden: vec![8, 6],
                dropout: 0.3,
                num_classes: 4,
            },
        ),
    ]
}

fn gradcheck_batch(input_len: usize, rows: usize, seed: u64) -> (Mat, Vec<usize>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut batch = Mat::zeros(rows, input_len);
    for v in batch.as_mut_slice() {
        *v = rng.random_range(-1.0..1.0);
    }
    let labels = (0..rows).map(|i| i % ClassLabel::COUNT).collect();
    (batch, labels)
}

/// Runs the finite-difference check on small models of both fusion
/// variants in both modes. With `inject_fault` the analytic fusion
/// gradient is corrupted by 10% first, to prove the harness catches it.
pub fn cmd_gradcheck(tolerance: f64, inject_fault: bool) -> Result<Vec<(String, GradCheckReport)>> {
    let mut reports = Vec::new();
    for (name, arch) in gradcheck_archs() {
        let mut model = init_model(&arch, substream(0xC0FFEE, name))?;
        jitter_params(&mut model, 0.05, substream(0xC0FFEE, "jitter"));
        let (batch, labels) = gradcheck_batch(arch.input_len, 8, substream(0xC0FFEE, "data"));
        for mode in [Mode::Train, Mode::Eval] {
            let mode_name = match mode {
                Mode::Train => "train",
                Mode::Eval => "eval",
            };
            let report = if inject_fault && mode == Mode::Eval {
                let mut work = model.clone();
                let (logits, cache) = work.forward_with_masks(&batch, mode, None)?;
                let (_, dlogits) = softmax_cross_entropy(&logits, &labels)?;
                let mut analytic = work.backward(&cache, &dlogits)?;
                for (tname, tensor) in analytic.tensors_mut() {
                    if tname.starts_with("fusion.") {
                        for v in tensor {
                            *v *= 1.1;
                        }
                    }
                }
                let loss_fn = |m: &NfcModel| -> Result<f64> {
                    let mut w = m.clone();
                    let (logits, _) = w.forward_with_masks(&batch, mode, None)?;
                    Ok(softmax_cross_entropy(&logits, &labels)?.0)
                };
                let numeric = finite_diff(loss_fn, &model, CHECK_STEP)?;
                compare_gradients(&analytic, &numeric, tolerance)?
            } else {
                check_model(&model, &batch, &labels, mode, tolerance)?
            };
            reports.push((format!("{name}/{mode_name}"), report));
        }
    }
    Ok(reports)
}

/// Extracts the 12 time-domain features of every standardized segment
/// (train split first, then test) and writes them as CSV.
pub fn cmd_features(cfg: &RunConfig, out_path: &Path) -> Result<usize> {
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let data = build_dataset(cfg)?;
    let mut segments = data.train;
    segments.extend(data.test);
    let (features, labels) = feature_matrix(&segments)?;
    write_feature_csv(out_path, &features, &labels)?;
    Ok(segments.len())
}
