//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (run with `cargo test --test acceptance -- --nocapture` to
//! see them). Every tolerance is pinned here, not configured.

use std::time::Instant;

use nfc_cli::commands::cmd_train;
use nfc_cli::config::RunConfig;
use nfc_core::gradcheck::{check_model, jitter_params};
use nfc_core::mat::Mat;
use nfc_core::metrics::{confusion, evaluate, ConfusionMatrix};
use nfc_core::model::{
    init_model, ArchConfig, CpFusion, Fusion, FusionGrad, FusionKind, Mode, NfcModel,
    TuckerFusion,
};
use nfc_core::seed::substream;
use nfc_core::signal::{
    apply_standardizer, fit_standardizer, generate_synthetic, stratified_split, window_signal,
    ClassLabel, SignalSegment, SplitDataset, SynthConfig,
};
use nfc_core::train::{
    evaluate_model, softmax_cross_entropy, train, SchedulerConfig, SchedulerState, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rows: usize, cols: usize, seed: u64) -> (Mat, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch = Mat::zeros(rows, cols);
    for v in batch.as_mut_slice() {
        *v = rng.random_range(-1.0..1.0);
    }
    let labels = (0..rows).map(|i| i % 4).collect();
    (batch, labels)
}

/// Criterion 1: analytic gradients of both small NFC variants match central
/// finite differences (h = 1e-5, 64-bit) to a relative error below 1e-4,
/// in train and eval mode, in under 30 seconds.
#[test]
fn c1_gradient_correctness() {
    let start = Instant::now();
    let archs = [
        ArchConfig {
            input_len: 16,
            fusion: FusionKind::Cp { rank: 4 },
            hidden: vec![8, 6],
            dropout: 0.3,
            num_classes: 4,
        },
        ArchConfig {
            input_len: 16,
            fusion: FusionKind::Tucker { p: 3, q: 3 },
            hidden: vec![8, 6],
            dropout: 0.3,
            num_classes: 4,
        },
    ];
    for arch in archs {
        let mut model = init_model(&arch, 11).unwrap();
        jitter_params(&mut model, 0.05, 12);
        let (batch, labels) = random_batch(8, 16, 13);
        for mode in [Mode::Train, Mode::Eval] {
            let report = check_model(&model, &batch, &labels, mode, 1e-4).unwrap();
            assert!(
                report.passed,
                "{:?} {mode:?}: max rel error {:.3e}",
                arch.fusion, report.max_rel_error
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "gradient check took {elapsed:?}");
    println!("ACCEPTANCE 1 PASS: gradient correctness (both variants, both modes, {elapsed:?})");
}

/// Criterion 2: with P = Q = R and a diagonal core, Tucker fusion equals CP
/// fusion on the diagonal (zero elsewhere) over 1000 random inputs, and the
/// lambda gradient matches the core-diagonal gradient within 1e-10.
#[test]
fn c2_cp_equals_diagonal_tucker() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let rank = 4usize;
    for _ in 0..1000 {
        let lambda: Vec<f64> = (0..rank).map(|_| rng.random_range(-2.0..2.0)).collect();
        let i1: Vec<f64> = (0..rank).map(|_| rng.random_range(-2.0..2.0)).collect();
        let i2: Vec<f64> = (0..rank).map(|_| rng.random_range(-2.0..2.0)).collect();
        let cp = CpFusion {
            lambda: lambda.clone(),
        };
        let mut core = Mat::zeros(rank, rank);
        for (r, &l) in lambda.iter().enumerate() {
            core.set(r, r, l);
        }
        let tucker = TuckerFusion { core };
        let cp_out = cp.fuse(&i1, &i2).unwrap();
        let tucker_out = tucker.fuse(&i1, &i2).unwrap();
        for p in 0..rank {
            for q in 0..rank {
                let v = tucker_out[p * rank + q];
                if p == q {
                    assert!((v - cp_out[p]).abs() <= 1e-12, "{v} vs {}", cp_out[p]);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }
    // Gradient agreement between a CP model and its diagonal-Tucker twin
    // with matched heads.
    for trial in 0..25u64 {
        let rank = 3usize;
        let input_len = 6usize;
        let cp_arch = ArchConfig {
            input_len,
            fusion: FusionKind::Cp { rank },
            hidden: vec![],
            dropout: 0.0,
            num_classes: 4,
        };
        let mut cp_model = init_model(&cp_arch, 300 + trial).unwrap();
        let lambda: Vec<f64> = {
            let mut r = ChaCha8Rng::seed_from_u64(400 + trial);
            (0..rank).map(|_| r.random_range(-1.5..1.5)).collect()
        };
        cp_model.fusion = Fusion::Cp(CpFusion {
            lambda: lambda.clone(),
        });
        let mut tk_model = diagonal_tucker_twin(input_len, rank, &lambda, &cp_model);
        let (batch, labels) = random_batch(5, input_len, 500 + trial);
        let mut rng_unused = ChaCha8Rng::seed_from_u64(0);
        let (cp_logits, cp_cache) = cp_model
            .forward(&batch, Mode::Eval, &mut rng_unused)
            .unwrap();
        let (tk_logits, tk_cache) = tk_model
            .forward(&batch, Mode::Eval, &mut rng_unused)
            .unwrap();
        assert_eq!(cp_logits, tk_logits, "twin models disagree on logits");
        let (_, dlogits) = softmax_cross_entropy(&cp_logits, &labels).unwrap();
        let cp_grads = cp_model.backward(&cp_cache, &dlogits).unwrap();
        let tk_grads = tk_model.backward(&tk_cache, &dlogits).unwrap();
        let dlambda = match &cp_grads.fusion {
            FusionGrad::Cp(l) => l.clone(),
            _ => unreachable!(),
        };
        let dcore = match &tk_grads.fusion {
            FusionGrad::Tucker(c) => c.clone(),
            _ => unreachable!(),
        };
        for r in 0..rank {
            assert!(
                (dlambda[r] - dcore.get(r, r)).abs() < 1e-10,
                "trial {trial}: lambda grad {r}: {} vs {}",
                dlambda[r],
                dcore.get(r, r)
            );
        }
    }
    println!("ACCEPTANCE 2 PASS: CP fusion equals diagonal Tucker (values and gradients)");
}

/// Builds standardized synthetic segments, `per_class` of each class.
fn synthetic_split(
    per_class: usize,
    test_fraction: f64,
    master_seed: u64,
    window_len: usize,
) -> SplitDataset {
    let mut segments = Vec::new();
    for label in ClassLabel::ALL {
        let mut class_segments = Vec::new();
        let mut rec_index = 0u64;
        while class_segments.len() < per_class {
            let cfg = SynthConfig {
                seed: substream(master_seed, &format!("synth/{}/{rec_index}", label.name())),
                ..SynthConfig::default()
            };
            let rec = generate_synthetic(&cfg, label).unwrap();
            class_segments.extend(window_signal(&rec, window_len, 0.5).unwrap());
            rec_index += 1;
        }
        class_segments.truncate(per_class);
        segments.extend(class_segments);
    }
    let split = stratified_split(&segments, test_fraction, substream(master_seed, "split")).unwrap();
    let standardizer = fit_standardizer(&split.train).unwrap();
    SplitDataset {
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
    }
}

/// Criterion 3: the default CP model drives train accuracy to at least
/// 0.99 on an 80-segment synthetic set within 200 epochs.
#[test]
fn c3_overfit_capacity() {
    let data = synthetic_split(20, 0.0, 33, 1024);
    assert_eq!(data.train.len(), 80);
    let mut model = init_model(&ArchConfig::cp_default(), substream(33, "init")).unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        seed: 33,
        ..TrainConfig::default()
    };
    train(&mut model, &data, &cfg).unwrap();
    let (_, report) = evaluate_model(&model, &data.train, cfg.batch_size).unwrap();
    assert!(
        report.accuracy >= 0.99,
        "train accuracy {} after 200 epochs",
        report.accuracy
    );
    println!(
        "ACCEPTANCE 3 PASS: overfit capacity (train accuracy {:.4})",
        report.accuracy
    );
}

/// Criterion 4: on 400 train / 100 test synthetic segments with the paper
/// protocol (100 epochs, batch 32, lr 1e-4), both variants reach at least
/// 0.90 test accuracy and Tucker does not trail CP by more than 0.05,
/// within 10 minutes.
#[test]
fn c4_synthetic_end_to_end() {
    let start = Instant::now();
    let data = synthetic_split(125, 0.2, 44, 1024);
    assert_eq!(data.train.len(), 400);
    assert_eq!(data.test.len(), 100);
    let cfg = TrainConfig {
        seed: 44,
        ..TrainConfig::default()
    };
    let mut accuracies = Vec::new();
    for arch in [ArchConfig::cp_default(), ArchConfig::tucker_default()] {
        let mut model = init_model(&arch, substream(44, "init")).unwrap();
        train(&mut model, &data, &cfg).unwrap();
        let (_, report) = evaluate_model(&model, &data.test, cfg.batch_size).unwrap();
        accuracies.push(report.accuracy);
    }
    let (cp_acc, tucker_acc) = (accuracies[0], accuracies[1]);
    assert!(cp_acc >= 0.90, "CP test accuracy {cp_acc}");
    assert!(tucker_acc >= 0.90, "Tucker test accuracy {tucker_acc}");
    assert!(
        tucker_acc >= cp_acc - 0.05,
        "Tucker ({tucker_acc}) trails CP ({cp_acc}) by more than 0.05"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 600, "end-to-end took {elapsed:?}");
    println!(
        "ACCEPTANCE 4 PASS: synthetic end-to-end (CP {cp_acc:.4}, Tucker {tucker_acc:.4}, {elapsed:?})"
    );
}

/// Criterion 5: the window-count formula is exact against brute-force
/// offset enumeration on 10^4 random cases, and stratified splits hit the
/// per-class rounding rule exactly.
#[test]
fn c5_pipeline_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut checked = 0usize;
    while checked < 10_000 {
        let n = rng.random_range(1usize..2000);
        let window = rng.random_range(1usize..800);
        let overlap = rng.random_range(0.0..0.95);
        let stride = (window as f64 * (1.0 - overlap)).round() as usize;
        let rec = nfc_core::signal::RawRecording::new(
            (0..n).map(|i| i as f64).collect(),
            1.0,
            ClassLabel::Normal,
        )
        .unwrap();
        let result = window_signal(&rec, window, overlap);
        if stride == 0 {
            assert!(result.is_err());
            continue;
        }
        let segments = result.unwrap();
        // Brute force: enumerate stride-aligned offsets that fit.
        let mut expected = 0usize;
        let mut offset = 0usize;
        while offset + window <= n {
            expected += 1;
            offset += stride;
        }
        assert_eq!(segments.len(), expected, "n={n} w={window} s={stride}");
        if n >= window {
            assert_eq!(segments.len(), (n - window) / stride + 1);
        }
        checked += 1;
    }
    for trial in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5500 + trial);
        let counts: Vec<usize> = (0..4).map(|_| rng.random_range(1usize..60)).collect();
        let fraction = rng.random_range(0.0..0.9);
        let mut segments = Vec::new();
        for (ci, &count) in counts.iter().enumerate() {
            for i in 0..count {
                segments.push(SignalSegment {
                    values: vec![ci as f64, i as f64],
                    label: ClassLabel::ALL[ci],
                });
            }
        }
        let split = stratified_split(&segments, fraction, trial).unwrap();
        for (ci, &count) in counts.iter().enumerate() {
            let expected = (count as f64 * fraction).round() as usize;
            let actual = split
                .test
                .iter()
                .filter(|s| s.label == ClassLabel::ALL[ci])
                .count();
            assert_eq!(actual, expected, "trial {trial} class {ci}");
        }
    }
    println!("ACCEPTANCE 5 PASS: pipeline arithmetic (10^4 window cases, 10^3 splits)");
}

/// Criterion 6: evaluate() reproduces hand-computed metrics on fixed
/// confusion matrices to 1e-12, and weighted recall equals accuracy on
/// 10^3 random matrices.
#[test]
fn c6_metric_oracle() {
    // (matrix, C, accuracy, weighted precision, weighted recall, weighted f1)
    let fixtures: [(Vec<u64>, usize, [f64; 4]); 6] = [
        (
            vec![1, 1, 0, 2],
            2,
            [0.75, 5.0 / 6.0, 0.75, 0.5 * (2.0 / 3.0) + 0.5 * 0.8],
        ),
        (
            vec![3, 0, 0, 0, 0, 5, 0, 0, 0, 0, 2, 0, 0, 0, 0, 7],
            4,
            [1.0, 1.0, 1.0, 1.0],
        ),
        (
            vec![5, 2, 0, 1, 3, 1, 0, 2, 6],
            3,
            [0.7, 89.0 / 120.0, 0.7, 1857.0 / 2600.0],
        ),
        (
            vec![1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0],
            4,
            [0.25, 1.0 / 16.0, 0.25, 0.1],
        ),
        (vec![0, 2, 2, 0], 2, [0.0, 0.0, 0.0, 0.0]),
        (vec![2, 0, 0, 0], 2, [1.0, 1.0, 1.0, 1.0]),
    ];
    for (counts, c, expected) in fixtures {
        let cm = ConfusionMatrix::from_counts(c, counts).unwrap();
        let r = evaluate(&cm).unwrap();
        assert!((r.accuracy - expected[0]).abs() < 1e-12, "accuracy");
        assert!((r.precision - expected[1]).abs() < 1e-12, "precision");
        assert!((r.recall - expected[2]).abs() < 1e-12, "recall");
        assert!((r.f1 - expected[3]).abs() < 1e-12, "f1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut checked = 0usize;
    while checked < 1000 {
        let c = rng.random_range(2usize..6);
        let counts: Vec<u64> = (0..c * c).map(|_| rng.random_range(0..25)).collect();
        if counts.iter().sum::<u64>() == 0 {
            continue;
        }
        let cm = ConfusionMatrix::from_counts(c, counts).unwrap();
        let r = evaluate(&cm).unwrap();
        assert!(
            (r.recall - r.accuracy).abs() < 1e-12,
            "weighted recall {} vs accuracy {}",
            r.recall,
            r.accuracy
        );
        checked += 1;
    }
    println!("ACCEPTANCE 6 PASS: metric oracle (6 hand fixtures, 10^3 identity checks)");
}

/// Criterion 7: two `train` command runs with the same config produce
/// byte-identical history CSVs and checkpoints.
#[test]
fn c7_training_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg: RunConfig = serde_json::from_str(
        r#"{
            "seed": 77,
            "synth": {"duration": 0.25},
            "data": {"recordings_per_class": 2, "window_len": 256},
            "arch": {"fusion": {"kind": "tucker", "p": 4, "q": 4}, "hidden": [16, 8], "dropout": 0.2},
            "train": {"epochs": 6, "batch_size": 16}
        }"#,
    )
    .unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let a = cmd_train(&cfg, &out_a).unwrap();
    let b = cmd_train(&cfg, &out_b).unwrap();
    let history_a = std::fs::read(&a.history_path).unwrap();
    let history_b = std::fs::read(&b.history_path).unwrap();
    assert_eq!(history_a, history_b, "history CSVs differ");
    let ckpt_a = std::fs::read(&a.checkpoint_path).unwrap();
    let ckpt_b = std::fs::read(&b.checkpoint_path).unwrap();
    assert_eq!(ckpt_a, ckpt_b, "checkpoints differ");
    println!(
        "ACCEPTANCE 7 PASS: determinism ({} byte history, {} byte checkpoint, byte-identical)",
        history_a.len(),
        ckpt_a.len()
    );
}

/// Criterion 8: uniform-logit cross-entropy equals ln 4 within 1e-12, and
/// the scheduler halves the rate exactly at the 11th non-improving epoch.
#[test]
fn c8_loss_and_scheduler_sanity() {
    let logits = Mat::zeros(8, 4);
    let labels: Vec<usize> = (0..8).map(|i| i % 4).collect();
    let (loss, _) = softmax_cross_entropy(&logits, &labels).unwrap();
    assert!((loss - 4.0f64.ln()).abs() < 1e-12, "uniform loss {loss}");
    let mut scheduler = SchedulerState::new(1e-4, SchedulerConfig::default());
    scheduler.step(1.0); // establishes the best value
    for epoch in 1..=10 {
        let lr = scheduler.step(1.0);
        assert_eq!(lr, 1e-4, "lr reduced early, at non-improving epoch {epoch}");
    }
    let lr = scheduler.step(1.0); // 11th non-improving epoch
    assert_eq!(lr, 5e-5, "lr not halved at the 11th non-improving epoch");
    println!("ACCEPTANCE 8 PASS: loss equals ln(4); scheduler halves at epoch 11");
}

/// Criterion 9: logistic regression separates the toy fixture perfectly,
/// and with l2 > 0 two seeds converge to final losses within 1e-4.
#[test]
fn c9_baseline_sanity() {
    use nfc_core::baselines::{logistic_loss_grad, predict, train_logistic};
    // Gaussian blobs on distinct hypercube corners, 12 features.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in 0..4usize {
        for _ in 0..25 {
            let mut row = vec![0.0; 12];
            for (j, v) in row.iter_mut().enumerate() {
                let center = if (class >> (j % 2)) & 1 == 1 { 3.0 } else { -3.0 };
                *v = center + rng.random_range(-0.5..0.5);
            }
            rows.push(row);
            labels.push(class);
        }
    }
    let features = Mat::from_rows(&rows).unwrap();
    let cfg_for = |seed: u64| TrainConfig {
        learning_rate: 0.05,
        epochs: 3000,
        seed,
        ..TrainConfig::default()
    };
    let clf = train_logistic(&features, &labels, 0.0, &cfg_for(1)).unwrap();
    let preds = predict(&clf, &features).unwrap();
    let report = evaluate(&confusion(&labels, &preds, 4).unwrap()).unwrap();
    assert_eq!(report.accuracy, 1.0, "separable fixture not separated");
    let a = train_logistic(&features, &labels, 0.01, &cfg_for(2)).unwrap();
    let b = train_logistic(&features, &labels, 0.01, &cfg_for(777)).unwrap();
    let (loss_a, _, _) = logistic_loss_grad(&a, &features, &labels).unwrap();
    let (loss_b, _, _) = logistic_loss_grad(&b, &features, &labels).unwrap();
    assert!(
        (loss_a - loss_b).abs() < 1e-4,
        "convex runs ended at {loss_a} vs {loss_b}"
    );
    println!(
        "ACCEPTANCE 9 PASS: baseline sanity (accuracy 1.0, loss gap {:.2e})",
        (loss_a - loss_b).abs()
    );
}

/// Diagonal-Tucker twin of a headless CP model: shared embeddings, core
/// `diag(lambda)`, and head weights that live only on the diagonal fused
/// positions.
fn diagonal_tucker_twin(
    input_len: usize,
    rank: usize,
    lambda: &[f64],
    cp_model: &NfcModel,
) -> NfcModel {
    let arch = ArchConfig {
        input_len,
        fusion: FusionKind::Tucker { p: rank, q: rank },
        hidden: vec![],
        dropout: 0.0,
        num_classes: 4,
    };
    let mut model = init_model(&arch, 0).unwrap();
    model.embeddings = cp_model.embeddings.clone();
    let mut core = Mat::zeros(rank, rank);
    for (r, &l) in lambda.iter().enumerate() {
        core.set(r, r, l);
    }
    model.fusion = Fusion::Tucker(TuckerFusion { core });
    let mut w = Mat::zeros(4, rank * rank);
    for c in 0..4 {
        for r in 0..rank {
            w.set(c, r * rank + r, cp_model.output.w.get(c, r));
        }
    }
    model.output.w = w;
    model.output.b = cp_model.output.b.clone();
    model
}
