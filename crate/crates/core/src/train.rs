//! Loss, optimizer, scheduler, and the epoch loop.
//!
//! The protocol: Adam at an initial learning rate of 1e-4, batch size 32,
//! 100 epochs, with a reduce-on-plateau scheduler monitoring the held-out
//! loss. All randomness (epoch shuffles, dropout) derives from the config
//! seed through named substreams, so training is bit-reproducible.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NfcError, Result};
use crate::mat::Mat;
use crate::metrics::{confusion, evaluate, EvalReport};
use crate::model::{GradientSet, Mode, NfcModel};
use crate::seed::substream;
use crate::signal::{SignalSegment, SplitDataset};

/// Minimum improvement of the monitored value that counts as progress.
const PLATEAU_THRESHOLD: f64 = 1e-8;

/// Adam moment hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Reduce-on-plateau scheduler hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    pub factor: f64,
    pub patience: u32,
    pub min_lr: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience: 10,
            min_lr: 1e-6,
        }
    }
}

/// Full training configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub scheduler: SchedulerConfig,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 100,
            scheduler: SchedulerConfig::default(),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(NfcError::Parameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 2 {
            return Err(NfcError::Parameter(
                "batch size must be at least 2 (train-mode batch normalization)".into(),
            ));
        }
        if !(self.scheduler.factor > 0.0 && self.scheduler.factor < 1.0) {
            return Err(NfcError::Parameter(format!(
                "scheduler factor must be in (0, 1), got {}",
                self.scheduler.factor
            )));
        }
        Ok(())
    }
}

/// Mean cross-entropy over the batch with max-subtracted softmax, plus the
/// logit gradient `(softmax - onehot) / B`.
pub fn softmax_cross_entropy(logits: &Mat, labels: &[usize]) -> Result<(f64, Mat)> {
    let b = logits.rows();
    let c = logits.cols();
    if labels.len() != b {
        return Err(NfcError::Data(format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    let mut dlogits = Mat::zeros(b, c);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(NfcError::Data(format!(
                "label {label} out of range for {c} classes"
            )));
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum_exp = 0.0;
        for &v in row {
            sum_exp += (v - max).exp();
        }
        let log_sum_exp = sum_exp.ln();
        loss += -(row[label] - max - log_sum_exp);
        let drow = dlogits.row_mut(r);
        for (j, &v) in row.iter().enumerate() {
            let softmax = (v - max).exp() / sum_exp;
            drow[j] = (softmax - if j == label { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    Ok((loss / b as f64, dlogits))
}

/// Adam optimizer state: first/second moment tensors mirroring the
/// parameter tensors, plus the step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    names: Vec<String>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub t: u64,
    cfg: AdamConfig,
}

impl AdamState {
    /// Zero-initialized state mirroring the given parameter tensors.
    pub fn new(tensors: &[(String, &[f64])], cfg: AdamConfig) -> Self {
        Self {
            names: tensors.iter().map(|(n, _)| n.clone()).collect(),
            m: tensors.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
            v: tensors.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
            t: 0,
            cfg,
        }
    }

    /// One Adam update over paired (parameter, gradient) tensor lists:
    /// `theta -= lr * m_hat / (sqrt(v_hat) + eps)` with bias-corrected
    /// moments.
    pub fn step(
        &mut self,
        params: &mut [(String, &mut [f64])],
        grads: &[(String, &[f64])],
        lr: f64,
    ) -> Result<()> {
        if params.len() != self.names.len() || grads.len() != self.names.len() {
            return Err(NfcError::State(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.names.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bias1 = 1.0 - b1.powi(self.t as i32);
        let bias2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..self.names.len() {
            let (pname, theta) = &mut params[i];
            let (gname, g) = &grads[i];
            if *pname != self.names[i] || *gname != self.names[i] {
                return Err(NfcError::State(format!(
                    "tensor order mismatch at {i}: state {:?}, params {:?}, grads {:?}",
                    self.names[i], pname, gname
                )));
            }
            if theta.len() != g.len() || theta.len() != self.m[i].len() {
                return Err(NfcError::State(format!(
                    "tensor {} shape changed under the optimizer",
                    self.names[i]
                )));
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..theta.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                theta[j] -= lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam update to a model from a [`GradientSet`].
pub fn adam_step(
    state: &mut AdamState,
    model: &mut NfcModel,
    grads: &GradientSet,
    lr: f64,
) -> Result<()> {
    let mut params = model.param_tensors_mut();
    state.step(&mut params, &grads.tensors(), lr)
}

/// Reduce-on-plateau state. The learning rate halves (by `factor`) once the
/// monitored value fails to improve for more than `patience` consecutive
/// steps, never dropping below `min_lr`.
#[derive(Clone, Copy, Debug)]
pub struct SchedulerState {
    lr: f64,
    best: f64,
    bad_epochs: u32,
    cfg: SchedulerConfig,
}

impl SchedulerState {
    pub fn new(initial_lr: f64, cfg: SchedulerConfig) -> Self {
        Self {
            lr: initial_lr,
            best: f64::INFINITY,
            bad_epochs: 0,
            cfg,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one monitored value (lower is better); returns the learning
    /// rate to use next.
    pub fn step(&mut self, monitored: f64) -> f64 {
        if monitored < self.best - PLATEAU_THRESHOLD {
            self.best = monitored;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs > self.cfg.patience {
                self.lr = (self.lr * self.cfg.factor).max(self.cfg.min_lr);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub lr: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-epoch records of train loss, learning rate, and held-out metrics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,lr,accuracy,precision,recall,f1\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.lr, r.accuracy, r.precision, r.recall, r.f1
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Stacks segments (by index) into a batch matrix.
fn batch_matrix(segments: &[SignalSegment], idx: &[usize], input_len: usize) -> Result<Mat> {
    let mut out = Mat::zeros(idx.len(), input_len);
    for (r, &i) in idx.iter().enumerate() {
        let seg = &segments[i];
        if seg.values.len() != input_len {
            return Err(NfcError::Shape(format!(
                "segment {i} has length {}, model expects {input_len}",
                seg.values.len()
            )));
        }
        out.row_mut(r).copy_from_slice(&seg.values);
    }
    Ok(out)
}

/// Eval-mode loss, predictions, and metrics over a segment list.
pub fn evaluate_model(
    model: &NfcModel,
    segments: &[SignalSegment],
    batch_size: usize,
) -> Result<(f64, EvalReport)> {
    if segments.is_empty() {
        return Err(NfcError::Parameter("cannot evaluate an empty set".into()));
    }
    let input_len = model.input_len();
    let mut y_true = Vec::with_capacity(segments.len());
    let mut y_pred = Vec::with_capacity(segments.len());
    let mut loss_sum = 0.0;
    let all: Vec<usize> = (0..segments.len()).collect();
    for chunk in all.chunks(batch_size.max(1)) {
        let batch = batch_matrix(segments, chunk, input_len)?;
        let labels: Vec<usize> = chunk.iter().map(|&i| segments[i].label.index()).collect();
        let logits = model.forward_eval(&batch)?;
        let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
        loss_sum += loss * chunk.len() as f64;
        for r in 0..logits.rows() {
            y_pred.push(argmax(logits.row(r)));
            y_true.push(labels[r]);
        }
    }
    let cm = confusion(&y_true, &y_pred, model.num_classes())?;
    let report = evaluate(&cm)?;
    Ok((loss_sum / segments.len() as f64, report))
}

/// Index of the largest value; ties break toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Runs the full training protocol on a split dataset.
///
/// Each epoch: seeded shuffle of the train set, minibatch
/// forward/backward/Adam updates (a trailing batch smaller than 2 is
/// dropped), eval-mode metrics on the test set, then a scheduler step on
/// the test loss. When the test set is empty the train set stands in for
/// both the metrics and the monitored loss. The recorded `lr` is the rate
/// used for that epoch's updates.
pub fn train(model: &mut NfcModel, data: &SplitDataset, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(NfcError::Parameter("training set is empty".into()));
    }
    let input_len = model.input_len();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(substream(cfg.seed, "shuffle"));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(substream(cfg.seed, "dropout"));
    let mut adam = AdamState::new(&model.param_tensors(), cfg.adam);
    let mut scheduler = SchedulerState::new(cfg.learning_rate, cfg.scheduler);
    let mut history = TrainHistory::default();
    let eval_set: &[SignalSegment] = if data.test.is_empty() {
        &data.train
    } else {
        &data.test
    };
    let mut indices: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = scheduler.lr();
        indices.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in indices.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                break;
            }
            let batch = batch_matrix(&data.train, chunk, input_len)?;
            let labels: Vec<usize> =
                chunk.iter().map(|&i| data.train[i].label.index()).collect();
            let (logits, cache) = model.forward(&batch, Mode::Train, &mut dropout_rng)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
            let grads = model.backward(&cache, &dlogits)?;
            adam_step(&mut adam, model, &grads, lr)?;
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = if seen > 0 { loss_sum / seen as f64 } else { 0.0 };
        let (monitored, report) = evaluate_model(model, eval_set, cfg.batch_size)?;
        scheduler.step(monitored);
        history.records.push(EpochRecord {
            epoch,
            train_loss,
            lr,
            accuracy: report.accuracy,
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
        });
    }
    Ok(history)
}
