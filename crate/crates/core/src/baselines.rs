//! Feature-space reference classifiers: multinomial logistic regression
//! with L2 regularization and a plain ReLU multilayer perceptron with
//! hidden widths (128, 64, 32).
//!
//! Both train on the 12 time-domain features through the same Adam
//! machinery as the main models. The logistic model is optimized with Adam
//! rather than a quasi-Newton method; its loss is convex, so the optimizer
//! choice does not change the solution up to tolerance.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NfcError, Result};
use crate::mat::Mat;
use crate::metrics::{confusion, evaluate};
use crate::model::{affine_backward, affine_forward, relu, Affine};
use crate::seed::substream;
use crate::train::{argmax, softmax_cross_entropy, AdamState, EpochRecord, SchedulerState, TrainConfig, TrainHistory};

pub const NUM_CLASSES: usize = 4;

/// Multinomial logistic regression over the feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    /// `num_classes x num_features` weights.
    pub w: Mat,
    pub b: Vec<f64>,
    pub l2_strength: f64,
}

impl LinearClassifier {
    pub fn zeros(num_classes: usize, num_features: usize, l2_strength: f64) -> Self {
        Self {
            w: Mat::zeros(num_classes, num_features),
            b: vec![0.0; num_classes],
            l2_strength,
        }
    }

    pub fn logits(&self, features: &Mat) -> Result<Mat> {
        if features.cols() != self.w.cols() {
            return Err(NfcError::Shape(format!(
                "classifier expects {} features, got {}",
                self.w.cols(),
                features.cols()
            )));
        }
        let layer = Affine {
            w: self.w.clone(),
            b: self.b.clone(),
        };
        affine_forward(features, &layer)
    }

    /// Softmax class probabilities per row.
    pub fn probabilities(&self, features: &Mat) -> Result<Mat> {
        let logits = self.logits(features)?;
        let mut out = Mat::zeros(logits.rows(), logits.cols());
        for r in 0..logits.rows() {
            let row = logits.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for &v in row {
                sum += (v - max).exp();
            }
            for (c, &v) in row.iter().enumerate() {
                out.set(r, c, (v - max).exp() / sum);
            }
        }
        Ok(out)
    }
}

/// Regularized loss and gradients: mean cross-entropy plus
/// `l2/2 * ||W||^2`; `dW = (softmax - onehot)^T X / n + l2 * W`.
pub fn logistic_loss_grad(
    clf: &LinearClassifier,
    features: &Mat,
    labels: &[usize],
) -> Result<(f64, Mat, Vec<f64>)> {
    let logits = clf.logits(features)?;
    let (ce, dlogits) = softmax_cross_entropy(&logits, labels)?;
    let layer = Affine {
        w: clf.w.clone(),
        b: clf.b.clone(),
    };
    let (mut dw, db, _) = affine_backward(features, &layer, &dlogits)?;
    let mut penalty = 0.0;
    if clf.l2_strength > 0.0 {
        for (g, &w) in dw.as_mut_slice().iter_mut().zip(clf.w.as_slice()) {
            *g += clf.l2_strength * w;
            penalty += w * w;
        }
    }
    Ok((ce + 0.5 * clf.l2_strength * penalty, dw, db))
}

/// Fits logistic regression by full-batch Adam steps (with the plateau
/// scheduler decaying the step size) until the gradient norm drops below
/// 1e-6 or `cfg.epochs` steps have run. Weights start from a small seeded
/// uniform so distinct seeds take distinct paths to the (unique, for
/// l2 > 0) optimum.
pub fn train_logistic(
    features: &Mat,
    labels: &[usize],
    l2_strength: f64,
    cfg: &TrainConfig,
) -> Result<LinearClassifier> {
    if features.rows() == 0 {
        return Err(NfcError::Parameter("no training rows".into()));
    }
    if features.rows() != labels.len() {
        return Err(NfcError::Shape(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if l2_strength < 0.0 {
        return Err(NfcError::Parameter("l2_strength must be >= 0".into()));
    }
    let mut clf = LinearClassifier::zeros(NUM_CLASSES, features.cols(), l2_strength);
    let mut rng = ChaCha8Rng::seed_from_u64(substream(cfg.seed, "logistic-init"));
    for v in clf.w.as_mut_slice() {
        *v = rng.random_range(-0.01..0.01);
    }
    let mut adam = {
        let tensors = vec![
            ("w".to_string(), clf.w.as_slice()),
            ("b".to_string(), clf.b.as_slice()),
        ];
        AdamState::new(&tensors, cfg.adam)
    };
    let mut scheduler = SchedulerState::new(cfg.learning_rate, cfg.scheduler);
    for _ in 0..cfg.epochs {
        let lr = scheduler.lr();
        let (loss, dw, db) = logistic_loss_grad(&clf, features, labels)?;
        let norm = dw
            .as_slice()
            .iter()
            .chain(db.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        if norm < 1e-6 {
            break;
        }
        let grads = vec![("w".to_string(), dw.as_slice()), ("b".to_string(), db.as_slice())];
        let mut params = vec![
            ("w".to_string(), clf.w.as_mut_slice()),
            ("b".to_string(), clf.b.as_mut_slice()),
        ];
        adam.step(&mut params, &grads, lr)?;
        scheduler.step(loss);
    }
    Ok(clf)
}

/// Argmax class prediction; ties break toward the lowest class index.
pub fn predict(clf: &LinearClassifier, features: &Mat) -> Result<Vec<usize>> {
    let logits = clf.logits(features)?;
    Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
}

/// Plain affine + ReLU multilayer perceptron over the feature vector.
/// No batch normalization or dropout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpBaseline {
    pub hidden: Vec<Affine>,
    pub output: Affine,
}

/// Gradients mirroring [`MlpBaseline`].
#[derive(Clone, Debug)]
pub struct MlpGradients {
    pub hidden: Vec<(Mat, Vec<f64>)>,
    pub output: (Mat, Vec<f64>),
}

impl MlpBaseline {
    /// Glorot-uniform initialization, deterministic per seed.
    pub fn init(input_dim: usize, hidden: &[usize], num_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len());
        let mut in_dim = input_dim;
        let make = |in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng| {
            let mut layer = Affine::zeros(in_dim, out_dim);
            let s = (6.0 / (in_dim + out_dim) as f64).sqrt();
            for v in layer.w.as_mut_slice() {
                *v = rng.random_range(-s..s);
            }
            layer
        };
        for &width in hidden {
            layers.push(make(in_dim, width, &mut rng));
            in_dim = width;
        }
        let output = make(in_dim, num_classes, &mut rng);
        Self {
            hidden: layers,
            output,
        }
    }

    /// Forward pass; returns logits plus each layer's input for backward.
    pub fn forward(&self, features: &Mat) -> Result<(Mat, Vec<Mat>)> {
        let mut inputs = Vec::with_capacity(self.hidden.len() + 1);
        let mut h = features.clone();
        for layer in &self.hidden {
            inputs.push(h.clone());
            let mut z = affine_forward(&h, layer)?;
            for v in z.as_mut_slice() {
                *v = relu(*v);
            }
            h = z;
        }
        inputs.push(h.clone());
        let logits = affine_forward(&h, &self.output)?;
        Ok((logits, inputs))
    }

    pub fn backward(&self, inputs: &[Mat], dlogits: &Mat) -> Result<MlpGradients> {
        if inputs.len() != self.hidden.len() + 1 {
            return Err(NfcError::State(format!(
                "{} cached inputs for {} layers",
                inputs.len(),
                self.hidden.len() + 1
            )));
        }
        let (dw_out, db_out, mut dh) =
            affine_backward(&inputs[self.hidden.len()], &self.output, dlogits)?;
        let mut hidden_grads = vec![(Mat::zeros(0, 0), Vec::new()); self.hidden.len()];
        for i in (0..self.hidden.len()).rev() {
            // ReLU backward: the layer's post-activation is the next input.
            let post = &inputs[i + 1];
            for r in 0..dh.rows() {
                for c in 0..dh.cols() {
                    if post.get(r, c) <= 0.0 {
                        dh.set(r, c, 0.0);
                    }
                }
            }
            let (dw, db, dx) = affine_backward(&inputs[i], &self.hidden[i], &dh)?;
            hidden_grads[i] = (dw, db);
            dh = dx;
        }
        Ok(MlpGradients {
            hidden: hidden_grads,
            output: (dw_out, db_out),
        })
    }

    pub fn predict(&self, features: &Mat) -> Result<Vec<usize>> {
        let (logits, _) = self.forward(features)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }

    fn param_tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (i, layer) in self.hidden.iter().enumerate() {
            out.push((format!("hidden{i}.w"), layer.w.as_slice()));
            out.push((format!("hidden{i}.b"), layer.b.as_slice()));
        }
        out.push(("output.w".into(), self.output.w.as_slice()));
        out.push(("output.b".into(), self.output.b.as_slice()));
        out
    }

    fn param_tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let MlpBaseline { hidden, output } = self;
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (i, layer) in hidden.iter_mut().enumerate() {
            out.push((format!("hidden{i}.w"), layer.w.as_mut_slice()));
            out.push((format!("hidden{i}.b"), layer.b.as_mut_slice()));
        }
        out.push(("output.w".into(), output.w.as_mut_slice()));
        out.push(("output.b".into(), output.b.as_mut_slice()));
        out
    }
}

/// Default hidden widths of the MLP baseline.
pub const MLP_HIDDEN: [usize; 3] = [128, 64, 32];

/// Trains the MLP baseline with the same protocol as the main training
/// loop: seeded epoch shuffles, minibatches (trailing batches below 2
/// dropped for parity), Adam updates, scheduler on the monitored loss.
/// With no holdout in the signature, epoch metrics and the monitored loss
/// read the training features.
pub fn train_mlp_baseline(
    features: &Mat,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(MlpBaseline, TrainHistory)> {
    cfg.validate()?;
    if features.rows() == 0 {
        return Err(NfcError::Parameter("no training rows".into()));
    }
    if features.rows() != labels.len() {
        return Err(NfcError::Shape(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let mut model = MlpBaseline::init(
        features.cols(),
        &MLP_HIDDEN,
        NUM_CLASSES,
        substream(cfg.seed, "init"),
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(substream(cfg.seed, "shuffle"));
    let mut adam = AdamState::new(&model.param_tensors(), cfg.adam);
    let mut scheduler = SchedulerState::new(cfg.learning_rate, cfg.scheduler);
    let mut history = TrainHistory::default();
    let mut indices: Vec<usize> = (0..features.rows()).collect();
    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        let lr = scheduler.lr();
        indices.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in indices.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                break;
            }
            let mut batch = Mat::zeros(chunk.len(), features.cols());
            let mut batch_labels = Vec::with_capacity(chunk.len());
            for (r, &i) in chunk.iter().enumerate() {
                batch.row_mut(r).copy_from_slice(features.row(i));
                batch_labels.push(labels[i]);
            }
            let (logits, inputs) = model.forward(&batch)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &batch_labels)?;
            let grads = model.backward(&inputs, &dlogits)?;
            {
                let grad_tensors: Vec<(String, &[f64])> = {
                    let mut out: Vec<(String, &[f64])> = Vec::new();
                    for (i, (w, b)) in grads.hidden.iter().enumerate() {
                        out.push((format!("hidden{i}.w"), w.as_slice()));
                        out.push((format!("hidden{i}.b"), b.as_slice()));
                    }
                    out.push(("output.w".into(), grads.output.0.as_slice()));
                    out.push(("output.b".into(), grads.output.1.as_slice()));
                    out
                };
                let mut params = model.param_tensors_mut();
                adam.step(&mut params, &grad_tensors, lr)?;
            }
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_loss = if seen > 0 { loss_sum / seen as f64 } else { 0.0 };
        let (logits, _) = model.forward(features)?;
        let (monitored, _) = softmax_cross_entropy(&logits, labels)?;
        let preds: Vec<usize> = (0..logits.rows()).map(|r| argmax(logits.row(r))).collect();
        let report = evaluate(&confusion(labels, &preds, NUM_CLASSES)?)?;
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
    Ok((model, history))
}
