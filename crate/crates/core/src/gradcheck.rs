//! Independent finite-difference oracle for every analytic gradient.
//!
//! The checker perturbs each scalar parameter by +/- h and differences the
//! loss; it never touches the analytic backward path, so agreement between
//! the two is real evidence. All checking runs in 64-bit floats with
//! h = 1e-5 and a relative tolerance of 1e-4.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NfcError, Result};
use crate::mat::Mat;
use crate::model::{GradientSet, Mode, NfcModel};
use crate::train::softmax_cross_entropy;

/// Central-difference step used by [`check_model`].
pub const CHECK_STEP: f64 = 1e-5;
/// Models above this size are rejected: the oracle costs two forward
/// passes per scalar parameter.
const MAX_CHECK_PARAMS: usize = 20_000;

/// Per-tensor outcome of a gradient comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
}

/// Result of comparing analytic gradients against the finite-difference
/// oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    /// The tensor with the largest relative error.
    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    /// Aligned text listing every parameter tensor.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<16} {:>14}\n", "tensor", "max rel error"));
        for t in &self.tensors {
            out.push_str(&format!("{:<16} {:>14.3e}\n", t.name, t.max_rel_error));
        }
        out.push_str(&format!(
            "global max {:.3e} vs tolerance {:.1e}: {}\n",
            self.max_rel_error,
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" }
        ));
        out
    }
}

/// Central finite differences of `loss_fn` with respect to every model
/// parameter: `(f(theta + h) - f(theta - h)) / (2h)`.
///
/// `loss_fn` must be deterministic (eval mode, or train mode with a frozen
/// dropout mask).
pub fn finite_diff<F>(loss_fn: F, model: &NfcModel, step: f64) -> Result<GradientSet>
where
    F: Fn(&NfcModel) -> Result<f64>,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(NfcError::Parameter(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let mut work = model.clone();
    let mut grads = GradientSet::zeros_like(model);
    let n_tensors = model.param_tensors().len();
    for ti in 0..n_tensors {
        let len = model.param_tensors()[ti].1.len();
        for i in 0..len {
            let orig = work.param_tensors()[ti].1[i];
            work.param_tensors_mut()[ti].1[i] = orig + step;
            let loss_plus = loss_fn(&work)?;
            work.param_tensors_mut()[ti].1[i] = orig - step;
            let loss_minus = loss_fn(&work)?;
            work.param_tensors_mut()[ti].1[i] = orig;
            if !loss_plus.is_finite() || !loss_minus.is_finite() {
                return Err(NfcError::Numeric(format!(
                    "non-finite loss while perturbing {}[{}]",
                    model.param_tensors()[ti].0,
                    i
                )));
            }
            grads.tensors_mut()[ti].1[i] = (loss_plus - loss_minus) / (2.0 * step);
        }
    }
    Ok(grads)
}

/// Relative error `|a - b| / max(|a|, |b|, 1e-8)`.
fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Adds seeded uniform noise to every parameter tensor.
///
/// A freshly initialized model sits exactly on ReLU kinks (zero biases can
/// make whole pre-activation rows exactly zero), where central differences
/// and the subgradient convention legitimately disagree. Checking at a
/// jittered, generic point avoids those measure-zero configurations.
pub fn jitter_params(model: &mut NfcModel, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, tensor) in model.param_tensors_mut() {
        for v in tensor {
            *v += rng.random_range(-scale..scale);
        }
    }
}

/// Compares two gradient sets tensor by tensor.
pub fn compare_gradients(
    analytic: &GradientSet,
    numeric: &GradientSet,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let a = analytic.tensors();
    let n = numeric.tensors();
    if a.len() != n.len() {
        return Err(NfcError::State(format!(
            "gradient sets have {} vs {} tensors",
            a.len(),
            n.len()
        )));
    }
    let mut tensors = Vec::with_capacity(a.len());
    let mut global = 0.0f64;
    for ((an, av), (nn, nv)) in a.iter().zip(n.iter()) {
        if an != nn || av.len() != nv.len() {
            return Err(NfcError::State(format!(
                "gradient tensor mismatch: {an:?} ({}) vs {nn:?} ({})",
                av.len(),
                nv.len()
            )));
        }
        let mut worst = 0.0f64;
        for (&x, &y) in av.iter().zip(nv.iter()) {
            worst = worst.max(rel_error(x, y));
        }
        global = global.max(worst);
        tensors.push(TensorCheck {
            name: an.clone(),
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport {
        tensors,
        max_rel_error: global,
        tolerance,
        passed: global < tolerance,
    })
}

/// Checks the model's analytic backward pass against the finite-difference
/// oracle on one batch, through the cross-entropy loss.
///
/// In train mode one dropout mask per block is frozen up front so the loss
/// is a deterministic function of the parameters; batch statistics are
/// recomputed inside the loss, so the batchnorm backward is checked too.
pub fn check_model(
    model: &NfcModel,
    batch: &Mat,
    labels: &[usize],
    mode: Mode,
    tolerance: f64,
) -> Result<GradCheckReport> {
    if model.num_params() > MAX_CHECK_PARAMS {
        return Err(NfcError::Parameter(format!(
            "model has {} parameters; the finite-difference oracle is only \
             tractable for small models (limit {MAX_CHECK_PARAMS})",
            model.num_params()
        )));
    }
    let masks: Option<Vec<Mat>> = match mode {
        Mode::Train => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x6e66_637f);
            Some(
                model
                    .blocks
                    .iter()
                    .map(|blk| blk.sample_mask(batch.rows(), &mut rng))
                    .collect(),
            )
        }
        Mode::Eval => None,
    };
    let analytic = {
        let mut work = model.clone();
        let (logits, cache) = work.forward_with_masks(batch, mode, masks.clone())?;
        let (_, dlogits) = softmax_cross_entropy(&logits, labels)?;
        work.backward(&cache, &dlogits)?
    };
    let labels_owned = labels.to_vec();
    let loss_fn = |m: &NfcModel| -> Result<f64> {
        let mut work = m.clone();
        let (logits, _) = work.forward_with_masks(batch, mode, masks.clone())?;
        Ok(softmax_cross_entropy(&logits, &labels_owned)?.0)
    };
    let numeric = finite_diff(loss_fn, model, CHECK_STEP)?;
    compare_gradients(&analytic, &numeric, tolerance)
}
