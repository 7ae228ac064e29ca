//! The NFC model family: learnable mode embeddings, CP or Tucker feature
//! fusion, and a batch-normalized dense classification head.
//!
//! Forward passes cache everything the hand-derived backward passes need.
//! Analytic gradients are validated against central finite differences by
//! the `gradcheck` module.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NfcError, Result};
use crate::mat::Mat;

pub const BN_EPS: f64 = 1e-5;
/// Running statistics update: `new = (1 - momentum) * old + momentum * batch`.
pub const BN_MOMENTUM: f64 = 0.1;

/// Forward-pass mode. Train normalizes by batch statistics and samples
/// dropout; eval normalizes by running statistics with dropout disabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Fusion flavor with its dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FusionKind {
    Cp { rank: usize },
    Tucker { p: usize, q: usize },
}

impl FusionKind {
    /// Output sizes of the two mode embeddings.
    pub fn mode_dims(&self) -> (usize, usize) {
        match *self {
            FusionKind::Cp { rank } => (rank, rank),
            FusionKind::Tucker { p, q } => (p, q),
        }
    }

    pub fn fused_len(&self) -> usize {
        match *self {
            FusionKind::Cp { rank } => rank,
            FusionKind::Tucker { p, q } => p * q,
        }
    }
}

/// Architecture hyperparameters consumed by [`init_model`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub input_len: usize,
    pub fusion: FusionKind,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub num_classes: usize,
}

impl ArchConfig {
    /// Default CP variant: both mode embeddings of size 32.
    pub fn cp_default() -> Self {
        Self {
            input_len: 1024,
            fusion: FusionKind::Cp { rank: 32 },
            hidden: vec![64, 32],
            dropout: 0.3,
            num_classes: 4,
        }
    }

    /// Default Tucker variant: 16x16 core, fused vector of length 256.
    pub fn tucker_default() -> Self {
        Self {
            input_len: 1024,
            fusion: FusionKind::Tucker { p: 16, q: 16 },
            hidden: vec![64, 32],
            dropout: 0.3,
            num_classes: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (d1, d2) = self.fusion.mode_dims();
        for (name, v) in [
            ("input_len", self.input_len),
            ("mode-1 size", d1),
            ("mode-2 size", d2),
            ("num_classes", self.num_classes),
        ] {
            if v == 0 {
                return Err(NfcError::Parameter(format!("{name} must be positive")));
            }
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(NfcError::Parameter("hidden widths must be positive".into()));
        }
        if !self.dropout.is_finite() || !(0.0..1.0).contains(&self.dropout) {
            return Err(NfcError::Parameter(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Learnable linear map from the raw window into one latent mode space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeEmbedding {
    /// `d_k x input_len` embedding matrix.
    pub u: Mat,
}

impl ModeEmbedding {
    /// Projects a window into this mode's latent space: `u * x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.u.matvec(x)
    }
}

/// Weighted elementwise-product fusion of same-sized mode embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpFusion {
    pub lambda: Vec<f64>,
}

impl CpFusion {
    /// Two-mode fusion: `f_r = lambda_r * i1_r * i2_r`.
    pub fn fuse(&self, i1: &[f64], i2: &[f64]) -> Result<Vec<f64>> {
        self.fuse_many(&[i1, i2])
    }

    /// K-ary variant: the weighted elementwise product over any number of
    /// modes, all of length `rank`.
    pub fn fuse_many(&self, modes: &[&[f64]]) -> Result<Vec<f64>> {
        let rank = self.lambda.len();
        if modes.is_empty() {
            return Err(NfcError::Shape("fusion needs at least one mode".into()));
        }
        for (k, m) in modes.iter().enumerate() {
            if m.len() != rank {
                return Err(NfcError::Shape(format!(
                    "mode {k} has length {}, expected rank {rank}",
                    m.len()
                )));
            }
        }
        let mut out = self.lambda.clone();
        for m in modes {
            for (o, &v) in out.iter_mut().zip(m.iter()) {
                *o *= v;
            }
        }
        Ok(out)
    }
}

/// Core-weighted outer-product fusion of two mode embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuckerFusion {
    /// `p x q` core.
    pub core: Mat,
}

impl TuckerFusion {
    /// Returns the row-major flattening of `core .* (i1 outer i2)`:
    /// entry `p * q_len + q` holds `core[p][q] * i1[p] * i2[q]`.
    pub fn fuse(&self, i1: &[f64], i2: &[f64]) -> Result<Vec<f64>> {
        let (p_len, q_len) = (self.core.rows(), self.core.cols());
        if i1.len() != p_len || i2.len() != q_len {
            return Err(NfcError::Shape(format!(
                "tucker fuse: got modes of length {} and {}, core is {}x{}",
                i1.len(),
                i2.len(),
                p_len,
                q_len
            )));
        }
        let mut out = vec![0.0; p_len * q_len];
        for (p, &a) in i1.iter().enumerate() {
            for (q, &b) in i2.iter().enumerate() {
                out[p * q_len + q] = self.core.get(p, q) * a * b;
            }
        }
        Ok(out)
    }
}

/// Reshapes a row-major flattened interaction vector back to `p x q`.
pub fn unflatten(flat: &[f64], p: usize, q: usize) -> Result<Mat> {
    Mat::from_flat(p, q, flat.to_vec())
}

/// One of the two fusion schemes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Fusion {
    Cp(CpFusion),
    Tucker(TuckerFusion),
}

impl Fusion {
    pub fn fused_len(&self) -> usize {
        match self {
            Fusion::Cp(f) => f.lambda.len(),
            Fusion::Tucker(f) => f.core.rows() * f.core.cols(),
        }
    }

    pub fn fuse(&self, i1: &[f64], i2: &[f64]) -> Result<Vec<f64>> {
        match self {
            Fusion::Cp(f) => f.fuse(i1, i2),
            Fusion::Tucker(f) => f.fuse(i1, i2),
        }
    }
}

/// Plain affine layer `y = x W^T + b`, shared by the model head and the
/// baseline MLP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    /// `out x in` weights.
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Affine {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            w: Mat::zeros(out_dim, in_dim),
            b: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }
}

/// Batched product `x * w^T`: rows of `x` are samples.
pub(crate) fn matmul_wt(x: &Mat, w: &Mat) -> Result<Mat> {
    if x.cols() != w.cols() {
        return Err(NfcError::Shape(format!(
            "linear: input width {} does not match layer input {}",
            x.cols(),
            w.cols()
        )));
    }
    let mut out = Mat::zeros(x.rows(), w.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let out_row = out.row_mut(r);
        for (o, out_v) in out_row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (wv, v) in w.row(o).iter().zip(row) {
                acc += wv * v;
            }
            *out_v = acc;
        }
    }
    Ok(out)
}

/// Batched affine forward: rows of `x` are samples.
pub(crate) fn affine_forward(x: &Mat, layer: &Affine) -> Result<Mat> {
    let mut out = matmul_wt(x, &layer.w)?;
    for r in 0..out.rows() {
        for (v, b) in out.row_mut(r).iter_mut().zip(&layer.b) {
            *v += b;
        }
    }
    Ok(out)
}

/// Batched affine backward. Returns `(dw, db, dx)` for upstream `dz`.
pub(crate) fn affine_backward(x: &Mat, layer: &Affine, dz: &Mat) -> Result<(Mat, Vec<f64>, Mat)> {
    if dz.rows() != x.rows() || dz.cols() != layer.out_dim() {
        return Err(NfcError::Shape(format!(
            "affine backward: upstream is {}x{}, expected {}x{}",
            dz.rows(),
            dz.cols(),
            x.rows(),
            layer.out_dim()
        )));
    }
    let mut dw = Mat::zeros(layer.out_dim(), layer.in_dim());
    let mut db = vec![0.0; layer.out_dim()];
    let mut dx = Mat::zeros(x.rows(), layer.in_dim());
    for r in 0..x.rows() {
        let x_row = x.row(r);
        let dz_row = dz.row(r);
        for (o, &g) in dz_row.iter().enumerate() {
            db[o] += g;
            let dw_row = dw.row_mut(o);
            for (i, &xv) in x_row.iter().enumerate() {
                dw_row[i] += g * xv;
            }
        }
        let dx_row = dx.row_mut(r);
        for (o, &g) in dz_row.iter().enumerate() {
            for (i, &wv) in layer.w.row(o).iter().enumerate() {
                dx_row[i] += g * wv;
            }
        }
    }
    Ok((dw, db, dx))
}

#[inline]
pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Affine -> BatchNorm -> ReLU -> Dropout block of the classification head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseBlock {
    pub affine: Affine,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    pub bn_running_mean: Vec<f64>,
    pub bn_running_var: Vec<f64>,
    pub dropout_p: f64,
}

impl DenseBlock {
    pub fn new(in_dim: usize, out_dim: usize, dropout_p: f64) -> Self {
        Self {
            affine: Affine::zeros(in_dim, out_dim),
            bn_gamma: vec![1.0; out_dim],
            bn_beta: vec![0.0; out_dim],
            bn_running_mean: vec![0.0; out_dim],
            bn_running_var: vec![1.0; out_dim],
            dropout_p,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.affine.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.affine.out_dim()
    }

    /// Samples an inverted-dropout multiplier matrix: entries are 0 with
    /// probability `p`, else `1 / (1 - p)`.
    pub fn sample_mask(&self, batch_rows: usize, rng: &mut ChaCha8Rng) -> Mat {
        let out = self.out_dim();
        if self.dropout_p <= 0.0 {
            return Mat::filled(batch_rows, out, 1.0);
        }
        let keep_scale = 1.0 / (1.0 - self.dropout_p);
        let mut mask = Mat::zeros(batch_rows, out);
        for r in 0..batch_rows {
            for c in 0..out {
                let keep = rng.random::<f64>() >= self.dropout_p;
                mask.set(r, c, if keep { keep_scale } else { 0.0 });
            }
        }
        mask
    }

    /// Forward pass sampling a fresh dropout mask in train mode.
    pub fn forward(
        &mut self,
        batch: &Mat,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Mat, BlockCache)> {
        let mask = match mode {
            Mode::Train => Some(self.sample_mask(batch.rows(), rng)),
            Mode::Eval => None,
        };
        self.forward_with_mask(batch, mode, mask)
    }

    /// Forward pass with an externally supplied dropout mask (`None` means
    /// no dropout). Train mode requires at least two rows for the batch
    /// statistics and updates the running statistics as a side effect.
    pub fn forward_with_mask(
        &mut self,
        batch: &Mat,
        mode: Mode,
        mask: Option<Mat>,
    ) -> Result<(Mat, BlockCache)> {
        let (out, cache, stats) = self.compute(batch, mode, mask)?;
        if let Some((mean, var)) = stats {
            // Train-mode stats are taken over the bias-free pre-activations
            // (the bias cancels in the normalization); the running mean must
            // still estimate the biased pre-activation for eval.
            for j in 0..self.out_dim() {
                self.bn_running_mean[j] = (1.0 - BN_MOMENTUM) * self.bn_running_mean[j]
                    + BN_MOMENTUM * (mean[j] + self.affine.b[j]);
                self.bn_running_var[j] =
                    (1.0 - BN_MOMENTUM) * self.bn_running_var[j] + BN_MOMENTUM * var[j];
            }
        }
        Ok((out, cache))
    }

    /// Read-only eval forward used for inference.
    pub fn forward_eval(&self, batch: &Mat) -> Result<Mat> {
        let (out, _, _) = self.compute(batch, Mode::Eval, None)?;
        Ok(out)
    }

    /// Pure forward computation; returns fresh batch statistics in train
    /// mode so the caller can fold them into the running estimates.
    #[allow(clippy::type_complexity)]
    fn compute(
        &self,
        batch: &Mat,
        mode: Mode,
        mask: Option<Mat>,
    ) -> Result<(Mat, BlockCache, Option<(Vec<f64>, Vec<f64>)>)> {
        let b = batch.rows();
        if mode == Mode::Train && b < 2 {
            return Err(NfcError::Parameter(format!(
                "train-mode batch normalization needs a batch of at least 2, got {b}"
            )));
        }
        if b == 0 {
            return Err(NfcError::Parameter("empty batch".into()));
        }
        let out_dim = self.out_dim();
        if let Some(m) = &mask {
            if m.rows() != b || m.cols() != out_dim {
                return Err(NfcError::Shape(format!(
                    "dropout mask is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    b,
                    out_dim
                )));
            }
        }
        // In train mode the bias cancels against the batch mean, so it is
        // left out of the arithmetic entirely; that makes the cancellation
        // exact in floating point. Eval mode applies it as usual (the
        // running mean is recorded bias-inclusive).
        let z = match mode {
            Mode::Train => matmul_wt(batch, &self.affine.w)?,
            Mode::Eval => affine_forward(batch, &self.affine)?,
        };
        // Normalization statistics: per-unit batch mean/var in train mode
        // (population variance), running estimates in eval mode.
        let (mean, var, fresh) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; out_dim];
                let mut var = vec![0.0; out_dim];
                for r in 0..b {
                    for (j, &v) in z.row(r).iter().enumerate() {
                        mean[j] += v;
                    }
                }
                for m in mean.iter_mut() {
                    *m /= b as f64;
                }
                for r in 0..b {
                    for (j, &v) in z.row(r).iter().enumerate() {
                        let d = v - mean[j];
                        var[j] += d * d;
                    }
                }
                for v in var.iter_mut() {
                    *v /= b as f64;
                }
                (mean, var, true)
            }
            Mode::Eval => (
                self.bn_running_mean.clone(),
                self.bn_running_var.clone(),
                false,
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut normalized = Mat::zeros(b, out_dim);
        let mut bn_out = Mat::zeros(b, out_dim);
        let mut output = Mat::zeros(b, out_dim);
        let mask = mask.unwrap_or_else(|| Mat::filled(b, out_dim, 1.0));
        for r in 0..b {
            for j in 0..out_dim {
                let xhat = (z.get(r, j) - mean[j]) * inv_std[j];
                normalized.set(r, j, xhat);
                let a = self.bn_gamma[j] * xhat + self.bn_beta[j];
                bn_out.set(r, j, a);
                output.set(r, j, relu(a) * mask.get(r, j));
            }
        }
        let stats = if fresh {
            Some((mean.clone(), var.clone()))
        } else {
            None
        };
        let cache = BlockCache {
            input: batch.clone(),
            normalized,
            bn_out,
            mask,
            inv_std,
            mode,
        };
        Ok((output, cache, stats))
    }

    /// Backward pass through dropout, ReLU, batch normalization, and the
    /// affine map. Returns the parameter gradients and the input gradient.
    pub fn backward(&self, cache: &BlockCache, dout: &Mat) -> Result<(BlockGrad, Mat)> {
        let b = cache.input.rows();
        let out_dim = self.out_dim();
        if dout.rows() != b || dout.cols() != out_dim {
            return Err(NfcError::State(format!(
                "block backward: upstream is {}x{}, cache expects {}x{}",
                dout.rows(),
                dout.cols(),
                b,
                out_dim
            )));
        }
        if cache.input.cols() != self.in_dim() {
            return Err(NfcError::State(
                "block cache does not match this block's input width".into(),
            ));
        }
        // Dropout, then ReLU on the batchnorm output.
        let mut d_bn_out = Mat::zeros(b, out_dim);
        for r in 0..b {
            for j in 0..out_dim {
                let g = dout.get(r, j) * cache.mask.get(r, j);
                let grad = if cache.bn_out.get(r, j) > 0.0 { g } else { 0.0 };
                d_bn_out.set(r, j, grad);
            }
        }
        // Batchnorm parameters and input.
        let mut dgamma = vec![0.0; out_dim];
        let mut dbeta = vec![0.0; out_dim];
        let mut dxhat = Mat::zeros(b, out_dim);
        for r in 0..b {
            for j in 0..out_dim {
                let g = d_bn_out.get(r, j);
                dgamma[j] += g * cache.normalized.get(r, j);
                dbeta[j] += g;
                dxhat.set(r, j, g * self.bn_gamma[j]);
            }
        }
        let mut dz = Mat::zeros(b, out_dim);
        match cache.mode {
            Mode::Train => {
                // Gradient through the batch statistics (population variance):
                // dz = inv_std / B * (B*dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
                let mut sum_dxhat = vec![0.0; out_dim];
                let mut sum_dxhat_xhat = vec![0.0; out_dim];
                for r in 0..b {
                    for j in 0..out_dim {
                        let g = dxhat.get(r, j);
                        sum_dxhat[j] += g;
                        sum_dxhat_xhat[j] += g * cache.normalized.get(r, j);
                    }
                }
                let bf = b as f64;
                for r in 0..b {
                    for j in 0..out_dim {
                        let v = cache.inv_std[j] / bf
                            * (bf * dxhat.get(r, j)
                                - sum_dxhat[j]
                                - cache.normalized.get(r, j) * sum_dxhat_xhat[j]);
                        dz.set(r, j, v);
                    }
                }
            }
            Mode::Eval => {
                // Running statistics are constants here.
                for r in 0..b {
                    for j in 0..out_dim {
                        dz.set(r, j, dxhat.get(r, j) * cache.inv_std[j]);
                    }
                }
            }
        }
        let (dw, db, dx) = affine_backward(&cache.input, &self.affine, &dz)?;
        Ok((
            BlockGrad {
                w: dw,
                b: db,
                gamma: dgamma,
                beta: dbeta,
            },
            dx,
        ))
    }
}

/// Values saved by a block's forward pass for its backward pass.
#[derive(Clone, Debug)]
pub struct BlockCache {
    input: Mat,
    normalized: Mat,
    bn_out: Mat,
    mask: Mat,
    inv_std: Vec<f64>,
    mode: Mode,
}

/// Gradients for one dense block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGrad {
    pub w: Mat,
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// The full classifier: two mode embeddings, one fusion scheme, N dense
/// blocks, and a final affine map to the class logits.
#[derive(Clone, Debug, PartialEq)]
pub struct NfcModel {
    arch: ArchConfig,
    pub embeddings: Vec<ModeEmbedding>,
    pub fusion: Fusion,
    pub blocks: Vec<DenseBlock>,
    pub output: Affine,
}

/// Values saved by a model forward pass for [`NfcModel::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    input: Mat,
    mode_outputs: Vec<Mat>,
    block_caches: Vec<BlockCache>,
    head_input: Mat,
}

/// Structure-mirrored gradients for every parameter tensor of an [`NfcModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub embeddings: Vec<Mat>,
    pub fusion: FusionGrad,
    pub blocks: Vec<BlockGrad>,
    pub output_w: Mat,
    pub output_b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FusionGrad {
    Cp(Vec<f64>),
    Tucker(Mat),
}

impl GradientSet {
    pub fn zeros_like(model: &NfcModel) -> Self {
        Self {
            embeddings: model
                .embeddings
                .iter()
                .map(|e| Mat::zeros(e.u.rows(), e.u.cols()))
                .collect(),
            fusion: match &model.fusion {
                Fusion::Cp(f) => FusionGrad::Cp(vec![0.0; f.lambda.len()]),
                Fusion::Tucker(f) => FusionGrad::Tucker(Mat::zeros(f.core.rows(), f.core.cols())),
            },
            blocks: model
                .blocks
                .iter()
                .map(|blk| BlockGrad {
                    w: Mat::zeros(blk.out_dim(), blk.in_dim()),
                    b: vec![0.0; blk.out_dim()],
                    gamma: vec![0.0; blk.out_dim()],
                    beta: vec![0.0; blk.out_dim()],
                })
                .collect(),
            output_w: Mat::zeros(model.output.out_dim(), model.output.in_dim()),
            output_b: vec![0.0; model.output.out_dim()],
        }
    }

    /// Gradient tensors in the model's declared parameter order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (k, g) in self.embeddings.iter().enumerate() {
            out.push((format!("embed{k}.u"), g.as_slice()));
        }
        match &self.fusion {
            FusionGrad::Cp(l) => out.push(("fusion.lambda".into(), l.as_slice())),
            FusionGrad::Tucker(c) => out.push(("fusion.core".into(), c.as_slice())),
        }
        for (i, blk) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.w"), blk.w.as_slice()));
            out.push((format!("block{i}.b"), blk.b.as_slice()));
            out.push((format!("block{i}.gamma"), blk.gamma.as_slice()));
            out.push((format!("block{i}.beta"), blk.beta.as_slice()));
        }
        out.push(("output.w".into(), self.output_w.as_slice()));
        out.push(("output.b".into(), self.output_b.as_slice()));
        out
    }

    /// Mutable view of the gradient tensors, same order as [`tensors`].
    ///
    /// [`tensors`]: GradientSet::tensors
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let GradientSet {
            embeddings,
            fusion,
            blocks,
            output_w,
            output_b,
        } = self;
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (k, g) in embeddings.iter_mut().enumerate() {
            out.push((format!("embed{k}.u"), g.as_mut_slice()));
        }
        match fusion {
            FusionGrad::Cp(l) => out.push(("fusion.lambda".into(), l.as_mut_slice())),
            FusionGrad::Tucker(c) => out.push(("fusion.core".into(), c.as_mut_slice())),
        }
        for (i, blk) in blocks.iter_mut().enumerate() {
            out.push((format!("block{i}.w"), blk.w.as_mut_slice()));
            out.push((format!("block{i}.b"), blk.b.as_mut_slice()));
            out.push((format!("block{i}.gamma"), blk.gamma.as_mut_slice()));
            out.push((format!("block{i}.beta"), blk.beta.as_mut_slice()));
        }
        out.push(("output.w".into(), output_w.as_mut_slice()));
        out.push(("output.b".into(), output_b.as_mut_slice()));
        out
    }
}

impl NfcModel {
    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_len
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    /// Builds a model with the right shapes and all parameters zeroed
    /// (batchnorm gamma 1, running variance 1). Used by checkpoint loading.
    pub(crate) fn zeroed(arch: ArchConfig) -> Result<Self> {
        arch.validate()?;
        let (d1, d2) = arch.fusion.mode_dims();
        let embeddings = vec![
            ModeEmbedding {
                u: Mat::zeros(d1, arch.input_len),
            },
            ModeEmbedding {
                u: Mat::zeros(d2, arch.input_len),
            },
        ];
        let fusion = match arch.fusion {
            FusionKind::Cp { rank } => Fusion::Cp(CpFusion {
                lambda: vec![0.0; rank],
            }),
            FusionKind::Tucker { p, q } => Fusion::Tucker(TuckerFusion {
                core: Mat::zeros(p, q),
            }),
        };
        let mut blocks = Vec::with_capacity(arch.hidden.len());
        let mut in_dim = arch.fusion.fused_len();
        for &width in &arch.hidden {
            blocks.push(DenseBlock::new(in_dim, width, arch.dropout));
            in_dim = width;
        }
        let output = Affine::zeros(in_dim, arch.num_classes);
        Ok(Self {
            arch,
            embeddings,
            fusion,
            blocks,
            output,
        })
    }

    /// Forward pass sampling fresh dropout masks in train mode.
    pub fn forward(
        &mut self,
        batch: &Mat,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Mat, ForwardCache)> {
        let masks = match mode {
            Mode::Train => Some(
                self.blocks
                    .iter()
                    .map(|blk| blk.sample_mask(batch.rows(), rng))
                    .collect::<Vec<_>>(),
            ),
            Mode::Eval => None,
        };
        self.forward_with_masks(batch, mode, masks)
    }

    /// Forward pass with externally fixed dropout masks (one per block;
    /// `None` disables dropout). Used by the gradient checker, where the
    /// loss must be a deterministic function of the parameters.
    pub fn forward_with_masks(
        &mut self,
        batch: &Mat,
        mode: Mode,
        masks: Option<Vec<Mat>>,
    ) -> Result<(Mat, ForwardCache)> {
        if batch.cols() != self.arch.input_len {
            return Err(NfcError::Shape(format!(
                "batch width {} does not match model input length {}",
                batch.cols(),
                self.arch.input_len
            )));
        }
        if batch.rows() == 0 {
            return Err(NfcError::Parameter("empty batch".into()));
        }
        if let Some(m) = &masks {
            if m.len() != self.blocks.len() {
                return Err(NfcError::Shape(format!(
                    "{} dropout masks for {} blocks",
                    m.len(),
                    self.blocks.len()
                )));
            }
        }
        let b = batch.rows();
        let mut mode_outputs = Vec::with_capacity(self.embeddings.len());
        for emb in &self.embeddings {
            let mut out = Mat::zeros(b, emb.u.rows());
            for r in 0..b {
                let projected = emb.forward(batch.row(r))?;
                out.row_mut(r).copy_from_slice(&projected);
            }
            mode_outputs.push(out);
        }
        let mut fused = Mat::zeros(b, self.fusion.fused_len());
        for r in 0..b {
            let f = self.fusion.fuse(mode_outputs[0].row(r), mode_outputs[1].row(r))?;
            fused.row_mut(r).copy_from_slice(&f);
        }
        let mut head_input = fused;
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        let mut mask_iter = masks.map(Vec::into_iter);
        for blk in self.blocks.iter_mut() {
            let mask = mask_iter.as_mut().map(|it| it.next().expect("mask count checked"));
            let (out, cache) = blk.forward_with_mask(&head_input, mode, mask)?;
            block_caches.push(cache);
            head_input = out;
        }
        let logits = affine_forward(&head_input, &self.output)?;
        let cache = ForwardCache {
            input: batch.clone(),
            mode_outputs,
            block_caches,
            head_input,
        };
        Ok((logits, cache))
    }

    /// Read-only eval-mode inference: a pure function of (model, batch).
    pub fn forward_eval(&self, batch: &Mat) -> Result<Mat> {
        if batch.cols() != self.arch.input_len {
            return Err(NfcError::Shape(format!(
                "batch width {} does not match model input length {}",
                batch.cols(),
                self.arch.input_len
            )));
        }
        let b = batch.rows();
        let mut fused = Mat::zeros(b, self.fusion.fused_len());
        for r in 0..b {
            let i1 = self.embeddings[0].forward(batch.row(r))?;
            let i2 = self.embeddings[1].forward(batch.row(r))?;
            let f = self.fusion.fuse(&i1, &i2)?;
            fused.row_mut(r).copy_from_slice(&f);
        }
        let mut h = fused;
        for blk in &self.blocks {
            h = blk.forward_eval(&h)?;
        }
        affine_forward(&h, &self.output)
    }

    /// Backward pass from logit gradients to a full [`GradientSet`].
    ///
    /// `cache` must come from a matching forward call on this model.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &Mat) -> Result<GradientSet> {
        let b = cache.input.rows();
        if cache.block_caches.len() != self.blocks.len() {
            return Err(NfcError::State(format!(
                "cache has {} block entries, model has {} blocks",
                cache.block_caches.len(),
                self.blocks.len()
            )));
        }
        if dlogits.rows() != b || dlogits.cols() != self.output.out_dim() {
            return Err(NfcError::State(format!(
                "dlogits is {}x{}, expected {}x{}",
                dlogits.rows(),
                dlogits.cols(),
                b,
                self.output.out_dim()
            )));
        }
        let mut grads = GradientSet::zeros_like(self);
        let (d_out_w, d_out_b, mut d_hidden) =
            affine_backward(&cache.head_input, &self.output, dlogits)?;
        grads.output_w = d_out_w;
        grads.output_b = d_out_b;
        for i in (0..self.blocks.len()).rev() {
            let (bg, dx) = self.blocks[i].backward(&cache.block_caches[i], &d_hidden)?;
            grads.blocks[i] = bg;
            d_hidden = dx;
        }
        // d_hidden now holds the gradient of the fused feature vector.
        let i1 = &cache.mode_outputs[0];
        let i2 = &cache.mode_outputs[1];
        let mut d_i1 = Mat::zeros(b, i1.cols());
        let mut d_i2 = Mat::zeros(b, i2.cols());
        match (&self.fusion, &mut grads.fusion) {
            (Fusion::Cp(f), FusionGrad::Cp(dlambda)) => {
                for r in 0..b {
                    for (j, &g) in d_hidden.row(r).iter().enumerate() {
                        let a = i1.get(r, j);
                        let c = i2.get(r, j);
                        dlambda[j] += g * a * c;
                        d_i1.set(r, j, g * f.lambda[j] * c);
                        d_i2.set(r, j, g * f.lambda[j] * a);
                    }
                }
            }
            (Fusion::Tucker(f), FusionGrad::Tucker(dcore)) => {
                let q_len = f.core.cols();
                for r in 0..b {
                    let df = d_hidden.row(r);
                    for p in 0..f.core.rows() {
                        let a = i1.get(r, p);
                        let mut acc_p = 0.0;
                        for q in 0..q_len {
                            let g = df[p * q_len + q];
                            let c = i2.get(r, q);
                            dcore.set(p, q, dcore.get(p, q) + g * a * c);
                            acc_p += g * f.core.get(p, q) * c;
                            d_i2.set(r, q, d_i2.get(r, q) + g * f.core.get(p, q) * a);
                        }
                        d_i1.set(r, p, acc_p);
                    }
                }
            }
            _ => {
                return Err(NfcError::State(
                    "gradient fusion variant does not match the model".into(),
                ))
            }
        }
        for (k, d_mode) in [d_i1, d_i2].into_iter().enumerate() {
            let du = &mut grads.embeddings[k];
            for r in 0..b {
                let x_row = cache.input.row(r);
                for (d, &g) in d_mode.row(r).iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    let du_row = du.row_mut(d);
                    for (l, &xv) in x_row.iter().enumerate() {
                        du_row[l] += g * xv;
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Parameter tensors in declared order: embeddings, fusion, blocks
    /// (w, b, gamma, beta each), output. Running statistics are not
    /// parameters and are excluded.
    pub fn param_tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (k, e) in self.embeddings.iter().enumerate() {
            out.push((format!("embed{k}.u"), e.u.as_slice()));
        }
        match &self.fusion {
            Fusion::Cp(f) => out.push(("fusion.lambda".into(), f.lambda.as_slice())),
            Fusion::Tucker(f) => out.push(("fusion.core".into(), f.core.as_slice())),
        }
        for (i, blk) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.w"), blk.affine.w.as_slice()));
            out.push((format!("block{i}.b"), blk.affine.b.as_slice()));
            out.push((format!("block{i}.gamma"), blk.bn_gamma.as_slice()));
            out.push((format!("block{i}.beta"), blk.bn_beta.as_slice()));
        }
        out.push(("output.w".into(), self.output.w.as_slice()));
        out.push(("output.b".into(), self.output.b.as_slice()));
        out
    }

    /// Mutable view of the parameter tensors, same order as
    /// [`param_tensors`](NfcModel::param_tensors).
    pub fn param_tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let NfcModel {
            embeddings,
            fusion,
            blocks,
            output,
            ..
        } = self;
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (k, e) in embeddings.iter_mut().enumerate() {
            out.push((format!("embed{k}.u"), e.u.as_mut_slice()));
        }
        match fusion {
            Fusion::Cp(f) => out.push(("fusion.lambda".into(), f.lambda.as_mut_slice())),
            Fusion::Tucker(f) => out.push(("fusion.core".into(), f.core.as_mut_slice())),
        }
        for (i, blk) in blocks.iter_mut().enumerate() {
            out.push((format!("block{i}.w"), blk.affine.w.as_mut_slice()));
            out.push((format!("block{i}.b"), blk.affine.b.as_mut_slice()));
            out.push((format!("block{i}.gamma"), blk.bn_gamma.as_mut_slice()));
            out.push((format!("block{i}.beta"), blk.bn_beta.as_mut_slice()));
        }
        out.push(("output.w".into(), output.w.as_mut_slice()));
        out.push(("output.b".into(), output.b.as_mut_slice()));
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Initializes a model: embedding and dense weights from
/// `uniform(-s, s)` with `s = sqrt(6 / (fan_in + fan_out))`, fusion weights
/// all ones, biases and beta zero, gamma one, running stats (0, 1).
/// Deterministic per seed.
pub fn init_model(arch: &ArchConfig, seed: u64) -> Result<NfcModel> {
    let mut model = NfcModel::zeroed(arch.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fill_uniform = |m: &mut Mat, rng: &mut ChaCha8Rng| {
        let s = (6.0 / (m.cols() + m.rows()) as f64).sqrt();
        for v in m.as_mut_slice() {
            *v = rng.random_range(-s..s);
        }
    };
    for emb in &mut model.embeddings {
        fill_uniform(&mut emb.u, &mut rng);
    }
    match &mut model.fusion {
        Fusion::Cp(f) => f.lambda.fill(1.0),
        Fusion::Tucker(f) => f.core.as_mut_slice().fill(1.0),
    }
    for blk in &mut model.blocks {
        fill_uniform(&mut blk.affine.w, &mut rng);
    }
    fill_uniform(&mut model.output.w, &mut rng);
    Ok(model)
}
