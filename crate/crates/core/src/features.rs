//! Time-domain statistical features for the classical baseline models.
//!
//! Twelve features in a fixed order: mean, std, variance, RMS, peak,
//! peak-to-peak, skewness, kurtosis (Pearson, Gaussian -> 3), crest factor,
//! shape factor, impulse factor, and clearance factor. Ratio denominators
//! below 1e-12 are clamped so constant and all-zero inputs stay finite.

use std::path::Path;

use crate::error::{NfcError, Result};
use crate::mat::Mat;
use crate::signal::{ClassLabel, SignalSegment, Standardizer};

pub const FEATURE_COUNT: usize = 12;

/// Column order used everywhere features are stored or exported.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "mean",
    "std",
    "variance",
    "rms",
    "peak",
    "peak_to_peak",
    "skewness",
    "kurtosis",
    "crest_factor",
    "shape_factor",
    "impulse_factor",
    "clearance_factor",
];

const DENOM_GUARD: f64 = 1e-12;

/// The 12 time-domain features of one segment, in [`FEATURE_NAMES`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| self.values[i])
    }
}

#[inline]
fn guard(denom: f64) -> f64 {
    if denom.abs() < DENOM_GUARD {
        DENOM_GUARD
    } else {
        denom
    }
}

/// Computes the 12 time-domain features of a segment.
pub fn extract_features(seg: &SignalSegment) -> Result<FeatureVector> {
    let v = &seg.values;
    let n = v.len();
    if n < 2 {
        return Err(NfcError::Parameter(format!(
            "feature extraction needs at least 2 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = v.iter().sum::<f64>() / nf;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    let mut sum_sq = 0.0;
    let mut sum_abs = 0.0;
    let mut sum_sqrt_abs = 0.0;
    let mut peak = 0.0f64;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &x in v {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        sum_sq += x * x;
        sum_abs += x.abs();
        sum_sqrt_abs += x.abs().sqrt();
        peak = peak.max(x.abs());
        min = min.min(x);
        max = max.max(x);
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let std = m2.sqrt();
    let rms = (sum_sq / nf).sqrt();
    let mean_abs = sum_abs / nf;
    let mean_sqrt_abs = sum_sqrt_abs / nf;

    let values = [
        mean,
        std,
        m2,
        rms,
        peak,
        max - min,
        m3 / guard(m2.powf(1.5)),
        m4 / guard(m2 * m2),
        peak / guard(rms),
        rms / guard(mean_abs),
        peak / guard(mean_abs),
        peak / guard(mean_sqrt_abs * mean_sqrt_abs),
    ];
    if values.iter().any(|x| !x.is_finite()) {
        return Err(NfcError::Numeric(
            "feature extraction produced a non-finite value".into(),
        ));
    }
    Ok(FeatureVector { values })
}

/// Stacks segment features into an `n x 12` matrix plus class indices.
pub fn feature_matrix(segments: &[SignalSegment]) -> Result<(Mat, Vec<usize>)> {
    let mut mat = Mat::zeros(segments.len(), FEATURE_COUNT);
    let mut labels = Vec::with_capacity(segments.len());
    for (i, seg) in segments.iter().enumerate() {
        let f = extract_features(seg)?;
        mat.row_mut(i).copy_from_slice(&f.values);
        labels.push(seg.label.index());
    }
    Ok((mat, labels))
}

/// Fits one standardizer per feature column (on training features).
pub fn fit_feature_standardizers(features: &Mat) -> Result<Vec<Standardizer>> {
    let mut out = Vec::with_capacity(features.cols());
    for c in 0..features.cols() {
        let column: Vec<f64> = (0..features.rows()).map(|r| features.get(r, c)).collect();
        out.push(Standardizer::fit(&column)?);
    }
    Ok(out)
}

/// Applies per-column standardizers to a feature matrix.
pub fn apply_feature_standardizers(features: &Mat, stats: &[Standardizer]) -> Result<Mat> {
    if stats.len() != features.cols() {
        return Err(NfcError::Shape(format!(
            "{} standardizers for {} feature columns",
            stats.len(),
            features.cols()
        )));
    }
    let mut out = features.clone();
    for r in 0..out.rows() {
        for (c, s) in stats.iter().enumerate() {
            out.set(r, c, s.transform(features.get(r, c)));
        }
    }
    Ok(out)
}

/// Writes a feature matrix as CSV with the 12 named columns plus `label`.
pub fn write_feature_csv(path: &Path, features: &Mat, labels: &[usize]) -> Result<()> {
    if features.rows() != labels.len() {
        return Err(NfcError::Shape(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if features.cols() != FEATURE_COUNT {
        return Err(NfcError::Shape(format!(
            "feature matrix has {} columns, expected {FEATURE_COUNT}",
            features.cols()
        )));
    }
    let mut out = String::new();
    out.push_str(&FEATURE_NAMES.join(","));
    out.push_str(",label\n");
    for (r, &label) in labels.iter().enumerate() {
        let name = ClassLabel::from_index(label)?.name();
        for c in 0..FEATURE_COUNT {
            out.push_str(&format!("{},", features.get(r, c)));
        }
        out.push_str(name);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
