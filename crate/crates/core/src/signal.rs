//! Vibration signal pipeline: synthesis, file ingest, fixed-length
//! windowing, standardization, and stratified train/test splitting.
//!
//! Everything here is a pure function of its inputs and an explicit seed, so
//! the whole data path is reproducible end to end.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{NfcError, Result};

/// Guard below which a fitted standard deviation is treated as degenerate.
const STD_GUARD: f64 = 1e-12;

/// Bearing condition classes with stable integer codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Normal = 0,
    Inner = 1,
    Outer = 2,
    Ball = 3,
}

impl ClassLabel {
    pub const COUNT: usize = 4;
    pub const ALL: [ClassLabel; 4] = [
        ClassLabel::Normal,
        ClassLabel::Inner,
        ClassLabel::Outer,
        ClassLabel::Ball,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Normal => "normal",
            ClassLabel::Inner => "inner",
            ClassLabel::Outer => "outer",
            ClassLabel::Ball => "ball",
        }
    }

    /// Case-insensitive label lookup, e.g. for manifest entries.
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(ClassLabel::Normal),
            "inner" => Ok(ClassLabel::Inner),
            "outer" => Ok(ClassLabel::Outer),
            "ball" => Ok(ClassLabel::Ball),
            other => Err(NfcError::Data(format!("unknown class label {other:?}"))),
        }
    }

    pub fn from_index(ix: usize) -> Result<Self> {
        Self::ALL
            .get(ix)
            .copied()
            .ok_or_else(|| NfcError::Data(format!("class index {ix} out of range 0..4")))
    }
}

/// A raw vibration recording with its condition label.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecording {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub label: ClassLabel,
}

impl RawRecording {
    pub fn new(samples: Vec<f64>, sample_rate: f64, label: ClassLabel) -> Result<Self> {
        if samples.is_empty() {
            return Err(NfcError::Parameter("recording has no samples".into()));
        }
        if !(sample_rate > 0.0) {
            return Err(NfcError::Parameter(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            label,
        })
    }
}

/// A fixed-length window cut from a recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSegment {
    pub values: Vec<f64>,
    pub label: ClassLabel,
}

/// Mean/std pair fitted on training data and applied to both splits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    /// Fits pooled mean and population standard deviation over `values`.
    /// A std below 1e-12 is replaced by 1 so constant inputs stay finite.
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(NfcError::Parameter(
                "cannot fit a standardizer on zero values".into(),
            ));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut std = var.sqrt();
        if std < STD_GUARD {
            std = 1.0;
        }
        Ok(Self { mean, std })
    }

    #[inline]
    pub fn transform(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

/// Train/test segment partition produced by [`stratified_split`].
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<SignalSegment>,
    pub test: Vec<SignalSegment>,
    pub seed: u64,
}

/// Synthetic recording generator settings — a desk-scale stand-in for
/// bench-measured bearing data. The default fault frequencies are arbitrary
/// fixtures chosen to be distinct and of realistic magnitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sample_rate: f64,
    pub duration: f64,
    pub noise_sigma: f64,
    pub inner_freq: f64,
    pub outer_freq: f64,
    pub ball_freq: f64,
    pub resonance_freq: f64,
    pub decay_rate: f64,
    pub impulse_amplitude: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 12_000.0,
            duration: 1.0,
            noise_sigma: 0.1,
            inner_freq: 162.0,
            outer_freq: 107.0,
            ball_freq: 141.0,
            resonance_freq: 3_000.0,
            decay_rate: 800.0,
            impulse_amplitude: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Characteristic impulse frequency for a fault class; `None` for Normal.
    pub fn fault_freq(&self, label: ClassLabel) -> Option<f64> {
        match label {
            ClassLabel::Normal => None,
            ClassLabel::Inner => Some(self.inner_freq),
            ClassLabel::Outer => Some(self.outer_freq),
            ClassLabel::Ball => Some(self.ball_freq),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sample_rate", self.sample_rate),
            ("duration", self.duration),
            ("inner_freq", self.inner_freq),
            ("outer_freq", self.outer_freq),
            ("ball_freq", self.ball_freq),
            ("resonance_freq", self.resonance_freq),
            ("decay_rate", self.decay_rate),
            ("impulse_amplitude", self.impulse_amplitude),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(NfcError::Parameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(NfcError::Parameter(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Cuts a recording into contiguous fixed-length windows.
///
/// The stride is `round(window_len * (1 - overlap_fraction))` (half-up).
/// A recording shorter than one window yields no segments; otherwise the
/// number of segments is `(n - window_len) / stride + 1`.
pub fn window_signal(
    recording: &RawRecording,
    window_len: usize,
    overlap_fraction: f64,
) -> Result<Vec<SignalSegment>> {
    if window_len == 0 {
        return Err(NfcError::Parameter("window_len must be at least 1".into()));
    }
    if !overlap_fraction.is_finite() || !(0.0..1.0).contains(&overlap_fraction) {
        return Err(NfcError::Parameter(format!(
            "overlap_fraction must be in [0, 1), got {overlap_fraction}"
        )));
    }
    let stride = (window_len as f64 * (1.0 - overlap_fraction)).round() as usize;
    if stride == 0 {
        return Err(NfcError::Parameter(format!(
            "stride rounds to zero for window_len {window_len} and overlap {overlap_fraction}"
        )));
    }
    let n = recording.samples.len();
    if n < window_len {
        return Ok(Vec::new());
    }
    let count = (n - window_len) / stride + 1;
    let mut segments = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * stride;
        segments.push(SignalSegment {
            values: recording.samples[start..start + window_len].to_vec(),
            label: recording.label,
        });
    }
    Ok(segments)
}

/// Fits a standardizer over the pooled values of all training segments.
pub fn fit_standardizer(train: &[SignalSegment]) -> Result<Standardizer> {
    if train.is_empty() {
        return Err(NfcError::Parameter(
            "cannot fit a standardizer on an empty training set".into(),
        ));
    }
    let pooled: Vec<f64> = train.iter().flat_map(|s| s.values.iter().copied()).collect();
    Standardizer::fit(&pooled)
}

/// Applies `(v - mean) / std` to every value; label and length are preserved.
pub fn apply_standardizer(s: &Standardizer, seg: &SignalSegment) -> SignalSegment {
    SignalSegment {
        values: seg.values.iter().map(|&v| s.transform(v)).collect(),
        label: seg.label,
    }
}

/// Splits segments into train/test keeping per-class proportions.
///
/// Per class `c` with `n_c` segments, exactly `round(n_c * test_fraction)`
/// go to the test set, chosen by a seeded shuffle. The same seed always
/// produces the same membership lists.
pub fn stratified_split(
    segments: &[SignalSegment],
    test_fraction: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if !test_fraction.is_finite() || !(0.0..1.0).contains(&test_fraction) {
        return Err(NfcError::Parameter(format!(
            "test_fraction must be in [0, 1), got {test_fraction}"
        )));
    }
    for label in ClassLabel::ALL {
        if !segments.iter().any(|s| s.label == label) {
            return Err(NfcError::Data(format!(
                "class {:?} has no segments; every class must be present",
                label
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; segments.len()];
    for label in ClassLabel::ALL {
        let mut idx: Vec<usize> = segments
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect();
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(n_test) {
            in_test[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        if in_test[i] {
            test.push(seg.clone());
        } else {
            train.push(seg.clone());
        }
    }
    Ok(SplitDataset { train, test, seed })
}

/// Generates one synthetic recording for the given class.
///
/// Normal is zero-mean Gaussian noise of std `noise_sigma`. Fault classes
/// add a periodic impulse train at the class fault frequency, each impulse
/// an exponentially decaying resonance burst
/// `impulse_amplitude * exp(-decay_rate * tau) * sin(2*pi*resonance_freq * tau)`.
/// Ball impulses are additionally amplitude-modulated at half the fault
/// frequency (depth 0.5), mimicking cage-rate modulation.
pub fn generate_synthetic(cfg: &SynthConfig, label: ClassLabel) -> Result<RawRecording> {
    cfg.validate()?;
    let n = (cfg.sample_rate * cfg.duration).round() as usize;
    if n == 0 {
        return Err(NfcError::Parameter(
            "sample_rate * duration rounds to zero samples".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = vec![0.0; n];
    if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma)
            .map_err(|e| NfcError::Parameter(format!("invalid noise distribution: {e}")))?;
        for s in samples.iter_mut() {
            *s = noise.sample(&mut rng);
        }
    }
    if let Some(fault_freq) = cfg.fault_freq(label) {
        let fs = cfg.sample_rate;
        let period = 1.0 / fault_freq;
        let two_pi = std::f64::consts::TAU;
        let mut k = 0usize;
        loop {
            let onset = k as f64 * period;
            if onset >= cfg.duration {
                break;
            }
            let start = (onset * fs).ceil() as usize;
            for (i, s) in samples.iter_mut().enumerate().skip(start) {
                let t = i as f64 / fs;
                let tau = t - onset;
                let envelope = (-cfg.decay_rate * tau).exp();
                if envelope < 1e-9 {
                    break;
                }
                let mut burst =
                    cfg.impulse_amplitude * envelope * (two_pi * cfg.resonance_freq * tau).sin();
                if label == ClassLabel::Ball {
                    burst *= 1.0 + 0.5 * (two_pi * (fault_freq / 2.0) * t).sin();
                }
                *s += burst;
            }
            k += 1;
        }
    }
    RawRecording::new(samples, cfg.sample_rate, label)
}

/// On-disk sample encodings understood by [`load_recordings`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// Header line `amplitude`, one decimal float per line.
    Csv,
    /// Little-endian 64-bit floats, length implied by the file size.
    FloatBinary,
}

/// Sidecar manifest mapping data files to labels and sample rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub recordings: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub label: String,
    pub sample_rate: f64,
}

/// Loads every recording named by a manifest; data files are resolved
/// relative to the manifest's directory.
pub fn load_recordings(manifest_path: &Path, format: DataFormat) -> Result<Vec<RawRecording>> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut recordings = Vec::with_capacity(manifest.recordings.len());
    for entry in &manifest.recordings {
        let label = ClassLabel::parse(&entry.label)?;
        if !(entry.sample_rate > 0.0) {
            return Err(NfcError::Data(format!(
                "manifest entry {}: sample rate must be positive, got {}",
                entry.file, entry.sample_rate
            )));
        }
        let path = dir.join(&entry.file);
        let samples = match format {
            DataFormat::Csv => parse_csv_samples(&path)?,
            DataFormat::FloatBinary => parse_binary_samples(&path)?,
        };
        recordings.push(RawRecording::new(samples, entry.sample_rate, label)?);
    }
    Ok(recordings)
}

fn parse_csv_samples(path: &Path) -> Result<Vec<f64>> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut lines: Vec<&str> = text.lines().collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    if lines.is_empty() || lines[0].trim() != "amplitude" {
        return Err(NfcError::Parse {
            path: display,
            location: "line 1".into(),
            message: "expected header line 'amplitude'".into(),
        });
    }
    let mut samples = Vec::with_capacity(lines.len().saturating_sub(1));
    for (i, line) in lines.iter().enumerate().skip(1) {
        let row = i + 1; // 1-based, counting the header
        let cell = line.trim();
        let value: f64 = cell.parse().map_err(|_| NfcError::Parse {
            path: display.clone(),
            location: format!("line {row}"),
            message: format!("expected a number, got {cell:?}"),
        })?;
        if !value.is_finite() {
            return Err(NfcError::Parse {
                path: display.clone(),
                location: format!("line {row}"),
                message: format!("non-finite amplitude {value}"),
            });
        }
        samples.push(value);
    }
    Ok(samples)
}

fn parse_binary_samples(path: &Path) -> Result<Vec<f64>> {
    let display = path.display().to_string();
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(NfcError::Parse {
            path: display,
            location: format!("byte {}", bytes.len() - bytes.len() % 8),
            message: format!("file size {} is not a multiple of 8", bytes.len()),
        });
    }
    let mut samples = Vec::with_capacity(bytes.len() / 8);
    for (i, chunk) in bytes.chunks_exact(8).enumerate() {
        let value = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        if !value.is_finite() {
            return Err(NfcError::Parse {
                path: display.clone(),
                location: format!("byte {}", i * 8),
                message: format!("non-finite amplitude {value}"),
            });
        }
        samples.push(value);
    }
    Ok(samples)
}

/// Writes a recording in the CSV format accepted by [`load_recordings`].
pub fn write_recording_csv(path: &Path, recording: &RawRecording) -> Result<()> {
    let mut out = String::with_capacity(recording.samples.len() * 12 + 16);
    out.push_str("amplitude\n");
    for v in &recording.samples {
        out.push_str(&format!("{v}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes a recording as packed little-endian 64-bit floats.
pub fn write_recording_binary(path: &Path, recording: &RawRecording) -> Result<()> {
    let mut bytes = Vec::with_capacity(recording.samples.len() * 8);
    for v in &recording.samples {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn save_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(path, json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recording(n: usize, label: ClassLabel) -> RawRecording {
        RawRecording::new((0..n).map(|i| i as f64).collect(), 1000.0, label).unwrap()
    }

    fn segment(values: Vec<f64>, label: ClassLabel) -> SignalSegment {
        SignalSegment { values, label }
    }

    #[test]
    fn window_counts_for_half_overlap() {
        let rec = recording(2048, ClassLabel::Normal);
        let segs = window_signal(&rec, 1024, 0.5).unwrap();
        assert_eq!(segs.len(), 3);
        for (k, seg) in segs.iter().enumerate() {
            let start = k * 512;
            assert_eq!(seg.values.as_slice(), &rec.samples[start..start + 1024]);
            assert_eq!(seg.label, ClassLabel::Normal);
        }
    }

    #[test]
    fn window_exact_fit_gives_single_segment() {
        let rec = recording(1024, ClassLabel::Inner);
        let segs = window_signal(&rec, 1024, 0.25).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].values, rec.samples);
    }

    #[test]
    fn window_undersized_input_is_empty() {
        let rec = recording(1023, ClassLabel::Ball);
        assert!(window_signal(&rec, 1024, 0.5).unwrap().is_empty());
    }

    #[test]
    fn window_rejects_bad_parameters() {
        let rec = recording(64, ClassLabel::Normal);
        assert!(window_signal(&rec, 0, 0.5).is_err());
        assert!(window_signal(&rec, 16, 1.0).is_err());
        assert!(window_signal(&rec, 16, -0.1).is_err());
        // stride rounds to zero: 1 * (1 - 0.7) = 0.3 -> 0
        assert!(window_signal(&rec, 1, 0.7).is_err());
    }

    #[test]
    fn fit_standardizer_matches_hand_values() {
        let segs = vec![
            segment(vec![0.0], ClassLabel::Normal),
            segment(vec![2.0], ClassLabel::Inner),
        ];
        let s = fit_standardizer(&segs).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.std, 1.0);
    }

    #[test]
    fn fit_standardizer_guards_constant_input() {
        let segs = vec![segment(vec![3.5; 8], ClassLabel::Outer)];
        let s = fit_standardizer(&segs).unwrap();
        assert_eq!(s.mean, 3.5);
        assert_eq!(s.std, 1.0);
    }

    #[test]
    fn fit_standardizer_rejects_empty() {
        assert!(fit_standardizer(&[]).is_err());
    }

    #[test]
    fn fit_is_nearly_idempotent_on_standardized_data() {
        // Pool already has mean 0 and std 1.
        let segs = vec![segment(vec![-1.0, 1.0, -1.0, 1.0], ClassLabel::Normal)];
        let s = fit_standardizer(&segs).unwrap();
        assert!(s.mean.abs() < 1e-12);
        assert!((s.std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_standardizer_shifts_and_scales() {
        let s = Standardizer { mean: 1.0, std: 1.0 };
        let seg = segment(vec![0.0, 2.0], ClassLabel::Ball);
        let out = apply_standardizer(&s, &seg);
        assert_eq!(out.values, vec![-1.0, 1.0]);
        assert_eq!(out.label, ClassLabel::Ball);
    }

    #[test]
    fn apply_identity_parameters_is_identity() {
        let s = Standardizer { mean: 0.0, std: 1.0 };
        let seg = segment(vec![0.25, -4.0, 7.5], ClassLabel::Inner);
        assert_eq!(apply_standardizer(&s, &seg).values, seg.values);
    }

    #[test]
    fn fit_then_apply_yields_unit_pool() {
        let segs: Vec<SignalSegment> = (0..10)
            .map(|i| segment((0..32).map(|j| (i * j) as f64 * 0.37 - 3.0).collect(), ClassLabel::Normal))
            .collect();
        let s = fit_standardizer(&segs).unwrap();
        let transformed: Vec<SignalSegment> =
            segs.iter().map(|seg| apply_standardizer(&s, seg)).collect();
        // Independent recomputation of the pooled statistics.
        let pooled: Vec<f64> = transformed
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .collect();
        let n = pooled.len() as f64;
        let mean = pooled.iter().sum::<f64>() / n;
        let var = pooled.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9, "pooled mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-9, "pooled std {}", var.sqrt());
    }

    fn balanced_segments(per_class: usize) -> Vec<SignalSegment> {
        let mut segs = Vec::new();
        for label in ClassLabel::ALL {
            for i in 0..per_class {
                segs.push(segment(vec![i as f64, label.index() as f64], label));
            }
        }
        segs
    }

    #[test]
    fn stratified_split_counts_per_class() {
        let segs = balanced_segments(25);
        let split = stratified_split(&segs, 0.2, 7).unwrap();
        assert_eq!(split.test.len(), 20);
        assert_eq!(split.train.len(), 80);
        for label in ClassLabel::ALL {
            let n = split.test.iter().filter(|s| s.label == label).count();
            assert_eq!(n, 5, "test count for {label:?}");
        }
    }

    #[test]
    fn stratified_split_zero_fraction_keeps_all_in_train() {
        let segs = balanced_segments(25);
        let split = stratified_split(&segs, 0.0, 7).unwrap();
        assert!(split.test.is_empty());
        assert_eq!(split.train.len(), 100);
    }

    #[test]
    fn stratified_split_is_deterministic() {
        let segs = balanced_segments(13);
        let a = stratified_split(&segs, 0.2, 42).unwrap();
        let b = stratified_split(&segs, 0.2, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stratified_split_requires_every_class() {
        let segs: Vec<SignalSegment> = balanced_segments(4)
            .into_iter()
            .filter(|s| s.label != ClassLabel::Ball)
            .collect();
        assert!(matches!(
            stratified_split(&segs, 0.2, 1),
            Err(NfcError::Data(_))
        ));
    }

    #[test]
    fn stratified_split_is_a_partition() {
        let segs = balanced_segments(9);
        let split = stratified_split(&segs, 0.3, 11).unwrap();
        assert_eq!(split.train.len() + split.test.len(), segs.len());
        // Every input segment lands in exactly one side (values are unique).
        for seg in &segs {
            let in_train = split.train.iter().filter(|s| *s == seg).count();
            let in_test = split.test.iter().filter(|s| *s == seg).count();
            assert_eq!(in_train + in_test, 1);
        }
    }

    #[test]
    fn synthetic_normal_has_gaussian_kurtosis() {
        let cfg = SynthConfig {
            seed: 3,
            ..SynthConfig::default()
        };
        let rec = generate_synthetic(&cfg, ClassLabel::Normal).unwrap();
        let n = rec.samples.len() as f64;
        let mean = rec.samples.iter().sum::<f64>() / n;
        let m2 = rec.samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m4 = rec.samples.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        let kurtosis = m4 / (m2 * m2);
        assert!((2.5..=3.5).contains(&kurtosis), "kurtosis {kurtosis}");
    }

    #[test]
    fn synthetic_inner_impulse_count_matches_fault_freq() {
        let cfg = SynthConfig {
            inner_freq: 160.0,
            seed: 9,
            ..SynthConfig::default()
        };
        let rec = generate_synthetic(&cfg, ClassLabel::Inner).unwrap();
        // Count excursions above 4 sigma, with a refractory window of half
        // the fault period so one burst is never counted twice.
        let threshold = 4.0 * cfg.noise_sigma;
        let min_gap = (cfg.sample_rate / cfg.inner_freq / 2.0) as usize;
        let mut count = 0usize;
        let mut last: Option<usize> = None;
        for (i, &v) in rec.samples.iter().enumerate() {
            if v > threshold && last.is_none_or(|l| i - l > min_gap) {
                count += 1;
                last = Some(i);
            }
        }
        assert!(
            (158..=162).contains(&count),
            "expected about 160 impulses, counted {count}"
        );
    }

    #[test]
    fn synthetic_is_deterministic_per_seed() {
        let cfg = SynthConfig {
            seed: 1234,
            ..SynthConfig::default()
        };
        let a = generate_synthetic(&cfg, ClassLabel::Ball).unwrap();
        let b = generate_synthetic(&cfg, ClassLabel::Ball).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn load_recordings_minimal_csv() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "amplitude\n1\n2\n3.5\n-4\n").unwrap();
        let manifest = Manifest {
            recordings: vec![ManifestEntry {
                file: "a.csv".into(),
                label: "Inner".into(),
                sample_rate: 12_000.0,
            }],
        };
        let mpath = dir.path().join("manifest.json");
        save_manifest(&mpath, &manifest).unwrap();
        let recs = load_recordings(&mpath, DataFormat::Csv).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].samples, vec![1.0, 2.0, 3.5, -4.0]);
        assert_eq!(recs[0].label, ClassLabel::Inner);
    }

    #[test]
    fn load_recordings_reports_bad_row() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("bad.csv"),
            "amplitude\n1\n2\n3\n4\n5\nnot-a-number\n7\n",
        )
        .unwrap();
        let manifest = Manifest {
            recordings: vec![ManifestEntry {
                file: "bad.csv".into(),
                label: "outer".into(),
                sample_rate: 1.0,
            }],
        };
        let mpath = dir.path().join("manifest.json");
        save_manifest(&mpath, &manifest).unwrap();
        let err = load_recordings(&mpath, DataFormat::Csv).unwrap_err();
        match err {
            NfcError::Parse { location, .. } => assert_eq!(location, "line 7"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_recordings_rejects_unknown_label() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "amplitude\n1\n").unwrap();
        let manifest = Manifest {
            recordings: vec![ManifestEntry {
                file: "a.csv".into(),
                label: "sideways".into(),
                sample_rate: 1.0,
            }],
        };
        let mpath = dir.path().join("manifest.json");
        save_manifest(&mpath, &manifest).unwrap();
        assert!(matches!(
            load_recordings(&mpath, DataFormat::Csv),
            Err(NfcError::Data(_))
        ));
    }

    #[test]
    fn binary_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RawRecording::new(vec![0.1, -2.75, 1e-300, 42.0], 48_000.0, ClassLabel::Outer)
            .unwrap();
        let fpath = dir.path().join("r.bin");
        write_recording_binary(&fpath, &rec).unwrap();
        let manifest = Manifest {
            recordings: vec![ManifestEntry {
                file: "r.bin".into(),
                label: "outer".into(),
                sample_rate: 48_000.0,
            }],
        };
        let mpath = dir.path().join("manifest.json");
        save_manifest(&mpath, &manifest).unwrap();
        let recs = load_recordings(&mpath, DataFormat::FloatBinary).unwrap();
        assert_eq!(recs[0], rec);
    }

    #[test]
    fn binary_rejects_truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("r.bin"), [0u8; 12]).unwrap();
        let manifest = Manifest {
            recordings: vec![ManifestEntry {
                file: "r.bin".into(),
                label: "normal".into(),
                sample_rate: 1.0,
            }],
        };
        let mpath = dir.path().join("manifest.json");
        save_manifest(&mpath, &manifest).unwrap();
        assert!(matches!(
            load_recordings(&mpath, DataFormat::FloatBinary),
            Err(NfcError::Parse { .. })
        ));
    }
}
