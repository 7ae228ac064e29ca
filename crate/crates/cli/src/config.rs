//! Run configuration: one JSON document with a single master seed.
//!
//! Misspelled keys are rejected (`deny_unknown_fields` everywhere); missing
//! keys fall back to the documented defaults. All randomness flows from
//! `seed` through named substreams — synthesis, split, init, shuffle, and
//! dropout — so a config fully determines a run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nfc_core::error::Result;
use nfc_core::model::{ArchConfig, FusionKind};
use nfc_core::signal::{ClassLabel, DataFormat, SynthConfig};
use nfc_core::train::{AdamConfig, SchedulerConfig, TrainConfig};

/// Top-level run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every random choice derives from it.
    pub seed: u64,
    pub synth: SynthSection,
    pub data: DataSection,
    pub arch: ArchSection,
    pub train: TrainSection,
}

/// Synthetic generator settings. Carries no seed of its own: each
/// recording's seed derives from the master seed and the recording's
/// class/index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub sample_rate: f64,
    pub duration: f64,
    pub noise_sigma: f64,
    pub inner_freq: f64,
    pub outer_freq: f64,
    pub ball_freq: f64,
    pub resonance_freq: f64,
    pub decay_rate: f64,
    pub impulse_amplitude: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let base = SynthConfig::default();
        Self {
            sample_rate: base.sample_rate,
            duration: base.duration,
            noise_sigma: base.noise_sigma,
            inner_freq: base.inner_freq,
            outer_freq: base.outer_freq,
            ball_freq: base.ball_freq,
            resonance_freq: base.resonance_freq,
            decay_rate: base.decay_rate,
            impulse_amplitude: base.impulse_amplitude,
        }
    }
}

impl SynthSection {
    pub fn to_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            sample_rate: self.sample_rate,
            duration: self.duration,
            noise_sigma: self.noise_sigma,
            inner_freq: self.inner_freq,
            outer_freq: self.outer_freq,
            ball_freq: self.ball_freq,
            resonance_freq: self.resonance_freq,
            decay_rate: self.decay_rate,
            impulse_amplitude: self.impulse_amplitude,
            seed,
        }
    }
}

/// Dataset assembly: synthesis volume (or an external manifest), window
/// geometry, and the test fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub recordings_per_class: usize,
    pub window_len: usize,
    pub overlap: f64,
    pub test_fraction: f64,
    pub format: DataFormat,
    /// Optional manifest path; when set, recordings are loaded from disk
    /// instead of synthesized.
    pub manifest: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            recordings_per_class: 6,
            window_len: 1024,
            overlap: 0.5,
            test_fraction: 0.2,
            format: DataFormat::Csv,
            manifest: None,
        }
    }
}

/// Model architecture: fusion variant/dims, head widths, dropout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSection {
    pub fusion: FusionKind,
    pub hidden: Vec<usize>,
    pub dropout: f64,
}

impl Default for ArchSection {
    fn default() -> Self {
        Self {
            fusion: FusionKind::Cp { rank: 32 },
            hidden: vec![64, 32],
            dropout: 0.3,
        }
    }
}

/// Training protocol. Carries no seed: the master seed is used directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub scheduler: SchedulerConfig,
    pub adam: AdamConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            learning_rate: base.learning_rate,
            batch_size: base.batch_size,
            epochs: base.epochs,
            scheduler: base.scheduler,
            adam: base.adam,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            scheduler: self.scheduler,
            adam: self.adam,
            seed,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Model architecture implied by this config: the input length comes
    /// from the window length, classes from the label set.
    pub fn arch_config(&self) -> ArchConfig {
        ArchConfig {
            input_len: self.data.window_len,
            fusion: self.arch.fusion,
            hidden: self.arch.hidden.clone(),
            dropout: self.arch.dropout,
            num_classes: ClassLabel::COUNT,
        }
    }
}
