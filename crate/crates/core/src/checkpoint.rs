//! Versioned model checkpoints: JSON with a format tag, the architecture,
//! every parameter tensor in declared order, and the batchnorm running
//! statistics. JSON floats use the shortest round-trip form, so save/load
//! is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NfcError, Result};
use crate::model::{ArchConfig, NfcModel};

pub const CHECKPOINT_FORMAT: &str = "nfc-checkpoint-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunningStats {
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// Serialized model: format tag, architecture, parameters, running stats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    format: String,
    arch: ArchConfig,
    params: Vec<NamedTensor>,
    running_stats: Vec<RunningStats>,
}

impl Checkpoint {
    pub fn from_model(model: &NfcModel) -> Self {
        let params = model
            .param_tensors()
            .into_iter()
            .map(|(name, data)| NamedTensor {
                name,
                rows: 1,
                cols: data.len(),
                data: data.to_vec(),
            })
            .collect();
        let running_stats = model
            .blocks
            .iter()
            .map(|blk| RunningStats {
                mean: blk.bn_running_mean.clone(),
                var: blk.bn_running_var.clone(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            arch: model.arch().clone(),
            params,
            running_stats,
        }
    }

    pub fn into_model(self) -> Result<NfcModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(NfcError::Data(format!(
                "unsupported checkpoint format {:?}, expected {CHECKPOINT_FORMAT:?}",
                self.format
            )));
        }
        let mut model = NfcModel::zeroed(self.arch)?;
        {
            let mut tensors = model.param_tensors_mut();
            if tensors.len() != self.params.len() {
                return Err(NfcError::Data(format!(
                    "checkpoint has {} parameter tensors, architecture implies {}",
                    self.params.len(),
                    tensors.len()
                )));
            }
            for ((name, slot), stored) in tensors.iter_mut().zip(&self.params) {
                if *name != stored.name {
                    return Err(NfcError::Data(format!(
                        "checkpoint tensor {:?} where {:?} was expected",
                        stored.name, name
                    )));
                }
                if slot.len() != stored.data.len() {
                    return Err(NfcError::Data(format!(
                        "tensor {name} has {} values, architecture implies {}",
                        stored.data.len(),
                        slot.len()
                    )));
                }
                slot.copy_from_slice(&stored.data);
            }
        }
        if self.running_stats.len() != model.blocks.len() {
            return Err(NfcError::Data(format!(
                "checkpoint has running stats for {} blocks, architecture implies {}",
                self.running_stats.len(),
                model.blocks.len()
            )));
        }
        for (blk, stats) in model.blocks.iter_mut().zip(&self.running_stats) {
            if stats.mean.len() != blk.out_dim() || stats.var.len() != blk.out_dim() {
                return Err(NfcError::Data(
                    "running statistics length does not match block width".into(),
                ));
            }
            if stats.var.iter().any(|&v| v < 0.0) {
                return Err(NfcError::Data("negative running variance".into()));
            }
            blk.bn_running_mean = stats.mean.clone();
            blk.bn_running_var = stats.var.clone();
        }
        Ok(model)
    }
}

pub fn save_model(model: &NfcModel, path: &Path) -> Result<()> {
    let cp = Checkpoint::from_model(model);
    let json = serde_json::to_string_pretty(&cp)?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<NfcModel> {
    let text = fs::read_to_string(path)?;
    let cp: Checkpoint = serde_json::from_str(&text)?;
    cp.into_model()
}

/// Parameter tensor names present in a checkpoint file, in order.
pub fn checkpoint_tensor_names(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    let cp: Checkpoint = serde_json::from_str(&text)?;
    Ok(cp.params.into_iter().map(|t| t.name).collect())
}
