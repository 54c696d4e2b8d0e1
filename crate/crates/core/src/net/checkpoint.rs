//! Parameter checkpoints: a flat little-endian `f64` blob (in
//! [`NetworkParams::flatten`] order) plus a JSON manifest describing shapes.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, DenseLayer, NetError, NetworkParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub layout: String,
    pub hidden: Vec<LayerShape>,
    pub last_rows: usize,
    pub last_cols: usize,
    pub last_bias: bool,
    pub parameter_count: usize,
}

const FORMAT: &str = "f64-le";
const LAYOUT: &str = "per hidden layer: weight row-major then bias; then last weight row-major; then last bias";

fn paths(base: &Path) -> (PathBuf, PathBuf) {
    (base.with_extension("bin"), base.with_extension("json"))
}

/// Writes `<base>.bin` and `<base>.json`. Returns the two paths.
pub fn save_checkpoint(params: &NetworkParams, base: &Path) -> Result<(PathBuf, PathBuf), NetError> {
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        layout: LAYOUT.into(),
        hidden: params
            .hidden
            .iter()
            .map(|l| LayerShape {
                rows: l.weight.nrows(),
                cols: l.weight.ncols(),
                activation: l.activation,
            })
            .collect(),
        last_rows: params.last_weight.nrows(),
        last_cols: params.last_weight.ncols(),
        last_bias: params.last_bias.is_some(),
        parameter_count: params.parameter_count(),
    };
    let flat = params.flatten();
    let mut bytes = Vec::with_capacity(flat.len() * 8);
    for v in flat {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let (bin, json) = paths(base);
    fs::write(&bin, bytes)?;
    fs::write(&json, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok((bin, json))
}

pub fn load_checkpoint(base: &Path) -> Result<NetworkParams, NetError> {
    let (bin, json) = paths(base);
    let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(&json)?)?;
    if manifest.format != FORMAT {
        return Err(NetError::Checkpoint(format!("unsupported format `{}`", manifest.format)));
    }
    let bytes = fs::read(&bin)?;
    if bytes.len() != manifest.parameter_count * 8 {
        return Err(NetError::Checkpoint(format!(
            "{} bytes for {} parameters",
            bytes.len(),
            manifest.parameter_count
        )));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut params = NetworkParams {
        hidden: manifest
            .hidden
            .iter()
            .map(|s| DenseLayer {
                weight: Array2::zeros((s.rows, s.cols)),
                bias: Array1::zeros(s.rows),
                activation: s.activation,
            })
            .collect(),
        last_weight: Array2::zeros((manifest.last_rows, manifest.last_cols)),
        last_bias: manifest.last_bias.then(|| Array1::zeros(manifest.last_rows)),
    };
    params.assign_flat(&flat)?;
    params.validate()?;
    Ok(params)
}
