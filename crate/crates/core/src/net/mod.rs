//! A fully connected network split into a transformation `h(x; phi)` (the
//! hidden layers) and a linear last layer `W delta + b`.
//!
//! All batch computations use column-major sample layout: inputs are `d x N`,
//! features `t x N` and logits `K x N`, matching [`crate::data::LabeledDataset`].

mod backprop;
mod checkpoint;
mod loss;
mod train;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::backprop::{gradient, last_layer_gradient};
pub use self::checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use self::loss::{logit_loss_and_grad, loss_eval, max_step_size, step_size_bound, LossKind};
pub use self::train::{
    train, AutoStep, Optimizer, Snapshot, SnapshotSchedule, TrainConfig, TrainError, TrainingTrace,
};

use crate::data::LabeledDataset;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("loss {loss} is incompatible with {outputs} output(s) and {classes} classes")]
    IncompatibleLoss {
        loss: LossKind,
        outputs: usize,
        classes: usize,
    },
    #[error("numerical overflow: {0}")]
    NumericalOverflow(String),
    #[error("step-size bound is not defined for {0} loss")]
    NoStepBound(LossKind),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    /// `a(u) = u^2`
    Square,
}

impl Activation {
    pub fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Identity => u,
            Activation::Relu => u.max(0.0),
            Activation::Square => u * u,
        }
    }

    /// Derivative; the ReLU kink uses the subgradient 0.
    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Square => 2.0 * u,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Square => "square",
        })
    }
}

impl FromStr for Activation {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "square" => Ok(Activation::Square),
            other => Err(NetError::InvalidConfig(format!("unknown activation `{other}`"))),
        }
    }
}

/// Affine layer followed by an elementwise activation. `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    /// Pre-activations `W a + b` for a batch of columns.
    pub fn pre_activation(&self, inputs: &Array2<f64>) -> Array2<f64> {
        let mut z = self.weight.dot(inputs);
        z += &self.bias.view().insert_axis(Axis(1));
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

/// Layer sizes of a network: `input_dim -> hidden[0] -> ... -> hidden[-1] -> outputs`.
/// The last hidden width is the feature dimension `t`; with no hidden layers
/// the features are the inputs themselves (plain linear/logistic regression).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<LayerSpec>,
    pub outputs: usize,
    pub last_bias: bool,
}

impl Architecture {
    pub fn feature_dim(&self) -> usize {
        self.hidden.last().map_or(self.input_dim, |l| l.width)
    }

    /// One ReLU hidden layer of `width` units followed by a linear map to a
    /// `feature_dim`-dimensional transformed space.
    pub fn two_stage(input_dim: usize, width: usize, feature_dim: usize, outputs: usize, last_bias: bool) -> Self {
        Self {
            input_dim,
            hidden: vec![
                LayerSpec {
                    width,
                    activation: Activation::Relu,
                },
                LayerSpec {
                    width: feature_dim,
                    activation: Activation::Identity,
                },
            ],
            outputs,
            last_bias,
        }
    }

    /// Last layer only, on the raw inputs.
    pub fn linear(input_dim: usize, outputs: usize, last_bias: bool) -> Self {
        Self {
            input_dim,
            hidden: Vec::new(),
            outputs,
            last_bias,
        }
    }
}

/// Network parameters `theta = (phi, W)`: hidden layers realise `phi`, the
/// last layer is `W` (`K x t`) with an optional bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub hidden: Vec<DenseLayer>,
    pub last_weight: Array2<f64>,
    pub last_bias: Option<Array1<f64>>,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..=limit))
}

impl NetworkParams {
    /// Glorot-uniform weights, zero biases, drawn from `ChaCha8Rng(seed)`.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = arch.input_dim;
        let mut hidden = Vec::with_capacity(arch.hidden.len());
        for spec in &arch.hidden {
            hidden.push(DenseLayer {
                weight: glorot(&mut rng, spec.width, fan_in),
                bias: Array1::zeros(spec.width),
                activation: spec.activation,
            });
            fan_in = spec.width;
        }
        let last_weight = glorot(&mut rng, arch.outputs, fan_in);
        Self {
            hidden,
            last_weight,
            last_bias: arch.last_bias.then(|| Array1::zeros(arch.outputs)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.first().map_or(self.last_weight.ncols(), |l| l.input_dim())
    }

    pub fn feature_dim(&self) -> usize {
        self.last_weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.last_weight.nrows()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.input_dim(),
            hidden: self
                .hidden
                .iter()
                .map(|l| LayerSpec {
                    width: l.output_dim(),
                    activation: l.activation,
                })
                .collect(),
            outputs: self.output_dim(),
            last_bias: self.last_bias.is_some(),
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let mut dim = self.input_dim();
        for (i, layer) in self.hidden.iter().enumerate() {
            if layer.input_dim() != dim || layer.bias.len() != layer.output_dim() {
                return Err(NetError::Shape(format!("hidden layer {i} does not compose")));
            }
            dim = layer.output_dim();
        }
        if self.last_weight.ncols() != dim {
            return Err(NetError::Shape(format!(
                "last layer expects {} features, transformation yields {dim}",
                self.last_weight.ncols()
            )));
        }
        if let Some(b) = &self.last_bias {
            if b.len() != self.output_dim() {
                return Err(NetError::Shape("last bias length".into()));
            }
        }
        if self.flatten().iter().any(|v| !v.is_finite()) {
            return Err(NetError::NumericalOverflow("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Same shapes, all entries zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.map_inplace(|_| 0.0);
        z
    }

    pub fn parameter_count(&self) -> usize {
        self.hidden.iter().map(|l| l.weight.len() + l.bias.len()).sum::<usize>()
            + self.last_weight.len()
            + self.last_bias.as_ref().map_or(0, |b| b.len())
    }

    /// All parameters in a fixed order: each hidden layer's weight (row-major)
    /// then bias, then the last weight (row-major), then the last bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.hidden {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out.extend(self.last_weight.iter());
        if let Some(b) = &self.last_bias {
            out.extend(b.iter());
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<(), NetError> {
        if flat.len() != self.parameter_count() {
            return Err(NetError::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.parameter_count()
            )));
        }
        let mut it = flat.iter().copied();
        self.map_inplace(|_| it.next().unwrap());
        Ok(())
    }

    fn map_inplace(&mut self, mut f: impl FnMut(f64) -> f64) {
        for l in &mut self.hidden {
            l.weight.iter_mut().for_each(|v| *v = f(*v));
            l.bias.iter_mut().for_each(|v| *v = f(*v));
        }
        self.last_weight.iter_mut().for_each(|v| *v = f(*v));
        if let Some(b) = &mut self.last_bias {
            b.iter_mut().for_each(|v| *v = f(*v));
        }
    }

    fn zip_inplace(&mut self, other: &NetworkParams, mut f: impl FnMut(f64, f64) -> f64) {
        for (l, o) in self.hidden.iter_mut().zip(&other.hidden) {
            l.weight.zip_mut_with(&o.weight, |a, &b| *a = f(*a, b));
            l.bias.zip_mut_with(&o.bias, |a, &b| *a = f(*a, b));
        }
        self.last_weight.zip_mut_with(&other.last_weight, |a, &b| *a = f(*a, b));
        if let (Some(b), Some(ob)) = (&mut self.last_bias, &other.last_bias) {
            b.zip_mut_with(ob, |a, &c| *a = f(*a, c));
        }
    }

    /// `self += alpha * other` (shapes must match).
    pub fn axpy(&mut self, alpha: f64, other: &NetworkParams) {
        self.zip_inplace(other, |a, b| a + alpha * b);
    }

    pub fn scale(&mut self, factor: f64) {
        self.map_inplace(|v| v * factor);
    }

    /// Features `h(x; phi)` for a batch of inputs (`d x N` to `t x N`).
    pub fn feature_matrix(&self, inputs: &Array2<f64>) -> Result<Array2<f64>, NetError> {
        if inputs.nrows() != self.input_dim() {
            return Err(NetError::Shape(format!(
                "input dimension {} but network expects {}",
                inputs.nrows(),
                self.input_dim()
            )));
        }
        let mut a = inputs.to_owned();
        for layer in &self.hidden {
            let act = layer.activation;
            a = layer.pre_activation(&a).mapv_into(|u| act.apply(u));
        }
        Ok(a)
    }

    /// Last-layer logits for a feature batch (`t x N` to `K x N`).
    pub fn logits_from_features(&self, features: &Array2<f64>) -> Array2<f64> {
        let mut z = self.last_weight.dot(features);
        if let Some(b) = &self.last_bias {
            z += &b.view().insert_axis(Axis(1));
        }
        z
    }

    pub fn logit_matrix(&self, inputs: &Array2<f64>) -> Result<Array2<f64>, NetError> {
        Ok(self.logits_from_features(&self.feature_matrix(inputs)?))
    }

    /// Predicted class labels (`1..=K`; binary networks predict 1 when the
    /// logit is positive).
    pub fn predict(&self, inputs: &Array2<f64>) -> Result<Vec<usize>, NetError> {
        let z = self.logit_matrix(inputs)?;
        Ok(logits_to_labels(&z))
    }
}

pub fn logits_to_labels(z: &Array2<f64>) -> Vec<usize> {
    z.columns()
        .into_iter()
        .map(|col| {
            if col.len() == 1 {
                if col[0] > 0.0 {
                    1
                } else {
                    2
                }
            } else {
                1 + col
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                    .0
            }
        })
        .collect()
}

/// Last-hidden-layer activation `delta = h(x; phi)` for a single input.
pub fn features(params: &NetworkParams, x: ArrayView1<f64>) -> Result<Array1<f64>, NetError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NetError::Shape("non-finite input".into()));
    }
    let batch = x.to_owned().insert_axis(Axis(1));
    Ok(params.feature_matrix(&batch)?.column(0).to_owned())
}

/// Logits `W delta + b` for a single input.
pub fn forward(params: &NetworkParams, x: ArrayView1<f64>) -> Result<Array1<f64>, NetError> {
    let delta = features(params, x)?.insert_axis(Axis(1));
    Ok(params.logits_from_features(&delta).column(0).to_owned())
}

/// Feature matrix of a whole dataset.
pub fn dataset_features(params: &NetworkParams, ds: &LabeledDataset) -> Result<Array2<f64>, NetError> {
    params.feature_matrix(ds.points())
}
