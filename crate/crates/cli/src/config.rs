use std::path::{Path, PathBuf};

use lastlayer::data::DatasetSpec;
use lastlayer::net::{Activation, Architecture, AutoStep, LayerSpec, LossKind, Optimizer, SnapshotSchedule, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Output directory used when neither the config nor the command line names one.
pub const OUT_DIR_ENV: &str = "LASTLAYER_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "lastlayer-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub architecture: ArchitectureConfig,
    pub train: TrainSection,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

fn all_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json, Format::Svg]
}

/// `input -> hidden[0] -> ... -> hidden[-1] (activation) -> feature_dim (identity) -> outputs`.
/// `feature_dim = 0` makes the last hidden layer the feature layer; an empty
/// `hidden` list with `feature_dim = 0` is plain logistic regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_true")]
    pub last_bias: bool,
    #[serde(default)]
    pub init_seed: u64,
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_activation() -> Activation {
    Activation::Relu
}
fn default_feature_dim() -> usize {
    2
}
fn default_true() -> bool {
    true
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            activation: default_activation(),
            feature_dim: default_feature_dim(),
            last_bias: true,
            init_seed: 0,
        }
    }
}

impl ArchitectureConfig {
    pub fn build(&self, input_dim: usize, outputs: usize) -> Architecture {
        let mut hidden: Vec<LayerSpec> = self
            .hidden
            .iter()
            .map(|&width| LayerSpec {
                width,
                activation: self.activation,
            })
            .collect();
        if self.feature_dim > 0 {
            hidden.push(LayerSpec {
                width: self.feature_dim,
                activation: Activation::Identity,
            });
        }
        Architecture {
            input_dim,
            hidden,
            outputs,
            last_bias: self.last_bias,
        }
    }
}

/// Training settings. Exactly one of `learning_rate` and `step_fraction`
/// must be given; the latter sets the rate to that fraction of
/// `max_step_size` at the initial parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub loss: LossKind,
    #[serde(default = "default_optimizer")]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub step_fraction: Option<f64>,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub max_iterations: u64,
    #[serde(default)]
    pub snapshots: SnapshotSchedule,
    #[serde(default)]
    pub loss_stop_threshold: f64,
    #[serde(default)]
    pub extension_factor: Option<f64>,
    #[serde(default)]
    pub auto_step: Option<AutoStep>,
    #[serde(default)]
    pub seed: u64,
}

fn default_optimizer() -> Optimizer {
    Optimizer::Gd
}
fn default_batch() -> usize {
    32
}

impl TrainSection {
    /// The core training config, given the resolved learning rate.
    pub fn to_train_config(&self, learning_rate: f64) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            optimizer: self.optimizer,
            learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            max_iterations: self.max_iterations,
            snapshots: self.snapshots.clone(),
            loss_stop_threshold: self.loss_stop_threshold,
            extension_factor: self.extension_factor,
            auto_step: self.auto_step,
            train_hidden: true,
            record_params: false,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
    #[serde(default = "default_resolution")]
    pub grid_resolution: [usize; 2],
    /// Fraction of the feature bounding box added around it for grids.
    #[serde(default = "default_expand")]
    pub bounds_expand: f64,
    #[serde(default = "default_alignment")]
    pub alignment_threshold: f64,
    #[serde(default)]
    pub agreement_threshold: Option<f64>,
    #[serde(default)]
    pub angle_threshold_deg: Option<f64>,
    #[serde(default = "default_divergence")]
    pub divergence_threshold: f64,
    /// When set, norm divergence is a pass/fail check.
    #[serde(default)]
    pub require_divergence: bool,
    #[serde(default)]
    pub r_squared_threshold: Option<f64>,
    #[serde(default)]
    pub support_share_threshold: Option<f64>,
    /// Minimum agreement between the input-space network boundary and its
    /// best linear fit on `[0, 1]^2` (binary only).
    #[serde(default)]
    pub input_linear_threshold: Option<f64>,
    /// Re-solve the SVM on every snapshot's features (binary networks only
    /// record the final features, so this needs the checkpointed path).
    #[serde(default)]
    pub moving_target: bool,
    /// Freeze the features, reinitialize the last layer and retrain it.
    #[serde(default)]
    pub retrain_last_layer: bool,
    /// Emit the input-space grid at three zoom levels.
    #[serde(default)]
    pub appendix: bool,
}

fn default_tail() -> f64 {
    0.5
}
fn default_resolution() -> [usize; 2] {
    [100, 100]
}
fn default_expand() -> f64 {
    0.2
}
fn default_alignment() -> f64 {
    0.98
}
fn default_divergence() -> f64 {
    lastlayer::analysis::DEFAULT_DIVERGENCE_THRESHOLD
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            tail_fraction: default_tail(),
            grid_resolution: default_resolution(),
            bounds_expand: default_expand(),
            alignment_threshold: default_alignment(),
            agreement_threshold: None,
            angle_threshold_deg: None,
            divergence_threshold: default_divergence(),
            require_divergence: false,
            r_squared_threshold: None,
            support_share_threshold: None,
            input_linear_threshold: None,
            moving_target: false,
            retrain_last_layer: false,
            appendix: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Invalid(m));
        self.dataset.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        let a = &self.analysis;
        let unit = |name: &str, v: f64| -> Result<(), CliError> {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                bad(format!("analysis.{name} must lie in (0, 1], got {v}"))
            }
        };
        unit("tail_fraction", a.tail_fraction)?;
        unit("alignment_threshold", a.alignment_threshold)?;
        for (name, v) in [
            ("agreement_threshold", a.agreement_threshold),
            ("r_squared_threshold", a.r_squared_threshold),
            ("support_share_threshold", a.support_share_threshold),
            ("input_linear_threshold", a.input_linear_threshold),
        ] {
            if let Some(v) = v {
                unit(name, v)?;
            }
        }
        if a.grid_resolution.iter().any(|&r| r < 2) {
            return bad("analysis.grid_resolution must be at least [2, 2]".into());
        }
        if !(a.bounds_expand >= 0.0 && a.bounds_expand.is_finite()) {
            return bad("analysis.bounds_expand must be >= 0".into());
        }
        if !(a.divergence_threshold > 0.0) {
            return bad("analysis.divergence_threshold must be positive".into());
        }
        if let Some(deg) = a.angle_threshold_deg {
            if !(0.0..=180.0).contains(&deg) {
                return bad(format!("analysis.angle_threshold_deg must lie in [0, 180], got {deg}"));
            }
        }
        let t = &self.train;
        match (t.learning_rate, t.step_fraction) {
            (Some(_), Some(_)) | (None, None) => {
                return bad("train: give exactly one of learning_rate and step_fraction".into())
            }
            (None, Some(f)) if !(f > 0.0 && f.is_finite()) => {
                return bad(format!("train.step_fraction must be positive, got {f}"))
            }
            _ => {}
        }
        if self.architecture.hidden.contains(&0) {
            return bad("architecture.hidden widths must be positive".into());
        }
        if self.formats.is_empty() {
            return bad("formats must name at least one of csv, json, svg".into());
        }
        t.to_train_config(t.learning_rate.unwrap_or(1.0))
            .validate()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        t.loss
            .check(t.loss.outputs_for(self.dataset.class_count), self.dataset.class_count)
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Command line beats config, config beats `LASTLAYER_OUT_DIR`.
pub fn resolve_out_dir(cli: Option<&Path>, config: Option<&Path>) -> PathBuf {
    if let Some(p) = cli.or(config) {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(FALLBACK_OUT_DIR),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[dataset]
family = "moon"
sample_count = 40
scale = 1.0

[train]
loss = "logistic"
learning_rate = 0.003
max_iterations = 100
"#;

    #[test]
    fn minimal_config_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.architecture.hidden, vec![64]);
        assert!(cfg.architecture.last_bias);
        assert_eq!(cfg.analysis.grid_resolution, [100, 100]);
        assert_eq!(cfg.formats.len(), 3);
        let arch = cfg.architecture.build(2, 1);
        assert_eq!(arch.hidden.len(), 2);
        assert_eq!(arch.feature_dim(), 2);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rejects_bad_values() {
        let with = |extra: &str| ExperimentConfig::from_toml(&format!("{MINIMAL}\n{extra}"));
        assert!(with("[analysis]\nalignment_threshold = 1.5").is_err());
        assert!(with("[analysis]\ngrid_resolution = [1, 5]").is_err());
        assert!(with("[analysis]\nunknown = 1").is_err());
        let both = MINIMAL.replace("learning_rate = 0.003", "learning_rate = 0.003\nstep_fraction = 0.9");
        assert!(ExperimentConfig::from_toml(&both).is_err());
        let ce = MINIMAL.replace("logistic", "cross-entropy");
        assert!(ExperimentConfig::from_toml(&ce).is_ok());
        let exp3 = MINIMAL.replace("\"moon\"", "\"multiclass-blob\"\nclass_count = 3");
        assert!(ExperimentConfig::from_toml(&exp3).is_err());
    }

    #[test]
    fn out_dir_precedence() {
        let a = Path::new("a");
        let b = Path::new("b");
        assert_eq!(resolve_out_dir(Some(a), Some(b)), a);
        assert_eq!(resolve_out_dir(None, Some(b)), b);
    }
}
