use std::fs;
use std::path::Path;

use lastlayer::analysis::{Bounds, NormDivergence};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One thresholded check: `value <op> threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub op: String,
    pub passed: bool,
}

impl Check {
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self::new(name, value, threshold, ">=", value >= threshold)
    }

    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self::new(name, value, threshold, "<=", value <= threshold)
    }

    pub fn above(name: &str, value: f64, threshold: f64) -> Self {
        Self::new(name, value, threshold, ">", value > threshold)
    }

    /// A boolean condition recorded as 1.0 / 0.0 against 1.0.
    pub fn holds(name: &str, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, 1.0, "==", ok)
    }

    fn new(name: &str, value: f64, threshold: f64, op: &str, passed: bool) -> Self {
        Self {
            name: name.to_string(),
            value,
            threshold,
            op: op.to_string(),
            passed: passed && value.is_finite(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {:.6} {} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.op,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub family: String,
    pub sample_count: usize,
    pub scale: f64,
    pub class_count: usize,
    pub seed: u64,
    pub input_separable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub loss: String,
    pub learning_rate: f64,
    pub converged: bool,
    pub converged_at: Option<u64>,
    pub iterations: u64,
    pub final_loss: f64,
    pub final_weight_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub dim: usize,
    pub separable: bool,
    pub lp_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmSummary {
    pub kind: String,
    pub weights: Vec<Vec<f64>>,
    pub min_margin: f64,
    pub support_count: usize,
    pub degenerate: bool,
    pub kkt_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSummary {
    pub per_class_cosine: Vec<f64>,
    pub final_angle_deg: Vec<f64>,
    pub min_cosine: f64,
    pub moving_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFitSummary {
    pub r_squared: f64,
    pub residual_bounded: bool,
    pub slope: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub support_share: f64,
    pub support_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub resolution: [usize; 2],
    pub bounds: Bounds,
    /// Fraction of cells where both classifiers agree.
    pub agreement: Option<f64>,
    pub normal_angle_deg: Option<f64>,
    /// Agreement of the first classifier with its best single line.
    pub linear_fit_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainSummary {
    pub whole_network_bias_gap: Option<f64>,
    pub retrained_bias_gap: Option<f64>,
    pub retrained_cosine: f64,
    pub retrained_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub dataset: DatasetSummary,
    pub train: TrainSummary,
    pub features: FeatureSummary,
    pub svm: SvmSummary,
    pub alignment: AlignmentSummary,
    pub log_fit: Option<LogFitSummary>,
    pub norm_divergence: NormDivergence,
    pub gradient_decomposition: Option<DecompositionSummary>,
    pub feature_grid: Option<GridSummary>,
    pub input_grid: Option<GridSummary>,
    /// Input-space grids at increasing zoom-out factors (appendix mode).
    pub appendix: Vec<GridSummary>,
    pub retraining: Option<RetrainSummary>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Invalid(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_lines() {
        assert!(Check::at_least("a", 0.99, 0.98).passed);
        assert!(!Check::at_most("b", 6.0, 5.0).passed);
        assert!(!Check::above("c", 1.5, 1.5).passed);
        assert!(!Check::at_least("nan", f64::NAN, 0.0).passed);
        assert_eq!(Check::holds("d", true).line(), "PASS d: 1.000000 == 1");
    }
}
