use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::data::label_sign;
use crate::net::{logit_loss_and_grad, LossKind, NetworkParams};
use crate::svm::SvmSolution;

const TOP_CONTRIBUTORS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientDecomposition {
    /// Norm of each sample's term in the last-layer weight gradient. Terms
    /// far below the largest may underflow to zero here; the share below is
    /// computed in log space and is unaffected.
    pub per_sample_contribution: Vec<f64>,
    /// Natural log of each contribution (`-inf` only for a zero feature).
    pub log_contribution: Vec<f64>,
    pub support_share: f64,
    /// Largest contributors first, at most 20.
    pub top_contributors: Vec<usize>,
    pub support_indices: Vec<usize>,
}

/// Splits `-dL/dW` (last layer, features held fixed) into per-sample terms
/// and measures how much of the total comes from SVM support vectors.
pub fn gradient_decomposition(
    params: &NetworkParams,
    features: &Array2<f64>,
    labels: &[usize],
    kind: LossKind,
    svm: &SvmSolution,
) -> Result<GradientDecomposition, AnalysisError> {
    let n = check(params, features, labels)?;
    let logits = params.logits_from_features(features);
    let log_contribution: Vec<f64> = (0..n)
        .map(|c| {
            let col = logits.column(c);
            let feat = features.column(c);
            log_logit_grad_norm(col.to_vec().as_slice(), labels[c], kind) + 0.5 * feat.dot(&feat).ln()
        })
        .collect();

    let top = log_contribution.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_contribution
        .iter()
        .map(|&l| if top.is_finite() { (l - top).exp() } else { 0.0 })
        .collect();
    let support = svm.support_indices();
    if let Some(&bad) = support.iter().find(|&&i| i >= n) {
        return Err(AnalysisError::Shape(format!("support index {bad} out of range for {n} samples")));
    }
    let total: f64 = weights.iter().sum();
    let on_support: f64 = support.iter().map(|&i| weights[i]).sum();
    let support_share = if total > 0.0 { (on_support / total).clamp(0.0, 1.0) } else { 0.0 };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| log_contribution[b].total_cmp(&log_contribution[a]).then(a.cmp(&b)));
    order.truncate(TOP_CONTRIBUTORS);
    Ok(GradientDecomposition {
        per_sample_contribution: log_contribution.iter().map(|l| l.exp()).collect(),
        log_contribution,
        support_share,
        top_contributors: order,
        support_indices: support,
    })
}

/// The per-sample terms `-dl_n/dz_n  delta_n^T` of the negated last-layer
/// weight gradient; they sum to `-dL/dW`.
pub fn sample_terms(
    params: &NetworkParams,
    features: &Array2<f64>,
    labels: &[usize],
    kind: LossKind,
) -> Result<Vec<Array2<f64>>, AnalysisError> {
    let n = check(params, features, labels)?;
    let logits = params.logits_from_features(features);
    let (_, g) = logit_loss_and_grad(&logits, labels, kind, true)?;
    let g = g.expect("gradient requested");
    Ok((0..n)
        .map(|c| {
            let gc = g.column(c).to_owned().insert_axis(ndarray::Axis(1));
            let fc = features.column(c).to_owned().insert_axis(ndarray::Axis(0));
            -gc.dot(&fc)
        })
        .collect())
}

fn check(params: &NetworkParams, features: &Array2<f64>, labels: &[usize]) -> Result<usize, AnalysisError> {
    if features.nrows() != params.feature_dim() {
        return Err(AnalysisError::Shape(format!(
            "features have {} rows, last layer expects {}",
            features.nrows(),
            params.feature_dim()
        )));
    }
    if labels.len() != features.ncols() {
        return Err(AnalysisError::Shape(format!(
            "{} labels for {} samples",
            labels.len(),
            features.ncols()
        )));
    }
    Ok(labels.len())
}

/// `ln |dl/dz|` for one sample without forming the (possibly underflowing)
/// derivative itself.
fn log_logit_grad_norm(z: &[f64], label: usize, kind: LossKind) -> f64 {
    match kind {
        LossKind::Exponential => -label_sign(label) * z[0],
        LossKind::Logistic => {
            // |dl/du| = 1 / (1 + e^u)
            let u = label_sign(label) * z[0];
            -(u.max(0.0) + (-u.abs()).exp().ln_1p())
        }
        LossKind::CrossEntropy => {
            let y = label - 1;
            let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = top + z.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
            let logp: Array1<f64> = z.iter().map(|v| v - lse).collect();
            let m = (0..z.len()).filter(|&k| k != y).map(|k| logp[k]).fold(f64::NEG_INFINITY, f64::max);
            if !m.is_finite() {
                return f64::NEG_INFINITY;
            }
            let q: Vec<f64> = (0..z.len()).filter(|&k| k != y).map(|k| (logp[k] - m).exp()).collect();
            let s: f64 = q.iter().sum();
            let sq: f64 = q.iter().map(|v| v * v).sum();
            m + 0.5 * (sq + s * s).ln()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Architecture;
    use crate::svm::BinarySvmSolution;
    use ndarray::array;

    fn linear(w: Array2<f64>) -> NetworkParams {
        let mut p = NetworkParams::init(&Architecture::linear(w.ncols(), w.nrows(), false), 0);
        p.last_weight = w;
        p
    }

    fn binary_svm(support: Vec<usize>, n: usize) -> SvmSolution {
        SvmSolution::Binary(BinarySvmSolution {
            weight: array![1.0, 0.0],
            dual_coeffs: Array1::zeros(n),
            support_indices: support,
            min_margin: 1.0,
            degenerate: false,
        })
    }

    #[test]
    fn single_sample_owns_everything() {
        let p = linear(array![[1.0, 0.0]]);
        let d = gradient_decomposition(&p, &array![[2.0], [0.0]], &[1], LossKind::Exponential, &binary_svm(vec![0], 1))
            .unwrap();
        assert_eq!(d.support_share, 1.0);
    }

    #[test]
    fn exponent_arithmetic() {
        // unit-norm features with margins 1 and 10
        let p = linear(array![[1.0, 0.0]]);
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let mut p2 = p.clone();
        p2.last_weight = array![[1.0, 10.0]];
        let d = gradient_decomposition(&p2, &x, &[1, 1], LossKind::Exponential, &binary_svm(vec![0], 2)).unwrap();
        let ratio = d.per_sample_contribution[1] / d.per_sample_contribution[0];
        assert!((ratio - (-9.0f64).exp()).abs() < 1e-15);
        let expect = (-1.0f64).exp() / ((-1.0f64).exp() + (-10.0f64).exp());
        assert!((d.support_share - expect).abs() < 1e-12);
        assert!((d.support_share - 0.99988).abs() < 1e-5);
        assert_eq!(d.top_contributors, vec![0, 1]);
    }

    #[test]
    fn terms_sum_to_negative_gradient() {
        let p = linear(array![[0.3, -0.7]]);
        let x = array![[1.0, -2.0, 0.5], [0.2, 0.4, -1.5]];
        let labels = [1, 2, 1];
        for kind in [LossKind::Exponential, LossKind::Logistic] {
            let terms = sample_terms(&p, &x, &labels, kind).unwrap();
            let total = terms.iter().fold(Array2::<f64>::zeros((1, 2)), |acc, t| acc + t);
            let (_, dw, _) = crate::net::last_layer_gradient(&p, &x, &labels, kind).unwrap();
            for (a, b) in total.iter().zip(dw.iter()) {
                assert!((a + b).abs() < 1e-12);
            }
            let logs = gradient_decomposition(&p, &x, &labels, kind, &binary_svm(vec![], 3)).unwrap();
            for (t, l) in terms.iter().zip(&logs.log_contribution) {
                let direct = t.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((direct.ln() - l).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_entropy_log_norm_matches_direct() {
        let z = [2.0, -1.0, 0.5];
        let s: f64 = z.iter().map(|v: &f64| v.exp()).sum();
        let p: Vec<f64> = z.iter().map(|v| v.exp() / s).collect();
        let direct = (p[0] * p[0] + p[2] * p[2] + (p[1] - 1.0).powi(2)).sqrt();
        assert!((log_logit_grad_norm(&z, 2, LossKind::CrossEntropy) - direct.ln()).abs() < 1e-12);
        // dominant class far ahead: direct form underflows, log form does not
        let far = [1000.0, 0.0, -5.0];
        let l = log_logit_grad_norm(&far, 1, LossKind::CrossEntropy);
        assert!(l.is_finite() && l < -990.0);
    }
}
