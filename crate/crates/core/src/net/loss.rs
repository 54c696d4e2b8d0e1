//! Summed empirical losses on last-layer logits.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{NetError, NetworkParams};
use crate::data::{label_sign, sigma_max, LabeledDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `sum_n exp(-y_n z_n)`, single logit, labels mapped to +-1.
    Exponential,
    /// `sum_n log(1 + exp(-y_n z_n))`, single logit.
    Logistic,
    /// `-sum_n log softmax(z_n)_{y_n}`, one logit per class.
    CrossEntropy,
}

impl LossKind {
    pub fn is_binary(self) -> bool {
        !matches!(self, LossKind::CrossEntropy)
    }

    /// Number of logits this loss expects for a `class_count`-class problem.
    pub fn outputs_for(self, class_count: usize) -> usize {
        if self.is_binary() {
            1
        } else {
            class_count
        }
    }

    pub fn check(self, outputs: usize, classes: usize) -> Result<(), NetError> {
        let ok = match self {
            LossKind::Exponential | LossKind::Logistic => outputs == 1 && classes == 2,
            LossKind::CrossEntropy => classes >= 2 && outputs == classes,
        };
        if ok {
            Ok(())
        } else {
            Err(NetError::IncompatibleLoss {
                loss: self,
                outputs,
                classes,
            })
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Exponential => "exponential",
            LossKind::Logistic => "logistic",
            LossKind::CrossEntropy => "cross-entropy",
        })
    }
}

impl FromStr for LossKind {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "exponential" | "exp" => Ok(LossKind::Exponential),
            "logistic" => Ok(LossKind::Logistic),
            "cross-entropy" | "crossentropy" | "ce" => Ok(LossKind::CrossEntropy),
            other => Err(NetError::InvalidConfig(format!("unknown loss `{other}`"))),
        }
    }
}

/// `log(1 + e^{-u})` without overflow or cancellation.
fn softplus_neg(u: f64) -> f64 {
    (-u).max(0.0) + (-u.abs()).exp().ln_1p()
}

/// `1 / (1 + e^{u})`, the magnitude of the logistic derivative at margin `u`.
fn logistic_weight(u: f64) -> f64 {
    if u >= 0.0 {
        let e = (-u).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + u.exp())
    }
}

/// Summed loss over the columns of `logits` and, when `want_grad` is set, its
/// derivative with respect to every logit.
pub fn logit_loss_and_grad(
    logits: &Array2<f64>,
    labels: &[usize],
    kind: LossKind,
    want_grad: bool,
) -> Result<(f64, Option<Array2<f64>>), NetError> {
    let (k, n) = logits.dim();
    if labels.len() != n {
        return Err(NetError::Shape(format!("{} labels for {n} logit columns", labels.len())));
    }
    let mut grad = want_grad.then(|| Array2::<f64>::zeros((k, n)));
    let mut total = 0.0;
    match kind {
        LossKind::Exponential | LossKind::Logistic => {
            if k != 1 {
                return Err(NetError::IncompatibleLoss {
                    loss: kind,
                    outputs: k,
                    classes: 2,
                });
            }
            for c in 0..n {
                let y = label_sign(labels[c]);
                let u = y * logits[[0, c]];
                let (l, dl_du) = if kind == LossKind::Exponential {
                    let e = (-u).exp();
                    (e, -e)
                } else {
                    (softplus_neg(u), -logistic_weight(u))
                };
                total += l;
                if let Some(g) = grad.as_mut() {
                    g[[0, c]] = dl_du * y;
                }
            }
        }
        LossKind::CrossEntropy => {
            for (c, col) in logits.axis_iter(Axis(1)).enumerate() {
                let y = labels[c] - 1;
                if y >= k {
                    return Err(NetError::Shape(format!("label {} with {k} logits", labels[c])));
                }
                let top = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let zy = col[y];
                let l = if zy >= top {
                    let rest: f64 = col
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != y)
                        .map(|(_, &v)| (v - zy).exp())
                        .sum();
                    rest.ln_1p()
                } else {
                    let s: f64 = col.iter().map(|&v| (v - top).exp()).sum();
                    top + s.ln() - zy
                };
                total += l;
                if let Some(g) = grad.as_mut() {
                    let s: f64 = col.iter().map(|&v| (v - top).exp()).sum();
                    for j in 0..k {
                        let p = (col[j] - top).exp() / s;
                        g[[j, c]] = if j == y { p - 1.0 } else { p };
                    }
                    // Recover the tiny 1 - p_y accurately when the true class dominates.
                    if zy >= top {
                        let others: f64 = (0..k).filter(|&j| j != y).map(|j| g[[j, c]]).sum();
                        g[[y, c]] = -others;
                    }
                }
            }
        }
    }
    if !total.is_finite() {
        return Err(NetError::NumericalOverflow(format!("{kind} loss is {total}")));
    }
    if let Some(g) = &grad {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NumericalOverflow("non-finite logit gradient".into()));
        }
    }
    Ok((total, grad))
}

/// Summed (not averaged) empirical loss of the network on a dataset.
pub fn loss_eval(params: &NetworkParams, ds: &LabeledDataset, kind: LossKind) -> Result<f64, NetError> {
    kind.check(params.output_dim(), ds.class_count())?;
    let z = params.logit_matrix(ds.points())?;
    Ok(logit_loss_and_grad(&z, ds.labels(), kind, false)?.0)
}

/// `2 / (beta sigma_max(X)^2)` for a last-layer design matrix `x` (`t x N`).
///
/// Logistic loss uses its global smoothness `beta = 1/4`. The exponential
/// loss is not globally smooth; `beta` is estimated as `max_n e^{-u_n}` over
/// the supplied margins (all margins taken as zero when none are given).
pub fn step_size_bound(x: &Array2<f64>, kind: LossKind, margins: Option<&[f64]>) -> Result<f64, NetError> {
    let beta = match kind {
        LossKind::Logistic => 0.25,
        LossKind::Exponential => match margins {
            Some(m) if !m.is_empty() => m.iter().map(|&u| (-u).exp()).fold(0.0, f64::max),
            _ => 1.0,
        },
        LossKind::CrossEntropy => return Err(NetError::NoStepBound(kind)),
    };
    let s = sigma_max(x);
    if s == 0.0 || beta == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(2.0 / (beta * s * s))
}

/// Admissible step size for training the last layer at the current
/// parameters: the design matrix is the feature matrix (with a row of ones
/// appended when the last layer has a bias) and exponential-loss margins are
/// taken from the current logits.
pub fn max_step_size(params: &NetworkParams, ds: &LabeledDataset, kind: LossKind) -> Result<f64, NetError> {
    if kind == LossKind::CrossEntropy {
        return Err(NetError::NoStepBound(kind));
    }
    kind.check(params.output_dim(), ds.class_count())?;
    let feats = params.feature_matrix(ds.points())?;
    let margins: Vec<f64> = params
        .logits_from_features(&feats)
        .row(0)
        .iter()
        .zip(ds.labels())
        .map(|(&z, &y)| label_sign(y) * z)
        .collect();
    let design = design_matrix(&feats, params.last_bias.is_some());
    step_size_bound(&design, kind, Some(&margins))
}

pub(crate) fn design_matrix(features: &Array2<f64>, with_bias: bool) -> Array2<f64> {
    if !with_bias {
        return features.clone();
    }
    let (t, n) = features.dim();
    let mut out = Array2::ones((t + 1, n));
    out.slice_mut(ndarray::s![..t, ..]).assign(features);
    out
}
