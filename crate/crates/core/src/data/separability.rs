//! Linear separability via the margin LP.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{label_sign, LabeledDataset};
use crate::lp;

/// Minimum LP margin (on data rescaled to unit range) for a dataset to count
/// as strictly separable.
pub const SEPARABILITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separability {
    pub separable: bool,
    /// LP margin measured on unit-range data.
    pub margin: f64,
    /// Separating weights: one row for binary data (class 1 positive), one
    /// row per class otherwise.
    pub weights: Array2<f64>,
    /// Offsets matching `weights`; all zero for homogeneous problems.
    pub bias: Array1<f64>,
    /// Convex weights `(sample, weight)` certifying infeasibility when
    /// `separable` is false. For multi-class data the sample index refers to
    /// the constraint row `n * (K - 1) + j`.
    pub certificate: Vec<(usize, f64)>,
}

pub fn is_linearly_separable(ds: &LabeledDataset) -> Separability {
    separability(ds.points(), ds.labels(), ds.class_count(), false)
}

/// Tests strict linear separability of the columns of `points`. With
/// `homogeneous` set the hyperplanes are constrained to pass through the
/// origin; otherwise each classifier carries an offset.
///
/// Binary data (`class_count == 2`) asks for `w`, `b` with
/// `y_n (w . x_n + b) > 0`. With more classes the test is joint:
/// `w_{y_n} . x_n + b_{y_n} > w_k . x_n + b_k` for every `k != y_n`.
pub fn separability(points: &Array2<f64>, labels: &[usize], class_count: usize, homogeneous: bool) -> Separability {
    let (d, n) = points.dim();
    let scale = points.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let width = if homogeneous { d } else { d + 1 };
    let augmented = |col: usize, i: usize| -> f64 {
        if i < d {
            points[[i, col]] / scale
        } else {
            1.0
        }
    };

    if class_count == 2 {
        let mut rows = Array2::<f64>::zeros((n, width));
        for c in 0..n {
            let s = label_sign(labels[c]);
            for i in 0..width {
                rows[[c, i]] = s * augmented(c, i);
            }
        }
        let res = lp::max_margin(rows.view());
        let z = &res.direction;
        let weights = Array2::from_shape_fn((1, d), |(_, i)| z[i] / scale);
        let bias = Array1::from_elem(1, if homogeneous { 0.0 } else { z[d] });
        return Separability {
            separable: res.margin > SEPARABILITY_MARGIN,
            margin: res.margin,
            weights,
            bias,
            certificate: res.certificate,
        };
    }

    let k = class_count;
    let mut rows = Array2::<f64>::zeros((n * (k - 1), k * width));
    let mut r = 0;
    for c in 0..n {
        let y = labels[c] - 1;
        for other in (0..k).filter(|&o| o != y) {
            for i in 0..width {
                let v = augmented(c, i);
                rows[[r, y * width + i]] = v;
                rows[[r, other * width + i]] = -v;
            }
            r += 1;
        }
    }
    let res = lp::max_margin(rows.view());
    let z = &res.direction;
    let weights = Array2::from_shape_fn((k, d), |(cls, i)| z[cls * width + i] / scale);
    let bias = Array1::from_shape_fn(k, |cls| if homogeneous { 0.0 } else { z[cls * width + d] });
    Separability {
        separable: res.margin > SEPARABILITY_MARGIN,
        margin: res.margin,
        weights,
        bias,
        certificate: res.certificate,
    }
}

impl Separability {
    /// Smallest signed score gap of the witness over the dataset (binary:
    /// `min y_n (w . x_n + b)`; multi-class: smallest winning-class lead).
    pub fn witness_margin(&self, points: &Array2<f64>, labels: &[usize]) -> f64 {
        let scores = self.weights.dot(points);
        let mut worst = f64::INFINITY;
        for (c, &y) in labels.iter().enumerate() {
            if self.weights.nrows() == 1 {
                worst = worst.min(label_sign(y) * (scores[[0, c]] + self.bias[0]));
            } else {
                let own = scores[[y - 1, c]] + self.bias[y - 1];
                for k in (0..self.weights.nrows()).filter(|&k| k != y - 1) {
                    worst = worst.min(own - scores[[k, c]] - self.bias[k]);
                }
            }
        }
        worst
    }
}
