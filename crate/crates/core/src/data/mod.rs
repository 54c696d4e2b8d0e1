//! Labeled datasets, the synthetic 2-D families, and the linear-algebra
//! utilities (separability, largest singular value) that other modules need.

mod csv;
mod generate;
mod separability;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::csv::{read_csv, write_csv};
pub use self::generate::{generate, DatasetSpec, Family};
pub use self::separability::{is_linearly_separable, separability, Separability, SEPARABILITY_MARGIN};

use crate::linalg;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("unknown dataset family `{0}`")]
    UnknownFamily(String),
    #[error("operation requires a binary dataset, got {0} classes")]
    NotBinary(usize),
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Points stored column-wise (`d x N`) with labels in `1..=class_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    points: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(points: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self, DataError> {
        let (d, n) = points.dim();
        if d < 1 {
            return Err(DataError::Invalid("input dimension must be at least 1".into()));
        }
        if n < 2 {
            return Err(DataError::Invalid(format!("need at least 2 samples, got {n}")));
        }
        if labels.len() != n {
            return Err(DataError::Invalid(format!(
                "{} labels for {n} points",
                labels.len()
            )));
        }
        if class_count < 2 {
            return Err(DataError::Invalid(format!("class_count must be >= 2, got {class_count}")));
        }
        let mut seen = vec![false; class_count];
        for (i, &y) in labels.iter().enumerate() {
            if y < 1 || y > class_count {
                return Err(DataError::Invalid(format!(
                    "label {y} of sample {i} outside 1..={class_count}"
                )));
            }
            seen[y - 1] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(DataError::Invalid(format!("class {} has no samples", k + 1)));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid("non-finite coordinate".into()));
        }
        Ok(Self {
            points,
            labels,
            class_count,
        })
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, n: usize) -> ArrayView1<'_, f64> {
        self.points.column(n)
    }

    /// `+1` for class 1 and `-1` for class 2.
    pub fn binary_signs(&self) -> Result<Vec<f64>, DataError> {
        if self.class_count != 2 {
            return Err(DataError::NotBinary(self.class_count));
        }
        Ok(self.labels.iter().map(|&y| label_sign(y)).collect())
    }

    /// Largest singular value of the data matrix.
    pub fn sigma_max(&self) -> f64 {
        sigma_max(&self.points)
    }
}

/// Fixed class-to-sign mapping: class 1 is positive, class 2 negative.
pub fn label_sign(label: usize) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Binary data with labels folded into the points: column `n` is `y_n x_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedDataset {
    signed_points: Array2<f64>,
    signs: Vec<f64>,
}

impl SignedDataset {
    /// Builds directly from already-signed columns (all labels positive).
    pub fn from_signed_points(signed_points: Array2<f64>) -> Self {
        let signs = vec![1.0; signed_points.ncols()];
        Self { signed_points, signs }
    }

    pub fn signed_points(&self) -> &Array2<f64> {
        &self.signed_points
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn dim(&self) -> usize {
        self.signed_points.nrows()
    }

    pub fn len(&self) -> usize {
        self.signed_points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Undoes the sign folding, returning the original coordinates.
    pub fn unsigned_points(&self) -> Array2<f64> {
        let mut out = self.signed_points.clone();
        for (mut col, &s) in out.columns_mut().into_iter().zip(&self.signs) {
            col *= s;
        }
        out
    }
}

pub fn to_signed(ds: &LabeledDataset) -> Result<SignedDataset, DataError> {
    let signs = ds.binary_signs()?;
    Ok(signed_from_parts(ds.points(), &signs))
}

/// Folds signs into an arbitrary `t x N` matrix (e.g. a feature matrix).
pub fn signed_from_parts(points: &Array2<f64>, signs: &[f64]) -> SignedDataset {
    let mut signed = points.clone();
    for (mut col, &s) in signed.columns_mut().into_iter().zip(signs) {
        col *= s;
    }
    SignedDataset {
        signed_points: signed,
        signs: signs.to_vec(),
    }
}

/// Largest singular value of a `d x N` matrix, computed from the
/// eigen-decomposition of the smaller of the two Gram matrices.
pub fn sigma_max(x: &Array2<f64>) -> f64 {
    let (d, n) = x.dim();
    let gram = if d <= n { x.dot(&x.t()) } else { x.t().dot(x) };
    if gram.nrows() == 1 {
        return gram[[0, 0]].max(0.0).sqrt();
    }
    let (vals, _) = linalg::sym_eigen(&gram);
    vals[0].max(0.0).sqrt()
}

/// Coordinate-wise bounding box `(min, max)` of the columns.
pub fn bounding_box(points: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let d = points.nrows();
    let mut lo = Array1::from_elem(d, f64::INFINITY);
    let mut hi = Array1::from_elem(d, f64::NEG_INFINITY);
    for col in points.columns() {
        for i in 0..d {
            lo[i] = lo[i].min(col[i]);
            hi[i] = hi[i].max(col[i]);
        }
    }
    (lo, hi)
}
