//! Homogeneous hard-margin SVMs (binary and K-class) solved by dual
//! coordinate ascent, with KKT certification and a brute-force oracle.

mod binary;
mod brute;
mod kkt;
mod minnorm;
mod multiclass;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

pub use self::binary::{solve_binary, solve_binary_with};
pub use self::brute::{brute_force_binary, BRUTE_FORCE_MAX_DIM, BRUTE_FORCE_MAX_SAMPLES};
pub use self::kkt::{verify_binary_kkt, verify_kkt, verify_multiclass_kkt, KktReport, KktTolerances, SvmProblem};
pub use self::multiclass::{solve_multiclass, solve_multiclass_with};

/// Margin slack under which a constraint counts as active.
pub const ACTIVITY_TOLERANCE: f64 = 1e-6;
/// Relative eigenvalue floor of the active-set Gram matrix below which the
/// support set is reported as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum SvmError {
    #[error("no strictly separating hyperplane through the origin (LP margin {margin:e})")]
    InfeasibleThroughOrigin { margin: f64 },
    #[error("K-class constraints are infeasible (LP margin {margin:e})")]
    Infeasible { margin: f64 },
    #[error("no convergence after {sweeps} sweeps (KKT violation {violation:e})")]
    IterationLimit {
        sweeps: usize,
        violation: f64,
        best: Box<SvmSolution>,
    },
    #[error("instance too large for brute force: N = {samples}, t = {dim}")]
    InstanceTooLarge { samples: usize, dim: usize },
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when the largest projected dual gradient is at most this.
    pub kkt_tolerance: f64,
    pub max_sweeps: usize,
    /// Dual objective beyond which the problem is declared infeasible.
    pub objective_cap: f64,
    /// Run the LP separability check before iterating.
    pub check_separability: bool,
    /// Keep the dual objective after every sweep.
    pub record_objective: bool,
    /// Sweeps of plain coordinate ascent after which, if still unconverged,
    /// the iterate is finished by an exact minimum-norm-point solve.
    pub finish_after: Option<usize>,
}

impl SolverOptions {
    pub fn binary() -> Self {
        Self {
            kkt_tolerance: 1e-8,
            max_sweeps: 200_000,
            objective_cap: 1e12,
            check_separability: true,
            record_objective: false,
            finish_after: Some(2_000),
        }
    }

    pub fn multiclass() -> Self {
        Self {
            kkt_tolerance: 1e-7,
            ..Self::binary()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub sweeps: usize,
    /// The returned multipliers came from an exact active-set solve rather
    /// than from the last coordinate sweep.
    pub polished: bool,
    /// Dual objective after each sweep, when requested.
    pub dual_objective: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvmSolution {
    pub weight: Array1<f64>,
    pub dual_coeffs: Array1<f64>,
    pub support_indices: Vec<usize>,
    pub min_margin: f64,
    pub degenerate: bool,
}

impl BinarySvmSolution {
    pub fn margin_width(&self) -> f64 {
        let n = self.weight.dot(&self.weight).sqrt();
        if n > 0.0 {
            1.0 / n
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassSvmSolution {
    /// Row `k` is the weight vector of class `k + 1`.
    pub weights: Array2<f64>,
    /// `N x K`; entry `(n, y_n - 1)` is always zero.
    pub dual_coeffs: Array2<f64>,
    /// Active `(sample, class)` pairs, classes 1-based.
    pub support_pairs: Vec<(usize, usize)>,
    /// Smallest `W_{y_n} . x_n - W_k . x_n` over all `k != y_n`.
    pub min_violation_margin: f64,
    pub degenerate: bool,
}

impl MulticlassSvmSolution {
    /// Samples appearing in at least one active pair, ascending.
    pub fn support_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = self.support_pairs.iter().map(|&(n, _)| n).collect();
        idx.dedup();
        idx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SvmSolution {
    Binary(BinarySvmSolution),
    Multiclass(MulticlassSvmSolution),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SvmKind {
    Binary,
    Multiclass,
}

impl SvmSolution {
    pub fn kind(&self) -> SvmKind {
        match self {
            SvmSolution::Binary(_) => SvmKind::Binary,
            SvmSolution::Multiclass(_) => SvmKind::Multiclass,
        }
    }

    /// Weight rows: one for binary, one per class otherwise.
    pub fn weights(&self) -> Array2<f64> {
        match self {
            SvmSolution::Binary(s) => s.weight.clone().insert_axis(ndarray::Axis(0)),
            SvmSolution::Multiclass(s) => s.weights.clone(),
        }
    }

    pub fn support_indices(&self) -> Vec<usize> {
        match self {
            SvmSolution::Binary(s) => s.support_indices.clone(),
            SvmSolution::Multiclass(s) => s.support_indices(),
        }
    }

    pub fn min_margin(&self) -> f64 {
        match self {
            SvmSolution::Binary(s) => s.min_margin,
            SvmSolution::Multiclass(s) => s.min_violation_margin,
        }
    }

    pub fn degenerate(&self) -> bool {
        match self {
            SvmSolution::Binary(s) => s.degenerate,
            SvmSolution::Multiclass(s) => s.degenerate,
        }
    }

    pub fn to_record(&self, kkt_report: &KktReport) -> SvmRecord {
        let rows = |a: &Array2<f64>| a.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>();
        let (dual, pairs) = match self {
            SvmSolution::Binary(s) => (vec![s.dual_coeffs.to_vec()], Vec::new()),
            SvmSolution::Multiclass(s) => (rows(&s.dual_coeffs.t().to_owned()), s.support_pairs.clone()),
        };
        SvmRecord {
            kind: self.kind(),
            weights: rows(&self.weights()),
            dual_coeffs: dual,
            support_indices: self.support_indices(),
            support_pairs: pairs,
            min_margin: self.min_margin(),
            degenerate: self.degenerate(),
            kkt_report: kkt_report.clone(),
        }
    }

    pub fn from_record(rec: &SvmRecord) -> Result<Self, SvmError> {
        let matrix = |rows: &[Vec<f64>], what: &str| -> Result<Array2<f64>, SvmError> {
            let r = rows.len();
            let c = rows.first().map_or(0, Vec::len);
            if r == 0 || rows.iter().any(|row| row.len() != c) {
                return Err(SvmError::Shape(format!("{what} must be a non-empty rectangular matrix")));
            }
            Ok(Array2::from_shape_fn((r, c), |(i, j)| rows[i][j]))
        };
        let weights = matrix(&rec.weights, "weights")?;
        let dual = matrix(&rec.dual_coeffs, "dual_coeffs")?;
        match rec.kind {
            SvmKind::Binary => {
                if weights.nrows() != 1 || dual.nrows() != 1 {
                    return Err(SvmError::Shape("binary solution needs one weight row and one dual row".into()));
                }
                Ok(SvmSolution::Binary(BinarySvmSolution {
                    weight: weights.row(0).to_owned(),
                    dual_coeffs: dual.row(0).to_owned(),
                    support_indices: rec.support_indices.clone(),
                    min_margin: rec.min_margin,
                    degenerate: rec.degenerate,
                }))
            }
            SvmKind::Multiclass => {
                if weights.nrows() != dual.nrows() {
                    return Err(SvmError::Shape("one dual row per class expected".into()));
                }
                Ok(SvmSolution::Multiclass(MulticlassSvmSolution {
                    weights,
                    dual_coeffs: dual.t().to_owned(),
                    support_pairs: rec.support_pairs.clone(),
                    min_violation_margin: rec.min_margin,
                    degenerate: rec.degenerate,
                }))
            }
        }
    }
}

/// On-disk form of a solution. `dual_coeffs` has one row per weight row:
/// `1 x N` for binary problems, `K x N` for K-class problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmRecord {
    pub kind: SvmKind,
    pub weights: Vec<Vec<f64>>,
    pub dual_coeffs: Vec<Vec<f64>>,
    pub support_indices: Vec<usize>,
    #[serde(default)]
    pub support_pairs: Vec<(usize, usize)>,
    pub min_margin: f64,
    #[serde(default)]
    pub degenerate: bool,
    pub kkt_report: KktReport,
}

/// True when the columns of `cols` (a `t x m` matrix) span fewer than `m`
/// dimensions, judged by the eigenvalues of `cols cols^T` relative to the
/// largest.
pub(crate) fn rank_deficient(cols: &Array2<f64>) -> bool {
    let (t, m) = cols.dim();
    if m == 0 {
        return false;
    }
    if m > t {
        return true;
    }
    let (vals, _) = crate::linalg::sym_eigen(&cols.dot(&cols.t()));
    let top = vals[0];
    if top <= 0.0 {
        return true;
    }
    vals[m - 1] <= DEGENERACY_TOLERANCE * top
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn record_round_trip() {
        let sol = SvmSolution::Multiclass(MulticlassSvmSolution {
            weights: array![[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]],
            dual_coeffs: array![[0.0, 0.5, 0.25], [0.1, 0.0, 0.0]],
            support_pairs: vec![(0, 2), (0, 3), (1, 1)],
            min_violation_margin: 1.0,
            degenerate: false,
        });
        let rec = sol.to_record(&KktReport::default());
        assert_eq!(rec.dual_coeffs.len(), 3);
        let text = serde_json::to_string(&rec).unwrap();
        let back: SvmRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(SvmSolution::from_record(&back).unwrap(), sol);
    }

    #[test]
    fn rank_checks() {
        assert!(!rank_deficient(&array![[1.0, 0.0], [0.0, 1.0]]));
        assert!(rank_deficient(&array![[1.0, 2.0], [1.0, 2.0]]));
        assert!(rank_deficient(&array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]));
    }
}
