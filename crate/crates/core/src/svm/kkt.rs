use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{BinarySvmSolution, MulticlassSvmSolution, SvmSolution};
use crate::data::SignedDataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktTolerances {
    pub primal: f64,
    pub complementarity: f64,
    pub stationarity: f64,
}

impl Default for KktTolerances {
    fn default() -> Self {
        Self {
            primal: 1e-6,
            complementarity: 1e-6,
            stationarity: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `max(0, 1 - smallest margin)`.
    pub max_primal_violation: f64,
    /// Largest `|alpha (margin - 1)|`; negative multipliers also count here.
    pub max_complementarity_violation: f64,
    /// Euclidean (Frobenius for K classes) norm of `W - sum alpha delta`.
    pub stationarity_residual: f64,
    pub passed: bool,
    pub tolerances: KktTolerances,
}

impl Default for KktReport {
    fn default() -> Self {
        Self::failed(KktTolerances::default())
    }
}

impl KktReport {
    fn new(primal: f64, comp: f64, stat: f64, tol: KktTolerances) -> Self {
        let passed = primal <= tol.primal && comp <= tol.complementarity && stat <= tol.stationarity;
        Self {
            max_primal_violation: primal,
            max_complementarity_violation: comp,
            stationarity_residual: stat,
            passed,
            tolerances: tol,
        }
    }

    fn failed(tol: KktTolerances) -> Self {
        Self::new(f64::MAX, f64::MAX, f64::MAX, tol)
    }
}

pub enum SvmProblem<'a> {
    Binary(&'a SignedDataset),
    Multiclass {
        features: &'a Array2<f64>,
        labels: &'a [usize],
        class_count: usize,
    },
}

/// Checks a solution against the problem it claims to solve. Mismatched
/// kinds or shapes produce a failing report with residuals at `f64::MAX`.
pub fn verify_kkt(solution: &SvmSolution, problem: &SvmProblem<'_>, tol: &KktTolerances) -> KktReport {
    match (solution, problem) {
        (SvmSolution::Binary(s), SvmProblem::Binary(d)) => verify_binary_kkt(s, d, tol),
        (
            SvmSolution::Multiclass(s),
            SvmProblem::Multiclass {
                features,
                labels,
                class_count,
            },
        ) => verify_multiclass_kkt(s, features, labels, *class_count, tol),
        _ => KktReport::failed(*tol),
    }
}

pub fn verify_binary_kkt(sol: &BinarySvmSolution, signed: &SignedDataset, tol: &KktTolerances) -> KktReport {
    let d = signed.signed_points();
    let (t, n) = d.dim();
    if sol.weight.len() != t || sol.dual_coeffs.len() != n {
        return KktReport::failed(*tol);
    }
    let margins = sol.weight.dot(d);
    let primal = margins.iter().map(|&m| (1.0 - m).max(0.0)).fold(0.0, f64::max);
    let comp = margins
        .iter()
        .zip(&sol.dual_coeffs)
        .map(|(&m, &a)| if a < 0.0 { -a } else { (a * (m - 1.0)).abs() })
        .fold(0.0, f64::max);
    let r = &sol.weight - &d.dot(&sol.dual_coeffs);
    KktReport::new(primal, comp, r.dot(&r).sqrt(), *tol)
}

pub fn verify_multiclass_kkt(
    sol: &MulticlassSvmSolution,
    features: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
    tol: &KktTolerances,
) -> KktReport {
    let (t, n) = features.dim();
    let k = class_count;
    if sol.weights.dim() != (k, t)
        || sol.dual_coeffs.dim() != (n, k)
        || labels.len() != n
        || labels.iter().any(|&y| y == 0 || y > k)
    {
        return KktReport::failed(*tol);
    }
    let scores = sol.weights.dot(features);
    let mut primal = 0.0_f64;
    let mut comp = 0.0_f64;
    // coefficient of x_n in W_k implied by the multipliers
    let mut coef = Array2::<f64>::zeros((k, n));
    for c in 0..n {
        let y = labels[c] - 1;
        let mut total = 0.0;
        for other in 0..k {
            let b = sol.dual_coeffs[[c, other]];
            if other == y {
                comp = comp.max(b.abs());
                continue;
            }
            let m = scores[[y, c]] - scores[[other, c]];
            primal = primal.max(1.0 - m);
            comp = comp.max(if b < 0.0 { -b } else { (b * (m - 1.0)).abs() });
            coef[[other, c]] -= b;
            total += b;
        }
        coef[[y, c]] += total;
    }
    let r = &sol.weights - &coef.dot(&features.t());
    let stat = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    KktReport::new(primal, comp, stat, *tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn pair() -> (SignedDataset, BinarySvmSolution) {
        let d = SignedDataset::from_signed_points(array![[1.0, 1.0], [1.0, -1.0]]);
        // w = (1, 0) with alpha = (1/2, 1/2)
        let sol = BinarySvmSolution {
            weight: array![1.0, 0.0],
            dual_coeffs: array![0.5, 0.5],
            support_indices: vec![0, 1],
            min_margin: 1.0,
            degenerate: false,
        };
        (d, sol)
    }

    #[test]
    fn analytic_optimum_passes() {
        let (d, sol) = pair();
        let rep = verify_binary_kkt(&sol, &d, &KktTolerances::default());
        assert!(rep.passed);
        assert!(rep.max_primal_violation <= 1e-10);
        assert!(rep.max_complementarity_violation <= 1e-10);
        assert!(rep.stationarity_residual <= 1e-10);
    }

    #[test]
    fn scaled_weight_fails() {
        let (d, mut sol) = pair();
        sol.weight *= 1.1;
        let rep = verify_binary_kkt(&sol, &d, &KktTolerances::default());
        assert!(!rep.passed);
        assert!(rep.stationarity_residual > 1e-8 || rep.max_complementarity_violation > 1e-6);
    }

    #[test]
    fn wrong_kind_fails() {
        let (_, sol) = pair();
        let x = array![[1.0]];
        let rep = verify_kkt(
            &SvmSolution::Binary(sol),
            &SvmProblem::Multiclass {
                features: &x,
                labels: &[1],
                class_count: 2,
            },
            &KktTolerances::default(),
        );
        assert!(!rep.passed);
    }

    #[test]
    fn multiclass_pair_optimum() {
        // two samples, K = 2: W_1 = -W_2 = (1/2, 0) with both constraints tight
        let x = array![[1.0, -1.0], [0.0, 0.0]];
        let sol = MulticlassSvmSolution {
            weights: array![[0.5, 0.0], [-0.5, 0.0]],
            dual_coeffs: array![[0.0, 0.25], [0.25, 0.0]],
            support_pairs: vec![(0, 2), (1, 1)],
            min_violation_margin: 1.0,
            degenerate: false,
        };
        let rep = verify_multiclass_kkt(&sol, &x, &[1, 2], 2, &KktTolerances::default());
        assert!(rep.passed, "{rep:?}");
    }
}
