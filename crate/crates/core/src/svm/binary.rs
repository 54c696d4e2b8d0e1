use ndarray::{Array1, Array2, Axis};

use super::{rank_deficient, BinarySvmSolution, SolveStats, SolverOptions, SvmError, SvmSolution, ACTIVITY_TOLERANCE};
use crate::data::SignedDataset;
use super::minnorm::min_norm_point;
use crate::lp;

/// Minimum-norm `w` with `w . delta_n >= 1` for every signed column.
pub fn solve_binary(signed: &SignedDataset) -> Result<BinarySvmSolution, SvmError> {
    solve_binary_with(signed, &SolverOptions::binary()).map(|(s, _)| s)
}

pub fn solve_binary_with(
    signed: &SignedDataset,
    opts: &SolverOptions,
) -> Result<(BinarySvmSolution, SolveStats), SvmError> {
    let d = signed.signed_points();
    let (t, n) = d.dim();
    if n == 0 || t == 0 {
        return Err(SvmError::Shape(format!("empty problem ({t} x {n})")));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(SvmError::Shape("non-finite feature value".into()));
    }
    if opts.check_separability {
        let res = lp::max_margin(d.t());
        if res.margin <= crate::data::SEPARABILITY_MARGIN {
            return Err(SvmError::InfeasibleThroughOrigin { margin: res.margin });
        }
    }
    let q: Vec<f64> = d.columns().into_iter().map(|c| c.dot(&c)).collect();
    if q.contains(&0.0) {
        return Err(SvmError::InfeasibleThroughOrigin { margin: 0.0 });
    }

    let mut alpha = Array1::<f64>::zeros(n);
    let mut w = Array1::<f64>::zeros(t);
    let mut stats = SolveStats::default();
    let mut violation = f64::INFINITY;

    for sweep in 1..=opts.max_sweeps {
        stats.sweeps = sweep;
        let mut worst = 0.0_f64;
        for i in 0..n {
            let col = d.column(i);
            let g = 1.0 - w.dot(&col);
            let pg = if alpha[i] > 0.0 { g.abs() } else { g.max(0.0) };
            worst = worst.max(pg);
            if pg == 0.0 {
                continue;
            }
            let next = (alpha[i] + g / q[i]).max(0.0);
            let step = next - alpha[i];
            if step != 0.0 {
                w.scaled_add(step, &col);
                alpha[i] = next;
            }
        }
        if sweep % 64 == 0 {
            w = d.dot(&alpha);
        }
        let objective = alpha.sum() - 0.5 * w.dot(&w);
        if opts.record_objective {
            stats.dual_objective.push(objective);
        }
        if !objective.is_finite() || objective > opts.objective_cap {
            return Err(SvmError::InfeasibleThroughOrigin { margin: 0.0 });
        }
        let finishing = opts.finish_after == Some(sweep);
        if worst <= opts.kkt_tolerance || worst < 1e-3 || sweep % 50 == 0 || finishing {
            w = d.dot(&alpha);
            violation = projected_violation(d, &alpha, &w);
            if violation <= opts.kkt_tolerance {
                break;
            }
            let exact = polish(d, &alpha, &w, opts.kkt_tolerance)
                .or_else(|| finishing.then(|| exact_solve(d, opts.kkt_tolerance)).flatten());
            if let Some(a) = exact {
                alpha = a;
                w = d.dot(&alpha);
                violation = projected_violation(d, &alpha, &w);
                stats.polished = true;
                if opts.record_objective {
                    stats.dual_objective.push(alpha.sum() - 0.5 * w.dot(&w));
                }
                break;
            }
        }
    }

    let w = d.dot(&alpha);
    let sol = finish(d, w, alpha);
    if violation > opts.kkt_tolerance {
        return Err(SvmError::IterationLimit {
            sweeps: stats.sweeps,
            violation,
            best: Box::new(SvmSolution::Binary(sol)),
        });
    }
    Ok((sol, stats))
}

/// Largest projected dual gradient `|1 - w . delta_n|` (only the positive
/// part where `alpha_n = 0`).
pub(super) fn projected_violation(d: &Array2<f64>, alpha: &Array1<f64>, w: &Array1<f64>) -> f64 {
    let m = w.dot(d);
    m.iter()
        .zip(alpha)
        .map(|(&u, &a)| {
            let g = 1.0 - u;
            if a > 0.0 {
                g.abs()
            } else {
                g.max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Tries to jump to the exact optimum by solving `G_S lambda = 1` on a
/// guessed active set. Returns the multipliers only if they certify
/// optimality at `tol`.
pub(super) fn polish(d: &Array2<f64>, alpha: &Array1<f64>, w: &Array1<f64>, tol: f64) -> Option<Array1<f64>> {
    let margins = w.dot(d);
    let by_alpha: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] > 0.0).collect();
    let by_margin: Vec<usize> = (0..alpha.len()).filter(|&i| (margins[i] - 1.0).abs() <= 1e-4).collect();
    for set in [by_alpha, by_margin] {
        if set.is_empty() {
            continue;
        }
        let ds = d.select(Axis(1), &set);
        if rank_deficient(&ds) {
            continue;
        }
        let gram = ds.t().dot(&ds);
        let scale = gram.diag().iter().fold(0.0_f64, |m, v| m.max(*v));
        let Some(lambda) = crate::linalg::solve(&gram, &Array1::ones(set.len()), 1e-14 * scale) else {
            continue;
        };
        if lambda.iter().any(|&l| l < 0.0) {
            continue;
        }
        let mut cand = Array1::<f64>::zeros(alpha.len());
        for (&i, &l) in set.iter().zip(&lambda) {
            cand[i] = l;
        }
        let wc = d.dot(&cand);
        if projected_violation(d, &cand, &wc) <= tol {
            return Some(cand);
        }
    }
    None
}

/// Dual multipliers from the minimum-norm hull point, refined on its
/// support set; `None` unless they certify optimality at `tol`.
pub(super) fn exact_solve(d: &Array2<f64>, tol: f64) -> Option<Array1<f64>> {
    let lambda = min_norm_point(d)?;
    let x = d.dot(&lambda);
    let xx = x.dot(&x);
    let alpha = lambda / xx;
    let w = d.dot(&alpha);
    if projected_violation(d, &alpha, &w) <= tol {
        return Some(alpha);
    }
    polish(d, &alpha, &w, tol)
}

pub(super) fn finish(d: &Array2<f64>, w: Array1<f64>, alpha: Array1<f64>) -> BinarySvmSolution {
    let margins = w.dot(d);
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let support_indices: Vec<usize> = (0..alpha.len())
        .filter(|&i| alpha[i] > 0.0 || margins[i] - 1.0 <= ACTIVITY_TOLERANCE)
        .collect();
    let degenerate = rank_deficient(&d.select(Axis(1), &support_indices));
    BinarySvmSolution {
        weight: w,
        dual_coeffs: alpha,
        support_indices,
        min_margin,
        degenerate,
    }
}
