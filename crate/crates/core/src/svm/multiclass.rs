use ndarray::{Array1, Array2, Axis};

use super::binary::{exact_solve, polish, projected_violation};
use super::{
    rank_deficient, MulticlassSvmSolution, SolveStats, SolverOptions, SvmError, SvmSolution, ACTIVITY_TOLERANCE,
};
use crate::data::separability;

/// Minimizes `sum_k |W_k|^2` subject to `W_{y_n} . x_n >= W_k . x_n + 1`
/// for every sample and every `k != y_n`. Columns of `features` are the
/// samples; labels are 1-based.
pub fn solve_multiclass(
    features: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
) -> Result<MulticlassSvmSolution, SvmError> {
    solve_multiclass_with(features, labels, class_count, &SolverOptions::multiclass()).map(|(s, _)| s)
}

/// Dual pair index `n * (K - 1) + j`, where `j` counts the classes other
/// than `y_n` in increasing order.
fn other_classes(y: usize, k: usize) -> impl Iterator<Item = usize> {
    (0..k).filter(move |&c| c != y)
}

/// Each constraint `(n, k)` is `vec(W) . phi_{n,k} >= 1` with
/// `phi_{n,k} = x_n (e_{y_n} - e_k)`; the lifted columns are laid out to
/// match the row-major flattening of `W`.
fn lifted(features: &Array2<f64>, labels: &[usize], k: usize) -> Array2<f64> {
    let (t, n) = features.dim();
    let mut phi = Array2::<f64>::zeros((k * t, n * (k - 1)));
    for c in 0..n {
        let y = labels[c] - 1;
        for (j, other) in other_classes(y, k).enumerate() {
            let p = c * (k - 1) + j;
            for i in 0..t {
                phi[[y * t + i, p]] = features[[i, c]];
                phi[[other * t + i, p]] = -features[[i, c]];
            }
        }
    }
    phi
}

pub fn solve_multiclass_with(
    features: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
    opts: &SolverOptions,
) -> Result<(MulticlassSvmSolution, SolveStats), SvmError> {
    let (t, n) = features.dim();
    let k = class_count;
    if n == 0 || t == 0 {
        return Err(SvmError::Shape(format!("empty problem ({t} x {n})")));
    }
    if k < 2 {
        return Err(SvmError::Shape(format!("need at least two classes, got {k}")));
    }
    if labels.len() != n {
        return Err(SvmError::Shape(format!("{} labels for {n} samples", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y == 0 || y > k) {
        return Err(SvmError::Shape(format!("label {bad} outside 1..={k}")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(SvmError::Shape("non-finite feature value".into()));
    }
    if opts.check_separability {
        let sep = separability(features, labels, k, true);
        if !sep.separable {
            return Err(SvmError::Infeasible { margin: sep.margin });
        }
    }
    let q: Vec<f64> = features.columns().into_iter().map(|c| c.dot(&c)).collect();
    if q.contains(&0.0) {
        return Err(SvmError::Infeasible { margin: 0.0 });
    }

    let phi = lifted(features, labels, k);
    let pairs = k - 1;
    let mut beta = Array1::<f64>::zeros(n * pairs);
    let mut w = Array2::<f64>::zeros((k, t));
    let mut stats = SolveStats::default();
    let mut violation = f64::INFINITY;
    let mut c_buf = vec![0.0; pairs];
    let mut sorted = vec![0.0; pairs];

    for sweep in 1..=opts.max_sweeps {
        stats.sweeps = sweep;
        let mut worst = 0.0_f64;
        for s in 0..n {
            let x = features.column(s);
            let y = labels[s] - 1;
            let scores = w.dot(&x);
            let base = s * pairs;
            let mut block_worst = 0.0_f64;
            for (j, other) in other_classes(y, k).enumerate() {
                let g = 1.0 - (scores[y] - scores[other]);
                let b = beta[base + j];
                block_worst = block_worst.max(if b > 0.0 { g.abs() } else { g.max(0.0) });
                c_buf[j] = g / q[s] + b;
            }
            worst = worst.max(block_worst);
            if block_worst == 0.0 {
                continue;
            }
            let total: f64 = beta.slice(ndarray::s![base..base + pairs]).sum();
            let shift = block_shift(&c_buf, total, &mut sorted);
            let mut sum_delta = 0.0;
            for (j, other) in other_classes(y, k).enumerate() {
                let next = (c_buf[j] - shift).max(0.0);
                let delta = next - beta[base + j];
                if delta != 0.0 {
                    w.row_mut(other).scaled_add(-delta, &x);
                    sum_delta += delta;
                    beta[base + j] = next;
                }
            }
            if sum_delta != 0.0 {
                w.row_mut(y).scaled_add(sum_delta, &x);
            }
        }
        if sweep % 64 == 0 {
            w = unflatten(&phi.dot(&beta), k, t);
        }
        let objective = beta.sum() - 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        if opts.record_objective {
            stats.dual_objective.push(objective);
        }
        if !objective.is_finite() || objective > opts.objective_cap {
            return Err(SvmError::Infeasible { margin: 0.0 });
        }
        let finishing = opts.finish_after == Some(sweep);
        if worst <= opts.kkt_tolerance || worst < 1e-3 || sweep % 50 == 0 || finishing {
            let flat = phi.dot(&beta);
            w = unflatten(&flat, k, t);
            violation = projected_violation(&phi, &beta, &flat);
            if violation <= opts.kkt_tolerance {
                break;
            }
            let exact = polish(&phi, &beta, &flat, opts.kkt_tolerance)
                .or_else(|| finishing.then(|| exact_solve(&phi, opts.kkt_tolerance)).flatten());
            if let Some(b) = exact {
                beta = b;
                let flat = phi.dot(&beta);
                violation = projected_violation(&phi, &beta, &flat);
                stats.polished = true;
                if opts.record_objective {
                    stats.dual_objective.push(beta.sum() - 0.5 * flat.dot(&flat));
                }
                break;
            }
        }
    }

    let sol = finish(features, labels, k, &phi, &beta);
    if violation > opts.kkt_tolerance {
        return Err(SvmError::IterationLimit {
            sweeps: stats.sweeps,
            violation,
            best: Box::new(SvmSolution::Multiclass(sol)),
        });
    }
    Ok((sol, stats))
}

/// Solves `S = sum_j max(0, c_j - S) - total` for the block shift `S`; the
/// right-hand side is non-increasing in `S` so the root is unique.
fn block_shift(c: &[f64], total: f64, sorted: &mut [f64]) -> f64 {
    sorted.copy_from_slice(c);
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    for m in 0..=sorted.len() {
        let s = (acc - total) / (1 + m) as f64;
        let upper_ok = m == 0 || sorted[m - 1] > s;
        let lower_ok = m == sorted.len() || sorted[m] <= s;
        if upper_ok && lower_ok {
            return s;
        }
        if m < sorted.len() {
            acc += sorted[m];
        }
    }
    // Rounding can leave no exactly consistent prefix; fall back to bisection.
    let f = |s: f64| s - c.iter().map(|&v| (v - s).max(0.0)).sum::<f64>() + total;
    let (mut lo, mut hi) = (-total - 1.0, c.iter().copied().fold(0.0_f64, f64::max) + 1.0);
    while f(lo) > 0.0 {
        lo = 2.0 * lo - 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn unflatten(flat: &Array1<f64>, k: usize, t: usize) -> Array2<f64> {
    Array2::from_shape_fn((k, t), |(r, i)| flat[r * t + i])
}

fn finish(
    features: &Array2<f64>,
    labels: &[usize],
    k: usize,
    phi: &Array2<f64>,
    beta: &Array1<f64>,
) -> MulticlassSvmSolution {
    let t = features.nrows();
    let n = features.ncols();
    let flat = phi.dot(beta);
    let weights = unflatten(&flat, k, t);
    let margins = flat.dot(phi);
    let min_violation_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let mut dual_coeffs = Array2::<f64>::zeros((n, k));
    let mut support_pairs = Vec::new();
    let mut active = Vec::new();
    for s in 0..n {
        let y = labels[s] - 1;
        for (j, other) in other_classes(y, k).enumerate() {
            let p = s * (k - 1) + j;
            dual_coeffs[[s, other]] = beta[p];
            if beta[p] > 0.0 || margins[p] - 1.0 <= ACTIVITY_TOLERANCE {
                support_pairs.push((s, other + 1));
                active.push(p);
            }
        }
    }
    let degenerate = rank_deficient(&phi.select(Axis(1), &active));
    MulticlassSvmSolution {
        weights,
        dual_coeffs,
        support_pairs,
        min_violation_margin,
        degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn block_shift_matches_definition() {
        let mut buf = [0.0; 3];
        for (c, total) in [
            (vec![1.0, 0.2, -0.5], 0.0),
            (vec![0.3, 0.3, 0.3], 0.4),
            (vec![-1.0, -2.0, -3.0], 0.0),
            (vec![5.0, 0.1, 0.0], 2.0),
        ] {
            let s = block_shift(&c, total, &mut buf);
            let rhs: f64 = c.iter().map(|&v| (v - s).max(0.0)).sum::<f64>() - total;
            assert!((s - rhs).abs() < 1e-12, "{c:?} {total}: {s} vs {rhs}");
        }
    }

    #[test]
    fn symmetric_three_class_configuration() {
        let h = 3.0_f64.sqrt() / 2.0;
        let x = array![[1.0, -0.5, -0.5], [0.0, h, -h]];
        let sol = solve_multiclass(&x, &[1, 2, 3], 3).unwrap();
        // W_k = c x_k with (W_k - W_j) . x_k = c (1 + 1/2) = 1
        let c = 2.0 / 3.0;
        for kk in 0..3 {
            for i in 0..2 {
                assert!((sol.weights[[kk, i]] - c * x[[i, kk]]).abs() < 1e-7);
            }
        }
        assert_eq!(sol.support_pairs.len(), 6);
        assert!((sol.min_violation_margin - 1.0).abs() < 1e-7);
    }

    #[test]
    fn infeasible_classes() {
        let x = array![[1.0, 1.0], [0.0, 0.0]];
        assert!(matches!(solve_multiclass(&x, &[1, 2], 2), Err(SvmError::Infeasible { .. })));
    }

    #[test]
    fn rejects_bad_labels() {
        let x = array![[1.0, 1.0], [0.0, 0.0]];
        assert!(matches!(solve_multiclass(&x, &[1, 4], 3), Err(SvmError::Shape(_))));
    }
}
