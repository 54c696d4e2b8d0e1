//! Wolfe's minimum-norm-point method over the convex hull of a column set.
//!
//! With `lambda` on the simplex and `x = D lambda` the hull point nearest the
//! origin, the homogeneous hard-margin SVM is `w = x / |x|^2` with dual
//! coefficients `alpha = lambda / |x|^2`.

use ndarray::{Array1, Array2};

use crate::linalg;

const MAX_MAJOR: usize = 10_000;

/// Simplex weights of the hull point of minimal norm, or `None` when the
/// iteration breaks down (origin inside the hull, singular corral).
pub(crate) fn min_norm_point(p: &Array2<f64>) -> Option<Array1<f64>> {
    let n = p.ncols();
    let sq: Vec<f64> = p.columns().into_iter().map(|c| c.dot(&c)).collect();
    let scale = sq.iter().copied().fold(0.0_f64, f64::max);
    if n == 0 || scale == 0.0 {
        return None;
    }
    let first = (0..n).min_by(|&a, &b| sq[a].total_cmp(&sq[b]))?;
    let mut corral = vec![first];
    let mut lambda = vec![1.0];
    let mut x = p.column(first).to_owned();

    for _ in 0..MAX_MAJOR {
        let xx = x.dot(&x);
        if xx <= 1e-30 * scale {
            return None;
        }
        let scores = x.dot(p);
        let j = (0..n).min_by(|&a, &b| scores[a].total_cmp(&scores[b]))?;
        if xx - scores[j] <= 1e-15 * xx.max(1e-300) || corral.contains(&j) {
            let mut out = Array1::zeros(n);
            for (&i, &l) in corral.iter().zip(&lambda) {
                out[i] = l;
            }
            return Some(out);
        }
        corral.push(j);
        lambda.push(0.0);

        loop {
            let mu = affine_min_norm(p, &corral)?;
            if mu.iter().all(|&m| m > 1e-14) {
                lambda = mu;
                break;
            }
            let mut theta = 1.0_f64;
            for (&l, &m) in lambda.iter().zip(&mu) {
                if m <= 1e-14 && l - m > 0.0 {
                    theta = theta.min(l / (l - m));
                }
            }
            for (l, &m) in lambda.iter_mut().zip(&mu) {
                *l += theta * (m - *l);
            }
            let mut k = 0;
            while k < corral.len() {
                if lambda[k] <= 1e-14 {
                    corral.remove(k);
                    lambda.remove(k);
                } else {
                    k += 1;
                }
            }
            if corral.is_empty() {
                return None;
            }
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
        }
        x = Array1::zeros(p.nrows());
        for (&i, &l) in corral.iter().zip(&lambda) {
            x.scaled_add(l, &p.column(i));
        }
    }
    None
}

/// Minimizes `|sum mu_i p_i|` over the affine hull of the corral
/// (`sum mu_i = 1`) via the bordered Gram system.
fn affine_min_norm(p: &Array2<f64>, corral: &[usize]) -> Option<Vec<f64>> {
    let m = corral.len();
    let mut a = Array2::<f64>::zeros((m + 1, m + 1));
    let mut top = 0.0_f64;
    for (r, &i) in corral.iter().enumerate() {
        for (c, &j) in corral.iter().enumerate() {
            let g = p.column(i).dot(&p.column(j));
            a[[r, c]] = g;
            top = top.max(g.abs());
        }
    }
    // rescale the border so pivots are comparable
    let s = top.max(1e-300);
    for r in 0..m {
        a[[r, m]] = s;
        a[[m, r]] = s;
    }
    let mut b = Array1::<f64>::zeros(m + 1);
    b[m] = s;
    let sol = linalg::solve(&a, &b, 1e-13 * s)?;
    Some(sol.iter().take(m).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn segment_projection() {
        // hull of (1, 1) and (1, -1): nearest point (1, 0)
        let p = array![[1.0, 1.0], [1.0, -1.0]];
        let l = min_norm_point(&p).unwrap();
        assert!((l[0] - 0.5).abs() < 1e-14 && (l[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn vertex_solution() {
        let p = array![[1.0, 3.0, 2.0], [0.5, 2.0, -0.5]];
        let l = min_norm_point(&p).unwrap();
        assert_eq!(l[0], 1.0);
    }

    #[test]
    fn origin_in_hull() {
        let p = array![[1.0, -1.0], [0.0, 0.0]];
        assert!(min_norm_point(&p).is_none());
    }
}
