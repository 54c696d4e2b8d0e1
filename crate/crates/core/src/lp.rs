//! Margin linear program used for separability decisions.
//!
//! Given rows `a_1..a_M` in `R^m`, the program
//!
//! ```text
//! maximize s  subject to  a_n . z >= s  for all n,   -1 <= z_i <= 1
//! ```
//!
//! has a strictly positive optimum exactly when some `z` puts every row on the
//! positive side of a hyperplane through the origin. We solve its dual,
//!
//! ```text
//! minimize sum_i (p_i + q_i)  subject to  sum_n lambda_n = 1,
//!                                          sum_n lambda_n a_n = p - q,
//!                                          lambda, p, q >= 0
//! ```
//!
//! with a dense tableau simplex. The dual has only `m + 1` equality rows, so the
//! tableau stays small even for thousands of samples. The primal direction is
//! recovered from the optimal basis and re-verified directly against the rows.

use ndarray::{Array1, Array2, ArrayView2};

use crate::linalg;

const PIVOT_EPS: f64 = 1e-12;
const COST_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct MarginLpResult {
    /// Directly verified margin `min_n a_n . z` of the recovered direction.
    pub margin: f64,
    /// Optimal value of the dual program (upper bound on the achievable margin).
    pub dual_value: f64,
    /// Recovered direction `z` with `|z_i| <= 1`, in the caller's row units.
    pub direction: Array1<f64>,
    /// Non-zero convex weights `(row, lambda)` of the dual optimum. When the
    /// margin is not positive these certify that the origin lies (to
    /// tolerance) in the convex hull of the rows.
    pub certificate: Vec<(usize, f64)>,
    pub iterations: usize,
}

/// Solves the margin LP. Rows are rescaled by their largest absolute entry so
/// the returned `margin` is relative to unit-range data; `direction` is
/// unaffected by the rescale.
pub fn max_margin(rows: ArrayView2<f64>) -> MarginLpResult {
    let n_rows = rows.nrows();
    let m = rows.ncols();
    assert!(n_rows > 0 && m > 0, "max_margin: empty problem");
    let scale = rows.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let a: Array2<f64> = if scale > 0.0 {
        rows.mapv(|v| v / scale)
    } else {
        rows.to_owned()
    };

    let n_cols = n_rows + 2 * m;
    let n_tab_rows = m + 1;
    let rhs = n_cols;
    let mut tab = Array2::<f64>::zeros((n_tab_rows, n_cols + 1));
    for n in 0..n_rows {
        tab[[0, n]] = 1.0;
        for i in 0..m {
            tab[[1 + i, n]] = a[[n, i]];
        }
    }
    for i in 0..m {
        tab[[1 + i, n_rows + i]] = -1.0;
        tab[[1 + i, n_rows + m + i]] = 1.0;
    }
    tab[[0, rhs]] = 1.0;
    let cost = |j: usize| if j >= n_rows { 1.0 } else { 0.0 };

    let mut basis = vec![0usize; n_tab_rows];
    pivot(&mut tab, 0, 0);
    basis[0] = 0;
    for i in 0..m {
        let col = if a[[0, i]] >= 0.0 { n_rows + i } else { n_rows + m + i };
        pivot(&mut tab, 1 + i, col);
        basis[1 + i] = col;
    }

    let mut reduced = Array1::from_iter((0..=n_cols).map(|j| if j < n_cols { cost(j) } else { 0.0 }));
    for (r, &b) in basis.iter().enumerate() {
        let cb = cost(b);
        if cb != 0.0 {
            reduced.scaled_add(-cb, &tab.row(r));
        }
    }

    let mut iterations = 0;
    let mut degenerate_streak = 0usize;
    let max_iter = 50 * (n_cols + n_tab_rows) + 1000;
    while iterations < max_iter {
        let use_bland = degenerate_streak > 50;
        let entering = if use_bland {
            (0..n_cols).find(|&j| reduced[j] < -COST_EPS)
        } else {
            (0..n_cols)
                .filter(|&j| reduced[j] < -COST_EPS)
                .min_by(|&i, &j| reduced[i].total_cmp(&reduced[j]))
        };
        let Some(j) = entering else { break };

        let mut leave: Option<(usize, f64)> = None;
        for r in 0..n_tab_rows {
            let coef = tab[[r, j]];
            if coef > PIVOT_EPS {
                let ratio = tab[[r, rhs]].max(0.0) / coef;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-15 || (ratio <= lratio + 1e-15 && basis[r] < basis[lr]) {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        // The dual objective is bounded below by zero, so an unbounded ray
        // can only come from round-off; stop with the current basis.
        let Some((r, ratio)) = leave else { break };
        if ratio <= 1e-15 {
            degenerate_streak += 1;
        } else {
            degenerate_streak = 0;
        }
        pivot(&mut tab, r, j);
        let f = reduced[j];
        reduced.scaled_add(-f, &tab.row(r));
        basis[r] = j;
        iterations += 1;
    }

    let dual_value = -reduced[rhs];

    // Recover the primal direction from the basis: solve B^T y = c_B.
    let mut bt = Array2::<f64>::zeros((n_tab_rows, n_tab_rows));
    let mut cb = Array1::<f64>::zeros(n_tab_rows);
    for (k, &col) in basis.iter().enumerate() {
        let column = original_column(&a, col, n_rows, m);
        bt.row_mut(k).assign(&column);
        cb[k] = cost(col);
    }
    let z = match linalg::solve(&bt, &cb, 1e-14) {
        Some(y) => Array1::from_iter((0..m).map(|i| (-y[1 + i]).clamp(-1.0, 1.0))),
        None => Array1::zeros(m),
    };
    let margin = a
        .rows()
        .into_iter()
        .map(|row| linalg::dot(row, z.view()))
        .fold(f64::INFINITY, f64::min);

    let certificate = basis
        .iter()
        .enumerate()
        .filter(|&(_, &col)| col < n_rows)
        .map(|(r, &col)| (col, tab[[r, rhs]]))
        .filter(|&(_, w)| w > 0.0)
        .collect();

    MarginLpResult {
        margin,
        dual_value,
        direction: z,
        certificate,
        iterations,
    }
}

fn original_column(a: &Array2<f64>, col: usize, n_rows: usize, m: usize) -> Array1<f64> {
    let mut c = Array1::zeros(m + 1);
    if col < n_rows {
        c[0] = 1.0;
        for i in 0..m {
            c[1 + i] = a[[col, i]];
        }
    } else if col < n_rows + m {
        c[1 + col - n_rows] = -1.0;
    } else {
        c[1 + col - n_rows - m] = 1.0;
    }
    c
}

fn pivot(tab: &mut Array2<f64>, row: usize, col: usize) {
    let p = tab[[row, col]];
    tab.row_mut(row).mapv_inplace(|v| v / p);
    let pivot_row = tab.row(row).to_owned();
    for r in 0..tab.nrows() {
        if r == row {
            continue;
        }
        let f = tab[[r, col]];
        if f != 0.0 {
            tab.row_mut(r).scaled_add(-f, &pivot_row);
        }
    }
}
