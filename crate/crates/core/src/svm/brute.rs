use ndarray::{Array1, Axis};

use super::binary::finish;
use super::{BinarySvmSolution, SvmError};
use crate::data::SignedDataset;
use crate::linalg;

pub const BRUTE_FORCE_MAX_SAMPLES: usize = 12;
pub const BRUTE_FORCE_MAX_DIM: usize = 3;

/// Reference solver: tries every active set of at most `t` samples, solves
/// `G_S lambda = 1`, and keeps the shortest feasible `w = D_S lambda` with
/// `lambda >= 0`.
pub fn brute_force_binary(signed: &SignedDataset) -> Result<BinarySvmSolution, SvmError> {
    let d = signed.signed_points();
    let (t, n) = d.dim();
    if n > BRUTE_FORCE_MAX_SAMPLES || t > BRUTE_FORCE_MAX_DIM {
        return Err(SvmError::InstanceTooLarge { samples: n, dim: t });
    }
    if n == 0 || t == 0 {
        return Err(SvmError::Shape(format!("empty problem ({t} x {n})")));
    }
    let mut best: Option<(f64, Array1<f64>)> = None;
    let mut set = Vec::with_capacity(t);
    enumerate(n, t.min(n), 0, &mut set, &mut |s| {
        let ds = d.select(Axis(1), s);
        let gram = ds.t().dot(&ds);
        let scale = gram.diag().iter().fold(0.0_f64, |m, v| m.max(*v));
        if scale == 0.0 {
            return;
        }
        let Some(lambda) = linalg::solve(&gram, &Array1::ones(s.len()), 1e-12 * scale) else {
            return;
        };
        if lambda.iter().any(|&l| l < 0.0) {
            return;
        }
        let w = ds.dot(&lambda);
        let feasible = w.dot(d).iter().all(|&m| m >= 1.0 - 1e-9);
        let norm = w.dot(&w);
        if feasible && best.as_ref().is_none_or(|(b, _)| norm < *b) {
            let mut alpha = Array1::zeros(n);
            for (&i, &l) in s.iter().zip(&lambda) {
                alpha[i] = l;
            }
            best = Some((norm, alpha));
        }
    });
    let (_, alpha) = best.ok_or(SvmError::InfeasibleThroughOrigin { margin: 0.0 })?;
    Ok(finish(d, d.dot(&alpha), alpha))
}

fn enumerate(n: usize, max_len: usize, start: usize, set: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if !set.is_empty() {
        visit(set);
    }
    if set.len() == max_len {
        return;
    }
    for i in start..n {
        set.push(i);
        enumerate(n, max_len, i + 1, set, visit);
        set.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn single_point() {
        let sol = brute_force_binary(&SignedDataset::from_signed_points(array![[0.0], [2.0]])).unwrap();
        assert!(sol.weight[0].abs() < 1e-15 && (sol.weight[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn size_limits() {
        let big = SignedDataset::from_signed_points(Array2::ones((2, 13)));
        assert!(matches!(brute_force_binary(&big), Err(SvmError::InstanceTooLarge { .. })));
        let wide = SignedDataset::from_signed_points(Array2::ones((4, 2)));
        assert!(matches!(brute_force_binary(&wide), Err(SvmError::InstanceTooLarge { .. })));
    }

    #[test]
    fn counts_subsets() {
        let mut count = 0;
        enumerate(5, 2, 0, &mut Vec::new(), &mut |_| count += 1);
        assert_eq!(count, 5 + 10);
    }

    #[test]
    fn infeasible_has_no_candidate() {
        let s = SignedDataset::from_signed_points(array![[1.0, -1.0], [0.0, 0.0]]);
        assert!(brute_force_binary(&s).is_err());
    }
}
