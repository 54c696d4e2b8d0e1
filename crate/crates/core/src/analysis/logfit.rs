use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::net::Snapshot;

pub const MIN_TAIL_SNAPSHOTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    /// Per-coordinate slope against `ln t` (row-major over the weight matrix).
    pub slope_vector: Vec<f64>,
    pub intercept_vector: Vec<f64>,
    /// Coefficient of determination of `|W_t|` regressed on `ln t`.
    pub r_squared: f64,
    /// Iterations of the tail snapshots used in the fit.
    pub iterations: Vec<u64>,
    /// `|W_t - slope ln t - intercept|` per tail snapshot.
    pub residual_norms: Vec<f64>,
    pub residual_max: f64,
    pub residual_median: f64,
    /// `residual_max <= 3 * residual_median`, a finite-horizon stand-in for
    /// boundedness.
    pub residual_bounded: bool,
}

/// Fits `W_t ~ slope ln t + intercept` over the snapshots in the last
/// `tail_fraction` of log-time.
pub fn fit_log_growth(snapshots: &[Snapshot], tail_fraction: f64) -> Result<LogFit, AnalysisError> {
    let pts: Vec<(u64, Vec<f64>)> = snapshots
        .iter()
        .map(|s| (s.iteration, s.last_weight.iter().copied().collect()))
        .collect();
    fit_log_growth_points(&pts, tail_fraction)
}

/// Same as [`fit_log_growth`] on raw `(iteration, flattened weights)` pairs.
pub fn fit_log_growth_points(points: &[(u64, Vec<f64>)], tail_fraction: f64) -> Result<LogFit, AnalysisError> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(AnalysisError::Shape(format!("tail_fraction {tail_fraction} not in (0, 1]")));
    }
    let usable: Vec<&(u64, Vec<f64>)> = points.iter().filter(|(t, _)| *t >= 1).collect();
    if usable.len() < MIN_TAIL_SNAPSHOTS {
        return Err(AnalysisError::InsufficientSnapshots {
            have: usable.len(),
            need: MIN_TAIL_SNAPSHOTS,
        });
    }
    let first = (usable[0].0 as f64).ln();
    let last = (usable[usable.len() - 1].0 as f64).ln();
    let cut = last - tail_fraction * (last - first);
    let tail: Vec<&(u64, Vec<f64>)> = usable.into_iter().filter(|(t, _)| (*t as f64).ln() >= cut - 1e-12).collect();
    if tail.len() < MIN_TAIL_SNAPSHOTS {
        return Err(AnalysisError::InsufficientSnapshots {
            have: tail.len(),
            need: MIN_TAIL_SNAPSHOTS,
        });
    }
    let dim = tail[0].1.len();
    if tail.iter().any(|(_, w)| w.len() != dim) {
        return Err(AnalysisError::Shape("snapshot weight shapes differ".into()));
    }

    let x: Array1<f64> = tail.iter().map(|(t, _)| (*t as f64).ln()).collect();
    let n = x.len() as f64;
    let x_mean = x.sum() / n;
    let sxx: f64 = x.iter().map(|v| (v - x_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::Shape("tail snapshots share one iteration".into()));
    }
    let fit = |y: &[f64]| -> (f64, f64) {
        let y_mean = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - x_mean) * (b - y_mean)).sum();
        let slope = sxy / sxx;
        (slope, y_mean - slope * x_mean)
    };

    let mut slope_vector = Vec::with_capacity(dim);
    let mut intercept_vector = Vec::with_capacity(dim);
    for c in 0..dim {
        let y: Vec<f64> = tail.iter().map(|(_, w)| w[c]).collect();
        let (s, i) = fit(&y);
        slope_vector.push(s);
        intercept_vector.push(i);
    }
    let residual_norms: Vec<f64> = tail
        .iter()
        .zip(&x)
        .map(|((_, w), &lx)| {
            w.iter()
                .enumerate()
                .map(|(c, v)| (v - slope_vector[c] * lx - intercept_vector[c]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();

    let norms: Vec<f64> = tail.iter().map(|(_, w)| w.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let (s, i) = fit(&norms);
    let norm_mean = norms.iter().sum::<f64>() / n;
    let ss_tot: f64 = norms.iter().map(|v| (v - norm_mean).powi(2)).sum();
    let ss_res: f64 = norms.iter().zip(&x).map(|(v, lx)| (v - s * lx - i).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };

    let residual_max = residual_norms.iter().copied().fold(0.0, f64::max);
    let mut sorted = residual_norms.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let residual_median = if sorted.len() % 2 == 0 {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    };
    Ok(LogFit {
        slope_vector,
        intercept_vector,
        r_squared,
        iterations: tail.iter().map(|(t, _)| *t).collect(),
        residual_norms,
        residual_max,
        residual_median,
        residual_bounded: residual_max <= 3.0 * residual_median,
    })
}
