use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::net::{Snapshot, TrainingTrace};
use crate::svm::SvmSolution;

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1.5;

/// `w . target / (|w| |target|)`, clamped to `[-1, 1]`.
pub fn cosine_alignment(w: ArrayView1<f64>, target: ArrayView1<f64>) -> Result<f64, AnalysisError> {
    if w.len() != target.len() {
        return Err(AnalysisError::Shape(format!("lengths {} and {}", w.len(), target.len())));
    }
    let nw = w.dot(&w).sqrt();
    let nt = target.dot(&target).sqrt();
    if nw == 0.0 || nt == 0.0 || !nw.is_finite() || !nt.is_finite() {
        return Err(AnalysisError::ZeroVector);
    }
    Ok((w.dot(&target) / nw / nt).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPoint {
    pub iteration: u64,
    pub cosines: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub per_class_cosine: Vec<f64>,
    pub alignment_curve: Vec<AlignmentPoint>,
    pub final_angle_deg: Vec<f64>,
}

impl AlignmentReport {
    pub fn min_cosine(&self) -> f64 {
        self.per_class_cosine.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Row-wise cosines between each snapshot's last-layer weights and the SVM
/// weights (solved on the final features).
pub fn alignment_curve(trace: &TrainingTrace, svm: &SvmSolution) -> Result<AlignmentReport, AnalysisError> {
    alignment_from_snapshots(&trace.snapshots, &svm.weights())
}

pub fn alignment_from_snapshots(snapshots: &[Snapshot], target: &Array2<f64>) -> Result<AlignmentReport, AnalysisError> {
    build(snapshots, |_| target)
}

/// Like [`alignment_from_snapshots`] but with a separate target per
/// snapshot, e.g. SVMs re-solved on each snapshot's features.
pub fn alignment_curve_moving(snapshots: &[Snapshot], targets: &[Array2<f64>]) -> Result<AlignmentReport, AnalysisError> {
    if targets.len() != snapshots.len() {
        return Err(AnalysisError::Shape(format!(
            "{} targets for {} snapshots",
            targets.len(),
            snapshots.len()
        )));
    }
    build(snapshots, |i| &targets[i])
}

fn build<'a>(snapshots: &[Snapshot], target: impl Fn(usize) -> &'a Array2<f64>) -> Result<AlignmentReport, AnalysisError> {
    if snapshots.is_empty() {
        return Err(AnalysisError::InsufficientSnapshots { have: 0, need: 1 });
    }
    let mut curve = Vec::with_capacity(snapshots.len());
    for (i, s) in snapshots.iter().enumerate() {
        let tgt = target(i);
        if s.last_weight.nrows() != tgt.nrows() {
            return Err(AnalysisError::ClassMismatch {
                network: s.last_weight.nrows(),
                target: tgt.nrows(),
            });
        }
        let cosines = s
            .last_weight
            .rows()
            .into_iter()
            .zip(tgt.rows())
            .map(|(w, t)| cosine_alignment(w, t))
            .collect::<Result<Vec<_>, _>>()?;
        curve.push(AlignmentPoint {
            iteration: s.iteration,
            cosines,
        });
    }
    let last = curve.last().expect("non-empty").cosines.clone();
    Ok(AlignmentReport {
        final_angle_deg: last.iter().map(|c| c.acos().to_degrees()).collect(),
        per_class_cosine: last,
        alignment_curve: curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormDivergence {
    pub ratio: f64,
    pub diverging: bool,
    pub threshold: f64,
    pub reference_iteration: u64,
    pub final_iteration: u64,
}

/// `|W|` at the last snapshot over `|W|` at the earlier snapshot whose
/// iteration is nearest (in absolute difference) to a tenth of the final
/// iteration.
pub fn norm_divergence_check(snapshots: &[Snapshot], threshold: f64) -> Result<NormDivergence, AnalysisError> {
    if snapshots.len() < 2 {
        return Err(AnalysisError::InsufficientSnapshots {
            have: snapshots.len(),
            need: 2,
        });
    }
    let last = snapshots.last().expect("len >= 2");
    let goal = last.iteration as f64 / 10.0;
    let reference = snapshots[..snapshots.len() - 1]
        .iter()
        .min_by(|a, b| {
            let da = (a.iteration as f64 - goal).abs();
            let db = (b.iteration as f64 - goal).abs();
            da.total_cmp(&db)
        })
        .expect("len >= 2");
    let ratio = if reference.weight_norm > 0.0 {
        last.weight_norm / reference.weight_norm
    } else if last.weight_norm > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    Ok(NormDivergence {
        ratio,
        diverging: ratio > threshold,
        threshold,
        reference_iteration: reference.iteration,
        final_iteration: last.iteration,
    })
}
