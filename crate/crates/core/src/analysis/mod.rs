//! Measurements of the trained last layer against its SVM target:
//! directional alignment, log-time growth, gradient dominance by support
//! vectors, and decision-boundary grids.

mod alignment;
mod decomposition;
pub mod export;
mod grid;
mod logfit;

pub use self::alignment::{
    alignment_curve, alignment_curve_moving, alignment_from_snapshots, cosine_alignment, norm_divergence_check,
    AlignmentPoint, AlignmentReport, NormDivergence, DEFAULT_DIVERGENCE_THRESHOLD,
};
pub use self::decomposition::{gradient_decomposition, sample_terms, GradientDecomposition};
pub use self::grid::{
    best_linear_fit, bias_gap, boundary_grid, label_grid, BiasGap, BoundaryGrid, Bounds, Classifier2d, LinearClassifier,
    LinearFit, NetworkClassifier, MAX_COMPARABLE_ANGLE_DEG,
};
pub use self::logfit::{fit_log_growth, fit_log_growth_points, LogFit, MIN_TAIL_SNAPSHOTS};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("network has {network} weight rows but the target has {target}")]
    ClassMismatch { network: usize, target: usize },
    #[error("need at least {need} snapshots, have {have}")]
    InsufficientSnapshots { have: usize, need: usize },
    #[error("degenerate bounds: {0}")]
    DegenerateBounds(String),
    #[error("boundaries differ by {angle_deg:.1} degrees; offsets are not comparable")]
    Incomparable { angle_deg: f64 },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
