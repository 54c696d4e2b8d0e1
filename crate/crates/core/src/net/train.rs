//! Gradient-descent training with last-layer snapshots.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backprop::{gradient_on, last_layer_gradient};
use super::loss::{logit_loss_and_grad, max_step_size, LossKind};
use super::{NetError, NetworkParams};
use crate::data::LabeledDataset;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Net(#[from] NetError),
    /// Training produced a non-finite loss or gradient. The partial trace up
    /// to the last finite iterate is attached.
    #[error("numerical overflow at iteration {iteration}")]
    Overflow {
        iteration: u64,
        trace: Box<TrainingTrace>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Gd,
    Sgd,
    Momentum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SnapshotSchedule {
    /// `count` log-spaced iterations from `start` to `max_iterations`.
    Geometric { start: u64, count: usize },
    /// Every `interval` iterations.
    Every { interval: u64 },
    Explicit { iterations: Vec<u64> },
}

impl Default for SnapshotSchedule {
    fn default() -> Self {
        SnapshotSchedule::Geometric { start: 10, count: 50 }
    }
}

impl SnapshotSchedule {
    /// Sorted, de-duplicated snapshot iterations within `[1, max_iterations]`.
    pub fn iterations(&self, max_iterations: u64) -> Vec<u64> {
        let mut its: Vec<u64> = match self {
            SnapshotSchedule::Geometric { start, count } => {
                let start = (*start).max(1).min(max_iterations);
                if *count <= 1 || start == max_iterations {
                    vec![max_iterations]
                } else {
                    let (lo, hi) = ((start as f64).ln(), (max_iterations as f64).ln());
                    (0..*count)
                        .map(|i| {
                            let f = i as f64 / (*count - 1) as f64;
                            ((lo + f * (hi - lo)).exp().round() as u64).clamp(1, max_iterations)
                        })
                        .collect()
                }
            }
            SnapshotSchedule::Every { interval } => {
                let step = (*interval).max(1);
                (1..=max_iterations / step).map(|i| i * step).collect()
            }
            SnapshotSchedule::Explicit { iterations } => iterations.clone(),
        };
        its.retain(|&t| t >= 1 && t <= max_iterations);
        its.sort_unstable();
        its.dedup();
        its
    }
}

/// Periodic step-size refresh from the current admissible bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoStep {
    /// Fraction of [`max_step_size`] to use (below 1 keeps the step admissible).
    pub fraction: f64,
    pub refresh_every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    #[serde(default = "default_optimizer")]
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub max_iterations: u64,
    #[serde(default)]
    pub snapshots: SnapshotSchedule,
    #[serde(default)]
    pub loss_stop_threshold: f64,
    /// What happens once the loss first drops to `loss_stop_threshold` at
    /// iteration `t_c`: `None` keeps training to `max_iterations`, `Some(f)`
    /// stops at iteration `ceil(f * t_c)` (so `Some(1.0)` stops immediately).
    #[serde(default)]
    pub extension_factor: Option<f64>,
    #[serde(default)]
    pub auto_step: Option<AutoStep>,
    /// When false the transformation is frozen and only the last layer moves.
    #[serde(default = "default_true")]
    pub train_hidden: bool,
    /// Keep a full copy of the parameters at every snapshot (in memory only).
    #[serde(default)]
    pub record_params: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_optimizer() -> Optimizer {
    Optimizer::Gd
}

fn default_batch() -> usize {
    32
}

fn default_true() -> bool {
    true
}

impl TrainConfig {
    /// Full-batch GD to `max_iterations` with the default geometric schedule.
    pub fn gd(loss: LossKind, learning_rate: f64, max_iterations: u64) -> Self {
        Self {
            loss,
            optimizer: Optimizer::Gd,
            learning_rate,
            momentum: 0.0,
            batch_size: default_batch(),
            max_iterations,
            snapshots: SnapshotSchedule::default(),
            loss_stop_threshold: 0.0,
            extension_factor: None,
            auto_step: None,
            train_hidden: true,
            record_params: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::InvalidConfig(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if self.loss_stop_threshold < 0.0 || self.loss_stop_threshold.is_nan() {
            return bad("loss_stop_threshold must be >= 0".into());
        }
        if let Some(f) = self.extension_factor {
            if !(f >= 1.0 && f.is_finite()) {
                return bad(format!("extension_factor must be >= 1, got {f}"));
            }
        }
        if let SnapshotSchedule::Explicit { iterations } = &self.snapshots {
            if let Some(&t) = iterations.iter().find(|&&t| t < 1 || t > self.max_iterations) {
                return bad(format!("snapshot iteration {t} outside [1, {}]", self.max_iterations));
            }
        }
        if let Some(a) = &self.auto_step {
            if self.loss == LossKind::CrossEntropy {
                return Err(NetError::NoStepBound(self.loss));
            }
            if !(a.fraction > 0.0) || a.refresh_every == 0 {
                return bad("auto_step needs fraction > 0 and refresh_every > 0".into());
            }
        }
        Ok(())
    }
}

/// Last-layer state at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SnapshotRecord", try_from = "SnapshotRecord")]
pub struct Snapshot {
    pub iteration: u64,
    pub last_weight: Array2<f64>,
    pub last_bias: Option<Array1<f64>>,
    /// Total loss at this iterate.
    pub loss: f64,
    /// Frobenius norm of `last_weight`.
    pub weight_norm: f64,
}

/// Serialized form: weights flattened row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapshotRecord {
    t: u64,
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    bias: Option<Vec<f64>>,
    loss: f64,
    norm: f64,
}

impl From<Snapshot> for SnapshotRecord {
    fn from(s: Snapshot) -> Self {
        let (rows, cols) = s.last_weight.dim();
        SnapshotRecord {
            t: s.iteration,
            rows,
            cols,
            w: s.last_weight.iter().copied().collect(),
            bias: s.last_bias.map(|b| b.to_vec()),
            loss: s.loss,
            norm: s.weight_norm,
        }
    }
}

impl TryFrom<SnapshotRecord> for Snapshot {
    type Error = String;

    fn try_from(r: SnapshotRecord) -> Result<Self, Self::Error> {
        let w = Array2::from_shape_vec((r.rows, r.cols), r.w).map_err(|e| e.to_string())?;
        Ok(Snapshot {
            iteration: r.t,
            last_weight: w,
            last_bias: r.bias.map(Array1::from),
            loss: r.loss,
            weight_norm: r.norm,
        })
    }
}

impl Snapshot {
    pub fn new(iteration: u64, last_weight: Array2<f64>, last_bias: Option<Array1<f64>>, loss: f64) -> Self {
        let weight_norm = last_weight.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self {
            iteration,
            last_weight,
            last_bias,
            loss,
            weight_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub config: TrainConfig,
    pub snapshots: Vec<Snapshot>,
    /// Loss first reached `loss_stop_threshold`.
    pub converged: bool,
    pub converged_at: Option<u64>,
    /// Number of parameter updates performed.
    pub iterations: u64,
    pub overflow_at: Option<u64>,
    #[serde(skip)]
    pub final_params: Option<NetworkParams>,
    /// Parameters at each snapshot, when `record_params` was set.
    #[serde(skip)]
    pub snapshot_params: Vec<NetworkParams>,
}

impl TrainingTrace {
    pub fn final_params(&self) -> &NetworkParams {
        self.final_params.as_ref().expect("trace was not produced by train()")
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }
}

struct Recorder {
    schedule: Vec<u64>,
    next: usize,
    snapshots: Vec<Snapshot>,
    keep_params: bool,
    params: Vec<NetworkParams>,
}

impl Recorder {
    fn due(&mut self, t: u64) -> bool {
        while self.next < self.schedule.len() && self.schedule[self.next] < t {
            self.next += 1;
        }
        self.next < self.schedule.len() && self.schedule[self.next] == t
    }

    fn record(&mut self, t: u64, params: &NetworkParams, loss: f64) {
        if self.snapshots.last().is_some_and(|s| s.iteration >= t) {
            return;
        }
        self.snapshots
            .push(Snapshot::new(t, params.last_weight.clone(), params.last_bias.clone(), loss));
        if self.keep_params {
            self.params.push(params.clone());
        }
    }
}

/// Runs the configured optimizer from `params0`.
///
/// GD uses the full-batch gradient; SGD reshuffles each epoch with
/// `ChaCha8Rng(seed)` and steps on `batch_size` mini-batches; momentum uses
/// `v <- mu v - eta grad`, `theta <- theta + v`. Snapshots are taken at the
/// scheduled iterations and always at the final iterate.
pub fn train(params0: &NetworkParams, ds: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainingTrace, TrainError> {
    cfg.validate()?;
    params0.validate()?;
    cfg.loss.check(params0.output_dim(), ds.class_count())?;
    if ds.dim() != params0.input_dim() {
        return Err(NetError::Shape(format!(
            "dataset dimension {} but network expects {}",
            ds.dim(),
            params0.input_dim()
        ))
        .into());
    }

    let kind = cfg.loss;
    let labels = ds.labels();
    let n = ds.len();
    let frozen_features = if cfg.train_hidden {
        None
    } else {
        Some(params0.feature_matrix(ds.points())?)
    };

    let mut params = params0.clone();
    let mut velocity = (cfg.optimizer == Optimizer::Momentum).then(|| params.zeros_like());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let batch = cfg.batch_size.min(n);
    let steps_per_epoch = n.div_ceil(batch) as u64;
    let mut cursor = n;

    let mut rec = Recorder {
        schedule: cfg.snapshots.iterations(cfg.max_iterations),
        next: 0,
        snapshots: Vec::new(),
        keep_params: cfg.record_params,
        params: Vec::new(),
    };
    let mut eta = cfg.learning_rate;
    let mut converged_at: Option<u64> = None;
    let mut stop_at = cfg.max_iterations;

    let full_loss = |p: &NetworkParams| -> Result<f64, NetError> {
        let z = match &frozen_features {
            Some(f) => p.logits_from_features(f),
            None => p.logit_matrix(ds.points())?,
        };
        Ok(logit_loss_and_grad(&z, labels, kind, false)?.0)
    };

    let mut completed = 0u64;

    macro_rules! overflow {
        ($t:expr, $p:expr) => {{
            let trace = TrainingTrace {
                config: cfg.clone(),
                snapshots: rec.snapshots.clone(),
                converged: converged_at.is_some(),
                converged_at,
                iterations: $t - 1,
                overflow_at: Some($t),
                final_params: Some($p.clone()),
                snapshot_params: rec.params.clone(),
            };
            return Err(TrainError::Overflow {
                iteration: $t,
                trace: Box::new(trace),
            });
        }};
    }

    let mut t = 1u64;
    while t <= stop_at {
        if let Some(auto) = &cfg.auto_step {
            if (t - 1) % auto.refresh_every == 0 {
                match max_step_size(&params, ds, kind) {
                    Ok(b) if b.is_finite() => eta = auto.fraction * b,
                    Ok(_) => {}
                    Err(NetError::NumericalOverflow(_)) => overflow!(t, params),
                    Err(e) => return Err(e.into()),
                }
            }
        }

        let full_batch = cfg.optimizer != Optimizer::Sgd;
        let step = if full_batch {
            match &frozen_features {
                Some(f) => last_layer_gradient(&params, f, labels, kind).map(|(l, dw, db)| (l, last_layer_only(&params, dw, db))),
                None => gradient_on(&params, ds.points(), labels, kind),
            }
        } else {
            if cursor >= n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let idx = &order[cursor..(cursor + batch).min(n)];
            cursor += batch;
            let sub_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            match &frozen_features {
                Some(f) => {
                    let sub = f.select(Axis(1), idx);
                    last_layer_gradient(&params, &sub, &sub_labels, kind)
                        .map(|(l, dw, db)| (l, last_layer_only(&params, dw, db)))
                }
                None => {
                    let sub = ds.points().select(Axis(1), idx);
                    gradient_on(&params, &sub, &sub_labels, kind)
                }
            }
        };
        let (batch_loss, grad) = match step {
            Ok(v) => v,
            Err(NetError::NumericalOverflow(_)) => overflow!(t, params),
            Err(e) => return Err(e.into()),
        };

        if full_batch {
            // batch_loss is the loss at iterate t - 1
            if converged_at.is_none() && batch_loss <= cfg.loss_stop_threshold {
                converged_at = Some(t - 1);
                if let Some(f) = cfg.extension_factor {
                    stop_at = stop_at.min(((f * (t - 1) as f64).ceil() as u64).max(t - 1));
                }
            }
            if t - 1 >= stop_at {
                break;
            }
        }

        match velocity.as_mut() {
            Some(v) => {
                v.scale(cfg.momentum);
                v.axpy(-eta, &grad);
                params.axpy(1.0, v);
            }
            None => params.axpy(-eta, &grad),
        }
        let norm_sq: f64 = params.last_weight.iter().map(|v| v * v).sum();
        if !norm_sq.is_finite() || params.flatten().iter().any(|v| !v.is_finite()) {
            overflow!(t, params);
        }
        completed = t;

        let epoch_end = !full_batch && t % steps_per_epoch == 0;
        let snapshot_due = rec.due(t);
        if snapshot_due || epoch_end || t == stop_at {
            let l = match full_loss(&params) {
                Ok(l) => l,
                Err(NetError::NumericalOverflow(_)) => overflow!(t, params),
                Err(e) => return Err(e.into()),
            };
            if !full_batch && converged_at.is_none() && l <= cfg.loss_stop_threshold {
                converged_at = Some(t);
                if let Some(f) = cfg.extension_factor {
                    stop_at = stop_at.min(((f * t as f64).ceil() as u64).max(t));
                }
            }
            if snapshot_due || t == stop_at {
                rec.record(t, &params, l);
            }
        }
        t += 1;
    }

    if rec.snapshots.last().is_none_or(|s| s.iteration < completed) {
        let l = full_loss(&params)?;
        rec.record(completed, &params, l);
    }

    Ok(TrainingTrace {
        config: cfg.clone(),
        snapshots: rec.snapshots,
        converged: converged_at.is_some(),
        converged_at,
        iterations: completed,
        overflow_at: None,
        final_params: Some(params),
        snapshot_params: rec.params,
    })
}

fn last_layer_only(params: &NetworkParams, dw: Array2<f64>, db: Option<Array1<f64>>) -> NetworkParams {
    let mut g = params.zeros_like();
    g.last_weight = dw;
    g.last_bias = db;
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{gradient, Architecture};
    use ndarray::array;

    #[test]
    fn geometric_schedule_spans_range() {
        let its = SnapshotSchedule::default().iterations(100_000);
        assert_eq!(its.first(), Some(&10));
        assert_eq!(its.last(), Some(&100_000));
        assert!(its.len() >= 45 && its.len() <= 50);
        assert!(its.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn explicit_schedule_out_of_range_rejected() {
        let mut cfg = TrainConfig::gd(LossKind::Logistic, 0.1, 10);
        cfg.snapshots = SnapshotSchedule::Explicit { iterations: vec![0, 5] };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn one_step_matches_update_rule() {
        let ds = LabeledDataset::new(array![[1.0, -1.0, 0.5], [0.2, 0.4, -1.0]], vec![1, 2, 1], 2).unwrap();
        let p0 = NetworkParams::init(&Architecture::two_stage(2, 5, 2, 1, true), 4);
        let mut cfg = TrainConfig::gd(LossKind::Logistic, 0.05, 1);
        cfg.snapshots = SnapshotSchedule::Every { interval: 1 };
        let trace = train(&p0, &ds, &cfg).unwrap();
        let (_, g) = gradient(&p0, &ds, LossKind::Logistic).unwrap();
        let mut expect = p0.clone();
        expect.axpy(-0.05, &g);
        assert_eq!(trace.final_params(), &expect);
        assert_eq!(trace.iterations, 1);
        assert_eq!(trace.snapshots.len(), 1);
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let ds = LabeledDataset::new(array![[1.0, -1.0], [0.2, 0.4]], vec![1, 2], 2).unwrap();
        let p0 = NetworkParams::init(&Architecture::linear(2, 1, false), 4);
        let cfg = TrainConfig::gd(LossKind::Logistic, 0.0, 1000);
        let trace = train(&p0, &ds, &cfg).unwrap();
        assert!(!trace.converged);
        assert!(trace.snapshots.iter().all(|s| s.last_weight == p0.last_weight));
    }

    #[test]
    fn stops_after_extension() {
        let ds = LabeledDataset::new(array![[1.0, -1.0], [0.0, 0.0]], vec![1, 2], 2).unwrap();
        let p0 = NetworkParams::init(&Architecture::linear(2, 1, false), 1);
        let mut cfg = TrainConfig::gd(LossKind::Logistic, 1.0, 1_000_000);
        cfg.loss_stop_threshold = 1e-2;
        cfg.extension_factor = Some(3.0);
        let trace = train(&p0, &ds, &cfg).unwrap();
        let tc = trace.converged_at.unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations, 3 * tc);
        assert_eq!(trace.last().unwrap().iteration, 3 * tc);

        cfg.extension_factor = Some(1.0);
        let trace = train(&p0, &ds, &cfg).unwrap();
        assert_eq!(trace.iterations, trace.converged_at.unwrap());
    }

    #[test]
    fn overflow_reports_iteration() {
        let ds = LabeledDataset::new(array![[1.0, -1.0], [0.0, 0.0]], vec![1, 2], 2).unwrap();
        let mut p0 = NetworkParams::init(&Architecture::linear(2, 1, false), 1);
        p0.last_weight = array![[-1.0, 0.0]];
        // huge step on the exponential loss drives the margins to -inf
        let cfg = TrainConfig::gd(LossKind::Exponential, 1e200, 50);
        match train(&p0, &ds, &cfg) {
            Err(TrainError::Overflow { iteration, trace }) => {
                assert!(iteration >= 1);
                assert_eq!(trace.overflow_at, Some(iteration));
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn frozen_hidden_only_moves_last_layer() {
        let ds = LabeledDataset::new(array![[1.0, -1.0, 0.5], [0.2, 0.4, -1.0]], vec![1, 2, 1], 2).unwrap();
        let p0 = NetworkParams::init(&Architecture::two_stage(2, 5, 2, 1, true), 4);
        let mut cfg = TrainConfig::gd(LossKind::Logistic, 0.1, 100);
        cfg.train_hidden = false;
        let trace = train(&p0, &ds, &cfg).unwrap();
        assert_eq!(trace.final_params().hidden, p0.hidden);
        assert_ne!(trace.final_params().last_weight, p0.last_weight);
    }

    #[test]
    fn sgd_and_momentum_are_deterministic() {
        let ds = LabeledDataset::new(
            array![[1.0, -1.0, 0.5, 0.3, -0.2], [0.2, 0.4, -1.0, 0.9, -0.5]],
            vec![1, 2, 1, 2, 1],
            2,
        )
        .unwrap();
        let p0 = NetworkParams::init(&Architecture::two_stage(2, 5, 2, 1, true), 4);
        for opt in [Optimizer::Sgd, Optimizer::Momentum] {
            let mut cfg = TrainConfig::gd(LossKind::Logistic, 0.05, 200);
            cfg.optimizer = opt;
            cfg.momentum = 0.9;
            cfg.batch_size = 2;
            cfg.seed = 17;
            let a = train(&p0, &ds, &cfg).unwrap();
            let b = train(&p0, &ds, &cfg).unwrap();
            assert_eq!(a, b);
            assert!(a.last().unwrap().loss < crate::net::loss_eval(&p0, &ds, LossKind::Logistic).unwrap());
        }
    }

    #[test]
    fn trace_json_round_trip() {
        let ds = LabeledDataset::new(array![[1.0, -1.0], [0.2, 0.4]], vec![1, 2], 2).unwrap();
        let p0 = NetworkParams::init(&Architecture::linear(2, 1, true), 4);
        let trace = train(&p0, &ds, &TrainConfig::gd(LossKind::Logistic, 0.1, 100)).unwrap();
        let text = serde_json::to_string(&trace).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(value["snapshots"][0]["w"].is_array());
        assert!(value["config"]["loss"] == "logistic");
        let back: TrainingTrace = serde_json::from_str(&text).unwrap();
        assert_eq!(back.snapshots, trace.snapshots);
    }
}
