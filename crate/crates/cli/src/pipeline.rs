//! End-to-end experiment: data, training, features, SVM target, analyses,
//! grids and the summary.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use lastlayer::analysis::{
    alignment_curve_moving, best_linear_fit, bias_gap, boundary_grid, cosine_alignment, label_grid,
    BoundaryGrid, Bounds, LinearClassifier, NetworkClassifier,
};
use lastlayer::analysis::export::write_grid_csv;
use lastlayer::data::{generate, is_linearly_separable, separability, LabeledDataset};
use lastlayer::net::{save_checkpoint, train, NetworkParams, Snapshot, TrainingTrace};
use lastlayer::svm::SvmSolution;
use ndarray::{Array1, Array2, Axis};

use crate::commands::{
    analyze_trace, comparable_snapshots, decompose, initial_params, log_fit_if_possible, resolve_learning_rate,
    solve_target, trace_checks, write_dataset, TraceAnalysis, CHECKPOINT_BASE, TRACE_FILE,
};
use crate::config::{ExperimentConfig, Format};
use crate::plots;
use crate::report::{
    write_json, write_text, AlignmentSummary, Check, DatasetSummary, DecompositionSummary, FeatureSummary,
    GridSummary, LogFitSummary, RetrainSummary, Summary, SvmSummary, TrainSummary,
};
use crate::CliError;

pub const SUMMARY_FILE: &str = "summary.json";

/// Half-widths of the appendix zoom windows around the unit-square centre.
pub const APPENDIX_HALF_WIDTHS: [f64; 3] = [0.5, 5.0, 50.0];

/// Everything the pipeline computed, for callers that want more than the summary.
pub struct PipelineOutput {
    pub summary: Summary,
    pub dataset: LabeledDataset,
    pub trace: TrainingTrace,
    pub features: Array2<f64>,
    pub svm: SvmSolution,
    pub feature_grid: Option<BoundaryGrid>,
    pub input_grid: Option<BoundaryGrid>,
    pub appendix_grids: Vec<BoundaryGrid>,
    pub out_dir: PathBuf,
}

fn stage<T>(name: &'static str, r: Result<T, CliError>) -> Result<T, CliError> {
    r.map_err(|e| e.in_stage(name))
}

pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PipelineOutput, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let res = cfg.analysis.grid_resolution;
    let res = (res[0], res[1]);

    let ds = stage("gen-data", generate(&cfg.dataset).map_err(CliError::from))?;
    let input_separable = is_linearly_separable(&ds).separable;
    if cfg.wants(Format::Csv) {
        stage("gen-data", write_dataset(&ds, &out_dir.join("dataset.csv")))?;
    }

    let (trace, lr) = stage("train", train_network(cfg, &ds, out_dir))?;
    let params = trace.final_params().clone();

    let features = stage("features", params.feature_matrix(ds.points()).map_err(CliError::from))?;
    let feat_ds = stage(
        "features",
        LabeledDataset::new(features.clone(), ds.labels().to_vec(), ds.class_count()).map_err(CliError::from),
    )?;
    if cfg.wants(Format::Csv) {
        stage("features", write_dataset(&feat_ds, &out_dir.join("features.csv")))?;
    }
    let feat_sep = separability(&features, ds.labels(), ds.class_count(), true);

    let (svm, kkt) = stage("svm", solve_target(&features, ds.labels(), ds.class_count(), false))?;
    if cfg.wants(Format::Json) {
        stage("svm", write_json(&out_dir.join("svm.json"), &svm.to_record(&kkt)))?;
    }

    let mut analysis = stage("analysis", analyze_trace(&trace.snapshots, &svm, &cfg.analysis))?;
    if cfg.analysis.moving_target {
        analysis = stage("analysis", moving_target_analysis(&trace, &ds, &svm, analysis, &cfg.analysis))?;
    }
    let decomposition = stage(
        "analysis",
        decompose(&params, &features, ds.labels(), cfg.train.loss, &svm),
    )?;
    if cfg.wants(Format::Json) {
        stage("analysis", write_json(&out_dir.join("alignment.json"), &analysis.alignment))?;
        stage("analysis", write_json(&out_dir.join("divergence.json"), &analysis.norm_divergence))?;
        stage("analysis", write_json(&out_dir.join("decomposition.json"), &decomposition))?;
        if let Some(f) = &analysis.log_fit {
            stage("analysis", write_json(&out_dir.join("logfit.json"), f))?;
        }
    }

    let net_last = LinearClassifier::from_last_layer(&params);
    let svm_last = LinearClassifier::new(svm.weights(), None);
    let feature_grid = if features.nrows() == 2 {
        let bounds = stage(
            "grids",
            Bounds::from_points(&features, cfg.analysis.bounds_expand).map_err(CliError::from),
        )?;
        Some(stage("grids", boundary_grid(&net_last, &svm_last, &bounds, res).map_err(CliError::from))?)
    } else {
        None
    };

    let binary = ds.class_count() == 2;
    let (input_grid, input_fit) = if ds.dim() == 2 {
        let (g, fit) = stage("grids", input_space_grid(&params, &Bounds::unit(), res, binary))?;
        (Some(g), fit)
    } else {
        (None, None)
    };

    let mut appendix_grids = Vec::new();
    let mut appendix = Vec::new();
    if cfg.analysis.appendix && ds.dim() == 2 {
        for h in APPENDIX_HALF_WIDTHS {
            let bounds = stage("appendix", Bounds::new(0.5 - h, 0.5 + h, 0.5 - h, 0.5 + h).map_err(CliError::from))?;
            let (g, fit) = stage("appendix", input_space_grid(&params, &bounds, res, binary))?;
            appendix.push(grid_summary(&g, false, fit));
            appendix_grids.push(g);
        }
    }

    let retraining = if cfg.analysis.retrain_last_layer {
        Some(stage("retrain", retrain_last_layer(cfg, &ds, &params, &features, &svm, lr))?)
    } else {
        None
    };

    let mut checks = Vec::new();
    if cfg.train.loss_stop_threshold > 0.0 {
        checks.push(Check::holds("train_converged", trace.converged));
    }
    checks.push(Check::holds("features_separable", feat_sep.separable));
    checks.push(Check::holds("svm_kkt", kkt.passed));
    checks.extend(trace_checks(&analysis, Some(&decomposition), &cfg.analysis));
    if let Some(thr) = cfg.analysis.agreement_threshold {
        let v = feature_grid.as_ref().map_or(f64::NAN, |g| g.agreement);
        checks.push(Check::at_least("feature_grid_agreement", v, thr));
    }
    if let Some(thr) = cfg.analysis.angle_threshold_deg {
        let v = feature_grid.as_ref().and_then(|g| g.normal_angle_deg).unwrap_or(f64::NAN);
        checks.push(Check::at_most("feature_boundary_angle_deg", v, thr));
    }
    if let Some(thr) = cfg.analysis.input_linear_threshold {
        checks.push(Check::at_least(
            "input_linear_fit_agreement",
            input_fit.unwrap_or(f64::NAN),
            thr,
        ));
    }
    let passed = checks.iter().all(|c| c.passed);

    let last = trace.last();
    let summary = Summary {
        dataset: DatasetSummary {
            family: cfg.dataset.family.to_string(),
            sample_count: ds.len(),
            scale: cfg.dataset.scale,
            class_count: ds.class_count(),
            seed: cfg.dataset.seed,
            input_separable,
        },
        train: TrainSummary {
            loss: cfg.train.loss.to_string(),
            learning_rate: lr,
            converged: trace.converged,
            converged_at: trace.converged_at,
            iterations: trace.iterations,
            final_loss: last.map_or(f64::NAN, |s| s.loss),
            final_weight_norm: last.map_or(f64::NAN, |s| s.weight_norm),
        },
        features: FeatureSummary {
            dim: features.nrows(),
            separable: feat_sep.separable,
            lp_margin: feat_sep.margin,
        },
        svm: SvmSummary {
            kind: format!("{:?}", svm.kind()).to_lowercase(),
            weights: svm.weights().outer_iter().map(|r| r.to_vec()).collect(),
            min_margin: svm.min_margin(),
            support_count: svm.support_indices().len(),
            degenerate: svm.degenerate(),
            kkt_passed: kkt.passed,
        },
        alignment: AlignmentSummary {
            per_class_cosine: analysis.alignment.per_class_cosine.clone(),
            final_angle_deg: analysis.alignment.final_angle_deg.clone(),
            min_cosine: analysis.alignment.min_cosine(),
            moving_target: cfg.analysis.moving_target,
        },
        log_fit: analysis.log_fit.as_ref().map(|f| LogFitSummary {
            r_squared: f.r_squared,
            residual_bounded: f.residual_bounded,
            slope: f.slope_vector.clone(),
        }),
        norm_divergence: analysis.norm_divergence.clone(),
        gradient_decomposition: Some(DecompositionSummary {
            support_share: decomposition.support_share,
            support_count: decomposition.support_indices.len(),
        }),
        feature_grid: feature_grid.as_ref().map(|g| grid_summary(g, true, None)),
        input_grid: input_grid.as_ref().map(|g| grid_summary(g, false, input_fit)),
        appendix,
        retraining,
        checks,
        passed,
    };

    stage("report", write_outputs(cfg, out_dir, &summary, &feature_grid, &input_grid, &appendix_grids))?;
    if cfg.wants(Format::Svg) {
        let svg = plots::figure(&ds, &features, &params, &svm, feature_grid.as_ref(), input_grid.as_ref(), &appendix_grids);
        stage("report", write_text(&out_dir.join("figure.svg"), &svg))?;
    }

    Ok(PipelineOutput {
        summary,
        dataset: ds,
        trace,
        features,
        svm,
        feature_grid,
        input_grid,
        appendix_grids,
        out_dir: out_dir.to_path_buf(),
    })
}

fn train_network(cfg: &ExperimentConfig, ds: &LabeledDataset, out_dir: &Path) -> Result<(TrainingTrace, f64), CliError> {
    let p0 = initial_params(cfg, ds);
    let lr = resolve_learning_rate(cfg, &p0, ds)?;
    let mut tc = cfg.train.to_train_config(lr);
    tc.record_params = cfg.analysis.moving_target;
    let trace_path = out_dir.join(TRACE_FILE);
    let trace = match train(&p0, ds, &tc) {
        Ok(t) => t,
        Err(lastlayer::net::TrainError::Overflow { iteration, trace }) => {
            write_json(&trace_path, &trace)?;
            return Err(CliError::Numerical(format!("training overflowed at iteration {iteration}")));
        }
        Err(lastlayer::net::TrainError::Net(e)) => return Err(e.into()),
    };
    if cfg.wants(Format::Json) {
        write_json(&trace_path, &trace)?;
        save_checkpoint(trace.final_params(), &out_dir.join(CHECKPOINT_BASE))?;
    }
    Ok((trace, lr))
}

/// The network's labels over `bounds` against the best single line through
/// them (binary only; multiclass grids compare the network with itself).
fn input_space_grid(
    params: &NetworkParams,
    bounds: &Bounds,
    res: (usize, usize),
    binary: bool,
) -> Result<(BoundaryGrid, Option<f64>), CliError> {
    let net = NetworkClassifier(params);
    if !binary {
        return Ok((boundary_grid(&net, &net, bounds, res)?, None));
    }
    let labels = label_grid(&net, bounds, res)?;
    let fit = best_linear_fit(&bounds.cell_centers(res.0, res.1), &labels)?;
    let grid = boundary_grid(&net, &fit.classifier, bounds, res)?;
    Ok((grid, Some(fit.agreement)))
}

fn grid_summary(g: &BoundaryGrid, comparative: bool, linear_fit: Option<f64>) -> GridSummary {
    GridSummary {
        resolution: [g.resolution.0, g.resolution.1],
        bounds: g.bounds,
        agreement: comparative.then_some(g.agreement),
        normal_angle_deg: if comparative { g.normal_angle_deg } else { None },
        linear_fit_agreement: linear_fit,
    }
}

/// Alignment against the SVM of the features at each snapshot. Snapshots
/// whose features are not yet separable through the origin are skipped.
fn moving_target_analysis(
    trace: &TrainingTrace,
    ds: &LabeledDataset,
    final_svm: &SvmSolution,
    fixed: TraceAnalysis,
    cfg: &crate::config::AnalysisConfig,
) -> Result<TraceAnalysis, CliError> {
    if trace.snapshot_params.len() != trace.snapshots.len() {
        return Err(CliError::Invalid("trace has no per-snapshot parameters".into()));
    }
    let rows = final_svm.weights().nrows();
    let snaps = comparable_snapshots(&trace.snapshots, rows);
    let mut kept: Vec<Snapshot> = Vec::new();
    let mut targets: Vec<Array2<f64>> = Vec::new();
    for (s, p) in snaps.iter().zip(&trace.snapshot_params) {
        let f = p.feature_matrix(ds.points())?;
        match solve_target(&f, ds.labels(), ds.class_count(), false) {
            Ok((svm, _)) => {
                kept.push(s.clone());
                targets.push(svm.weights());
            }
            Err(CliError::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(CliError::Infeasible("features never separable at any snapshot".into()));
    }
    Ok(TraceAnalysis {
        alignment: alignment_curve_moving(&kept, &targets)?,
        log_fit: log_fit_if_possible(&snaps, cfg.tail_fraction)?,
        norm_divergence: fixed.norm_divergence,
    })
}

/// Freezes the trained feature map, reinitialises the last layer and trains
/// it alone, then compares both last layers' offsets with the SVM boundary.
fn retrain_last_layer(
    cfg: &ExperimentConfig,
    ds: &LabeledDataset,
    params: &NetworkParams,
    features: &Array2<f64>,
    svm: &SvmSolution,
    lr: f64,
) -> Result<RetrainSummary, CliError> {
    let fresh = NetworkParams::init(&params.architecture(), cfg.architecture.init_seed.wrapping_add(1));
    let mut start = params.clone();
    start.last_weight = fresh.last_weight;
    start.last_bias = fresh.last_bias;
    let mut tc = cfg.train.to_train_config(lr);
    tc.train_hidden = false;
    let trace = train(&start, ds, &tc).map_err(|e| match e {
        lastlayer::net::TrainError::Overflow { iteration, .. } => {
            CliError::Numerical(format!("retraining overflowed at iteration {iteration}"))
        }
        lastlayer::net::TrainError::Net(e) => e.into(),
    })?;
    let retrained = trace.final_params();
    let svm_w = svm.weights();
    let gap = |p: &NetworkParams| -> Option<f64> {
        let (n, c) = LinearClassifier::from_last_layer(p).binary_boundary()?;
        if svm_w.nrows() != 1 {
            return None;
        }
        bias_gap(n.view(), c, svm_w.row(0), 0.0, features).ok().map(|g| g.gap)
    };
    let cos = last_layer_cosines(retrained, &svm_w)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(RetrainSummary {
        whole_network_bias_gap: gap(params),
        retrained_bias_gap: gap(retrained),
        retrained_cosine: cos,
        retrained_converged: trace.converged,
    })
}

fn last_layer_cosines(p: &NetworkParams, target: &Array2<f64>) -> Vec<f64> {
    let w: Array2<f64> = if p.last_weight.nrows() == 2 && target.nrows() == 1 {
        let d: Array1<f64> = &p.last_weight.row(0) - &p.last_weight.row(1);
        d.insert_axis(Axis(0))
    } else {
        p.last_weight.clone()
    };
    w.outer_iter()
        .zip(target.outer_iter())
        .map(|(a, b)| cosine_alignment(a, b).unwrap_or(f64::NAN))
        .collect()
}

fn write_outputs(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    summary: &Summary,
    feature_grid: &Option<BoundaryGrid>,
    input_grid: &Option<BoundaryGrid>,
    appendix: &[BoundaryGrid],
) -> Result<(), CliError> {
    write_json(&out_dir.join(SUMMARY_FILE), summary)?;
    if cfg.wants(Format::Csv) {
        let mut grids: Vec<(String, &BoundaryGrid)> = Vec::new();
        if let Some(g) = feature_grid {
            grids.push(("feature_grid.csv".into(), g));
        }
        if let Some(g) = input_grid {
            grids.push(("input_grid.csv".into(), g));
        }
        for (i, g) in appendix.iter().enumerate() {
            grids.push((format!("appendix_zoom_{i}.csv"), g));
        }
        for (name, g) in grids {
            let path = out_dir.join(name);
            let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
            write_grid_csv(g, BufWriter::new(f))?;
        }
    }
    Ok(())
}
