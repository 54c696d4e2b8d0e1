use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use lastlayer::analysis::{
    alignment_from_snapshots, fit_log_growth, gradient_decomposition, norm_divergence_check, AlignmentReport,
    GradientDecomposition, LogFit, NormDivergence, MIN_TAIL_SNAPSHOTS,
};
use lastlayer::data::{generate, is_linearly_separable, read_csv, separability, to_signed, write_csv, DatasetSpec, LabeledDataset};
use lastlayer::net::{
    load_checkpoint, max_step_size, save_checkpoint, train, LossKind, NetworkParams, Snapshot, TrainError, TrainingTrace,
};
use lastlayer::svm::{
    solve_binary, solve_multiclass, verify_kkt, KktReport, KktTolerances, SvmProblem, SvmRecord, SvmSolution,
};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisConfig, ExperimentConfig};
use crate::report::{read_json, write_json, Check};
use crate::CliError;

pub const TRACE_FILE: &str = "trace.json";
pub const CHECKPOINT_BASE: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenDataReport {
    pub samples: usize,
    pub classes: usize,
    pub separable: bool,
}

pub fn cmd_gen_data(spec: &DatasetSpec, out: &Path) -> Result<GenDataReport, CliError> {
    let ds = generate(spec)?;
    write_dataset(&ds, out)?;
    Ok(GenDataReport {
        samples: ds.len(),
        classes: ds.class_count(),
        separable: is_linearly_separable(&ds).separable,
    })
}

pub fn write_dataset(ds: &LabeledDataset, out: &Path) -> Result<(), CliError> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let f = File::create(out).map_err(|e| CliError::io(out, e))?;
    write_csv(ds, BufWriter::new(f))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_csv(std::io::BufReader::new(f)).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

/// Initial parameters for the configured architecture.
pub fn initial_params(cfg: &ExperimentConfig, ds: &LabeledDataset) -> NetworkParams {
    let outputs = cfg.train.loss.outputs_for(ds.class_count());
    NetworkParams::init(&cfg.architecture.build(ds.dim(), outputs), cfg.architecture.init_seed)
}

pub fn resolve_learning_rate(cfg: &ExperimentConfig, p0: &NetworkParams, ds: &LabeledDataset) -> Result<f64, CliError> {
    match (cfg.train.learning_rate, cfg.train.step_fraction) {
        (Some(lr), _) => Ok(lr),
        (None, Some(f)) => Ok(f * max_step_size(p0, ds, cfg.train.loss)?),
        (None, None) => Err(CliError::Invalid("no learning rate configured".into())),
    }
}

pub struct TrainRun {
    pub dataset: LabeledDataset,
    pub learning_rate: f64,
    pub trace: TrainingTrace,
}

/// Generates the dataset and trains. On overflow the partial trace is
/// written to `overflow_trace` (if given) before the error is returned.
pub fn run_training(
    cfg: &ExperimentConfig,
    record_params: bool,
    overflow_trace: Option<&Path>,
) -> Result<TrainRun, CliError> {
    let ds = generate(&cfg.dataset)?;
    let p0 = initial_params(cfg, &ds);
    let lr = resolve_learning_rate(cfg, &p0, &ds)?;
    let mut tc = cfg.train.to_train_config(lr);
    tc.record_params = record_params;
    match train(&p0, &ds, &tc) {
        Ok(trace) => Ok(TrainRun {
            dataset: ds,
            learning_rate: lr,
            trace,
        }),
        Err(TrainError::Overflow { iteration, trace }) => {
            if let Some(path) = overflow_trace {
                write_json(path, &trace)?;
            }
            Err(CliError::Numerical(format!("training overflowed at iteration {iteration}")))
        }
        Err(TrainError::Net(e)) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub converged: bool,
    pub converged_at: Option<u64>,
    pub iterations: u64,
    pub final_loss: f64,
    pub trace: PathBuf,
    pub checkpoint: PathBuf,
}

/// Trains per the config and writes `trace.json` plus the final checkpoint.
pub fn cmd_train(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainReport, CliError> {
    let trace_path = out_dir.join(TRACE_FILE);
    let run = run_training(cfg, false, Some(&trace_path))?;
    write_json(&trace_path, &run.trace)?;
    let (bin, _) = save_checkpoint(run.trace.final_params(), &out_dir.join(CHECKPOINT_BASE))?;
    Ok(TrainReport {
        converged: run.trace.converged,
        converged_at: run.trace.converged_at,
        iterations: run.trace.iterations,
        final_loss: run.trace.last().map_or(f64::NAN, |s| s.loss),
        trace: trace_path,
        checkpoint: bin,
    })
}

/// Solves the hard-margin SVM matching the label count: binary on signed
/// points for two classes (unless `force_multiclass`), Crammer-Singer otherwise.
pub fn solve_target(
    points: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
    force_multiclass: bool,
) -> Result<(SvmSolution, KktReport), CliError> {
    let tol = KktTolerances::default();
    let ds = LabeledDataset::new(points.clone(), labels.to_vec(), class_count)?;
    let outcome = if class_count == 2 && !force_multiclass {
        let signed = to_signed(&ds)?;
        solve_binary(&signed).map(|s| {
            let sol = SvmSolution::Binary(s);
            let rep = verify_kkt(&sol, &SvmProblem::Binary(&signed), &tol);
            (sol, rep)
        })
    } else {
        solve_multiclass(points, labels, class_count).map(|s| {
            let sol = SvmSolution::Multiclass(s);
            let problem = SvmProblem::Multiclass {
                features: points,
                labels,
                class_count,
            };
            let rep = verify_kkt(&sol, &problem, &tol);
            (sol, rep)
        })
    };
    match outcome {
        Ok(v) => Ok(v),
        Err(e @ (lastlayer::svm::SvmError::Infeasible { .. } | lastlayer::svm::SvmError::InfeasibleThroughOrigin { .. })) => {
            let sep = separability(points, labels, class_count, true);
            let cert: Vec<String> = sep.certificate.iter().map(|(i, w)| format!("{i}:{w:.6e}")).collect();
            Err(CliError::Infeasible(format!("{e}; LP certificate [{}]", cert.join(", "))))
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub kind: String,
    pub weights: Vec<Vec<f64>>,
    pub kkt_passed: bool,
}

pub fn cmd_solve_svm(input: &Path, multiclass: bool, out: &Path) -> Result<SolveReport, CliError> {
    let ds = read_dataset(input)?;
    if ds.class_count() > 2 && !multiclass {
        return Err(CliError::Invalid(format!(
            "{} classes in {}; pass --multiclass",
            ds.class_count(),
            input.display()
        )));
    }
    let (sol, rep) = solve_target(ds.points(), ds.labels(), ds.class_count(), multiclass)?;
    let record = sol.to_record(&rep);
    write_json(out, &record)?;
    Ok(SolveReport {
        kind: format!("{:?}", sol.kind()).to_lowercase(),
        weights: record.weights,
        kkt_passed: rep.passed,
    })
}

/// Snapshots whose last layer has the row count of `target`. A two-logit
/// network compared with a one-row binary SVM uses `W_1 - W_2`.
pub fn comparable_snapshots(snapshots: &[Snapshot], target_rows: usize) -> Vec<Snapshot> {
    snapshots
        .iter()
        .map(|s| {
            if s.last_weight.nrows() == 2 && target_rows == 1 {
                let diff = (&s.last_weight.row(0) - &s.last_weight.row(1)).insert_axis(ndarray::Axis(0));
                Snapshot::new(s.iteration, diff, None, s.loss)
            } else {
                s.clone()
            }
        })
        .collect()
}

/// The trace-level analyses shared by `analyze` and `pipeline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceAnalysis {
    pub alignment: AlignmentReport,
    pub log_fit: Option<LogFit>,
    pub norm_divergence: NormDivergence,
}

pub fn analyze_trace(
    snapshots: &[Snapshot],
    svm: &SvmSolution,
    analysis: &AnalysisConfig,
) -> Result<TraceAnalysis, CliError> {
    let target = svm.weights();
    let snaps = comparable_snapshots(snapshots, target.nrows());
    let alignment = alignment_from_snapshots(&snaps, &target)?;
    Ok(TraceAnalysis {
        alignment,
        log_fit: log_fit_if_possible(&snaps, analysis.tail_fraction)?,
        norm_divergence: norm_divergence_check(&snaps, analysis.divergence_threshold)?,
    })
}

pub fn log_fit_if_possible(snapshots: &[Snapshot], tail_fraction: f64) -> Result<Option<LogFit>, CliError> {
    match fit_log_growth(snapshots, tail_fraction) {
        Ok(f) => Ok(Some(f)),
        Err(lastlayer::analysis::AnalysisError::InsufficientSnapshots { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Checks that depend only on the trace analysis and the decomposition.
pub fn trace_checks(
    a: &TraceAnalysis,
    decomposition: Option<&GradientDecomposition>,
    cfg: &AnalysisConfig,
) -> Vec<Check> {
    let mut checks = vec![Check::at_least(
        "alignment_min_cosine",
        a.alignment.min_cosine(),
        cfg.alignment_threshold,
    )];
    if cfg.require_divergence {
        checks.push(Check::above(
            "norm_divergence_ratio",
            a.norm_divergence.ratio,
            cfg.divergence_threshold,
        ));
    }
    if let Some(r2) = cfg.r_squared_threshold {
        let v = a.log_fit.as_ref().map_or(f64::NAN, |f| f.r_squared);
        checks.push(Check::at_least("log_fit_r_squared", v, r2));
    }
    if let Some(share) = cfg.support_share_threshold {
        let v = decomposition.map_or(f64::NAN, |d| d.support_share);
        checks.push(Check::at_least("support_share", v, share));
    }
    checks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Optional inputs that enable the gradient decomposition.
pub struct DecompositionInputs<'a> {
    pub dataset: &'a Path,
    pub checkpoint: &'a Path,
}

/// Reads a trace and an SVM solution, writes the reports into `out_dir`
/// and evaluates the configured thresholds.
pub fn cmd_analyze(
    trace_path: &Path,
    svm_path: &Path,
    analysis: &AnalysisConfig,
    decomposition: Option<DecompositionInputs<'_>>,
    out_dir: &Path,
) -> Result<AnalyzeReport, CliError> {
    let trace: TrainingTrace = read_json(trace_path)?;
    let record: SvmRecord = read_json(svm_path)?;
    let svm = SvmSolution::from_record(&record).map_err(|e| CliError::Invalid(e.to_string()))?;
    let a = analyze_trace(&trace.snapshots, &svm, analysis)?;
    write_json(&out_dir.join("alignment.json"), &a.alignment)?;
    write_json(&out_dir.join("divergence.json"), &a.norm_divergence)?;
    if let Some(f) = &a.log_fit {
        write_json(&out_dir.join("logfit.json"), f)?;
    } else if analysis.r_squared_threshold.is_some() {
        eprintln!("log fit skipped: fewer than {MIN_TAIL_SNAPSHOTS} snapshots in the tail");
    }
    let dec = match decomposition {
        Some(inputs) => {
            let ds = read_dataset(inputs.dataset)?;
            let params = load_checkpoint(inputs.checkpoint)?;
            let feats = params.feature_matrix(ds.points())?;
            let d = decompose(&params, &feats, ds.labels(), trace.config.loss, &svm)?;
            write_json(&out_dir.join("decomposition.json"), &d)?;
            Some(d)
        }
        None => None,
    };
    let checks = trace_checks(&a, dec.as_ref(), analysis);
    let passed = checks.iter().all(|c| c.passed);
    let report = AnalyzeReport { checks, passed };
    write_json(&out_dir.join("analysis.json"), &report)?;
    Ok(report)
}

/// Gradient decomposition; a two-logit cross-entropy network against a
/// binary SVM is decomposed with its own loss but the SVM's support set.
pub fn decompose(
    params: &NetworkParams,
    features: &Array2<f64>,
    labels: &[usize],
    loss: LossKind,
    svm: &SvmSolution,
) -> Result<GradientDecomposition, CliError> {
    Ok(gradient_decomposition(params, features, labels, loss, svm)?)
}
