use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lastlayer::data::{DatasetSpec, Family};
use lastlayer_cli::commands::{self, DecompositionInputs};
use lastlayer_cli::config::{resolve_out_dir, AnalysisConfig, ExperimentConfig};
use lastlayer_cli::report::Check;
use lastlayer_cli::{pipeline, CliError, EXIT_THRESHOLDS_UNMET};

#[derive(Parser)]
#[command(name = "lastlayer", version, about = "Last-layer max-margin experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    GenData {
        #[arg(long)]
        family: Family,
        /// Sample count.
        #[arg(long = "n", alias = "samples")]
        samples: usize,
        #[arg(long, default_value_t = 100.0)]
        scale: f64,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network from a TOML config; writes trace.json and a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Solve the hard-margin SVM on a CSV dataset.
    SolveSvm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        multiclass: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a training trace with an SVM solution.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        svm: PathBuf,
        /// Experiment config whose `[analysis]` table sets the thresholds.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset CSV; with `--checkpoint` enables the gradient decomposition.
        #[arg(long, requires = "checkpoint")]
        dataset: Option<PathBuf>,
        #[arg(long, requires = "dataset")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the full experiment described by a config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        println!("{}", c.line());
    }
}

fn verdict(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_THRESHOLDS_UNMET)
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let cfg = ExperimentConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::GenData {
            family,
            samples,
            scale,
            classes,
            seed,
            out,
        } => {
            let spec = DatasetSpec {
                family,
                sample_count: samples,
                scale,
                class_count: classes,
                seed,
            };
            let r = commands::cmd_gen_data(&spec, &out)?;
            println!("N={} K={} separable={}", r.samples, r.classes, r.separable);
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { config, out_dir } => {
            let cfg = load_config(&config)?;
            let dir = resolve_out_dir(out_dir.as_deref(), cfg.output_dir.as_deref());
            let r = commands::cmd_train(&cfg, &dir)?;
            println!(
                "converged={} iterations={} final_loss={:.6e} trace={}",
                r.converged,
                r.iterations,
                r.final_loss,
                r.trace.display()
            );
            Ok(verdict(r.converged))
        }
        Command::SolveSvm { input, multiclass, out } => {
            let r = commands::cmd_solve_svm(&input, multiclass, &out)?;
            println!("kind={} kkt_passed={} weights={:?}", r.kind, r.kkt_passed, r.weights);
            Ok(verdict(r.kkt_passed))
        }
        Command::Analyze {
            trace,
            svm,
            config,
            dataset,
            checkpoint,
            out_dir,
        } => {
            let cfg = config.as_deref().map(load_config).transpose()?;
            let analysis = cfg.as_ref().map_or_else(AnalysisConfig::default, |c| c.analysis.clone());
            let dir = resolve_out_dir(out_dir.as_deref(), cfg.as_ref().and_then(|c| c.output_dir.as_deref()));
            let dec = match (&dataset, &checkpoint) {
                (Some(d), Some(c)) => Some(DecompositionInputs {
                    dataset: d,
                    checkpoint: c,
                }),
                _ => None,
            };
            let r = commands::cmd_analyze(&trace, &svm, &analysis, dec, &dir)?;
            print_checks(&r.checks);
            Ok(verdict(r.passed))
        }
        Command::Pipeline { config, out_dir } => {
            let cfg = load_config(&config)?;
            let dir = resolve_out_dir(out_dir.as_deref(), cfg.output_dir.as_deref());
            let out = pipeline::run(&cfg, &dir)?;
            print_checks(&out.summary.checks);
            println!("summary={}", dir.join(pipeline::SUMMARY_FILE).display());
            Ok(verdict(out.summary.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
