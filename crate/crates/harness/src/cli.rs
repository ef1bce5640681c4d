//! Command-line entry point.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use invariant_transfer::synthetic::{gen_dg_tasks, DgGenConfig};
use invariant_transfer::{em_fit, subset_search, EmOptions, SearchConfig, SearchMode, SelectionRule, SubsetMask, TestKind};
use serde::Serialize;
use serde_json::Value;

use crate::error::{HarnessError, Result};
use crate::experiment::{run_experiment, workers_from_env, ExperimentConfig, ExperimentName};
use crate::io::{load_csv, write_atomic, write_csv};

#[derive(Debug, Parser)]
#[command(name = "invtransfer", version, about = "Invariant-subset transfer learning for linear models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TestArg {
    Hsic,
    Levene,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Greedy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Dg,
    Mtl,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a multi-task dataset and write it as CSV.
    Gen {
        /// JSON generator options; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search for invariant subsets and pick one.
    Search {
        #[arg(long)]
        data: PathBuf,
        /// Rejection level of the invariance test.
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, value_enum, default_value = "hsic")]
        test: TestArg,
        #[arg(long, value_enum, default_value = "full")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "dg")]
        rule: RuleArg,
        /// Task whose labeled rows are the test sample (multi-task rule).
        #[arg(long)]
        test_task: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output JSON file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the multi-task EM estimator on a given invariant subset.
    MtlFit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        test_task: u32,
        /// Comma-separated 1-based feature indices; empty for none.
        #[arg(long, default_value = "")]
        subset: String,
        /// Also use unlabeled rows of the test task.
        #[arg(long)]
        unlabeled: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a seeded experiment preset.
    Experiment {
        #[arg(long, value_enum)]
        name: ExperimentName,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        /// Option override `path=json`, for example `generator.n_per_task=200`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns 0 on success, 1 on usage errors and 2 on runtime errors.
pub fn cli_main<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_subset(text: &str, p: usize) -> Result<SubsetMask> {
    let indices = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| HarnessError::Config(format!("subset entry {s:?} is not an index")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubsetMask::from_one_based(&indices, p)?)
}

fn parse_override(text: &str) -> Result<(String, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override {text:?} is not KEY=VALUE")))?;
    // bare words are taken as strings
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

#[derive(Serialize)]
struct FitOutput {
    subset: SubsetMask,
    /// One coefficient per feature, zero outside the subset.
    coefficients: Vec<f64>,
    intercept: f64,
    iterations: usize,
    converged: bool,
    loglik: f64,
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { config, seed, out } => {
            let mut cfg: DgGenConfig = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
                    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
                }
                None => DgGenConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let inst = gen_dg_tasks(&cfg)?;
            write_csv(&inst.dataset, &out)
        }
        Command::Search {
            data,
            delta,
            test,
            mode,
            rule,
            test_task,
            seed,
            out,
        } => {
            let mut ds = load_csv(&data)?;
            let mut cfg = SearchConfig {
                level: delta,
                test_kind: match test {
                    TestArg::Hsic => TestKind::Hsic,
                    TestArg::Levene => TestKind::Levene,
                },
                mode: match mode {
                    ModeArg::Full => SearchMode::Full,
                    ModeArg::Greedy => SearchMode::Greedy,
                },
                rule: match rule {
                    RuleArg::Dg => SelectionRule::Dg,
                    RuleArg::Mtl => SelectionRule::Mtl,
                },
                ..SearchConfig::default()
            };
            cfg.split.seed = seed;
            cfg.kernel.seed = seed;
            match (cfg.rule, test_task) {
                (_, Some(t)) => ds.test_task_id = Some(t),
                (SelectionRule::Mtl, None) => {
                    return Err(HarnessError::Config("--rule mtl needs --test-task".into()))
                }
                (SelectionRule::Dg, None) => {}
            }
            let result = subset_search(&ds, &cfg)?;
            emit(&result, out.as_deref())
        }
        Command::MtlFit {
            data,
            test_task,
            subset,
            unlabeled,
            out,
        } => {
            let mut ds = load_csv(&data)?;
            ds.test_task_id = Some(test_task);
            let subset = parse_subset(&subset, ds.p)?;
            let opts = EmOptions {
                use_unlabeled: unlabeled,
                ..EmOptions::default()
            };
            let fit = em_fit(&ds, &subset, test_task, &opts)?;
            let output = FitOutput {
                subset: fit.predictor.subset.clone(),
                coefficients: fit.predictor.full_coefficients(ds.p).iter().copied().collect(),
                intercept: fit.predictor.intercept,
                iterations: fit.iterations,
                converged: fit.converged,
                loglik: fit.model.loglik_trace.last().copied().unwrap_or(f64::NAN),
            };
            emit(&output, out.as_deref())
        }
        Command::Experiment {
            name,
            reps,
            seed,
            out_dir,
            set,
        } => {
            let mut cfg = ExperimentConfig::new(name, seed);
            if let Some(r) = reps {
                cfg.reps = r;
            }
            for item in &set {
                let (k, v) = parse_override(item)?;
                cfg.overrides.insert(k, v);
            }
            let output = run_experiment(&cfg, workers_from_env()?)?;
            write_atomic(&out_dir.join("report.json"), output.report.to_json().as_bytes())?;
            write_atomic(&out_dir.join("summary.csv"), output.summary_csv.as_bytes())
        }
    }
}
