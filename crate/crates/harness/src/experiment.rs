//! Seeded experiment presets: closed-form error curves of the three-node
//! model, and the simulate / search / fit / evaluate pipeline for the
//! generalization and multi-task designs.

use std::collections::BTreeMap;

use invariant_transfer::rng::{self, tag};
use invariant_transfer::search::full_subset_search_within;
use invariant_transfer::synthetic::{
    expected_test_error, gen_dg_tasks, pooled_coefficients_closed_form, sample_stream, DgGenConfig, GammaDist,
    GammaT, Interval, ThreeNodeConfig,
};
use invariant_transfer::{
    em_fit, fit_domain_only, fit_pooled_ols, lasso_screen, regression::mse_on, subset_search, EmOptions,
    LinearPredictor, MultiTaskDataset, SearchConfig, SearchMode, SearchResult, SelectionRule, SubsetMask,
};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

use crate::error::{HarnessError, Result};
use crate::report::{summarize, Failure, Record, Report, SummaryRow, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum ExperimentName {
    Fig2ClosedForm,
    DgFull,
    DgSparseLasso,
    DgGreedyLarge,
    Amtl,
    Smtl,
    Custom,
}

impl ExperimentName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fig2ClosedForm => "fig2_closed_form",
            Self::DgFull => "dg_full",
            Self::DgSparseLasso => "dg_sparse_lasso",
            Self::DgGreedyLarge => "dg_greedy_large",
            Self::Amtl => "amtl",
            Self::Smtl => "smtl",
            Self::Custom => "custom",
        }
    }

    /// Repetitions when none are requested; for the closed-form preset this
    /// is the number of random parameter draws per grid point.
    pub fn default_reps(self) -> usize {
        match self {
            Self::Fig2ClosedForm => 10_000,
            Self::DgFull => 50,
            Self::DgSparseLasso | Self::DgGreedyLarge => 10,
            Self::Amtl => 200,
            Self::Smtl => 50,
            Self::Custom => 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: ExperimentName,
    pub reps: usize,
    pub seed: u64,
    /// Dotted option paths (for example `generator.n_per_task`) with JSON values.
    pub overrides: BTreeMap<String, Value>,
}

impl ExperimentConfig {
    pub fn new(name: ExperimentName, seed: u64) -> Self {
        Self {
            name,
            reps: name.default_reps(),
            seed,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn set(mut self, key: &str, value: Value) -> Self {
        self.overrides.insert(key.to_string(), value);
        self
    }
}

/// Options of the closed-form preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig2Options {
    pub sigma2_min: f64,
    pub sigma2_max: f64,
    /// Log-spaced grid size.
    pub grid_points: usize,
    pub s_size: usize,
    pub d_tasks: usize,
    pub sigma_eps: f64,
    pub alpha_range: Interval,
    /// Each `sigma_x^2` is drawn from this range.
    pub var_x_range: Interval,
    /// `sigma_eta^2` is drawn from this range.
    pub var_eta_range: Interval,
}

impl Default for Fig2Options {
    fn default() -> Self {
        Self {
            sigma2_min: 1e-8,
            sigma2_max: 10.0,
            grid_points: 41,
            s_size: 3,
            d_tasks: 2,
            sigma_eps: 1.0,
            alpha_range: Interval(-1.0, 2.5),
            var_x_range: Interval(0.5, 2.0),
            var_eta_range: Interval(0.5, 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Pooled least squares on the true invariant set.
    CsCau,
    /// Pooled least squares on the set found by full search.
    CsShat,
    /// Pooled least squares on the set found by full search among Lasso-screened predictors.
    CsShatLasso,
    /// Pooled least squares on the set found by greedy search.
    CsShatGreedy,
    /// Pooled least squares on all predictors.
    Cs,
    /// Pooled mean of the target.
    Mean,
    /// Least squares on the labeled test-task sample only.
    Dom,
    /// EM fit on the set found by full search.
    ShatSharp,
    /// EM fit on the true invariant set.
    CauSharp,
    /// EM fit on the true invariant set with unlabeled test rows.
    CauSharpUl,
}

impl Estimator {
    pub fn name(self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .expect("unit variant")
    }
}

/// Generator field varied across settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKey {
    DTasks,
    NPerTask,
    NTestUnlabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineOptions {
    pub generator: DgGenConfig,
    pub sweep: SweepKey,
    pub sweep_values: Vec<usize>,
    /// The labeled test sample has `n_per_task` rows in every setting.
    pub symmetric_test: bool,
    pub search: SearchConfig,
    pub estimators: Vec<Estimator>,
    pub baseline: Estimator,
    /// Predictors kept by the Lasso before the screened search.
    pub lasso_k: usize,
    /// Rows of the fresh test sample used to estimate the population error.
    pub n_eval: usize,
}

impl PipelineOptions {
    fn dg() -> Self {
        Self {
            generator: DgGenConfig::default(),
            sweep: SweepKey::DTasks,
            sweep_values: vec![2, 3, 4, 5, 6],
            symmetric_test: false,
            search: SearchConfig::default(),
            estimators: vec![Estimator::CsCau, Estimator::CsShat, Estimator::Cs, Estimator::Mean],
            baseline: Estimator::Cs,
            lasso_k: 8,
            n_eval: 100_000,
        }
    }

    fn mtl() -> Self {
        Self {
            generator: DgGenConfig {
                s_size: 3,
                n_size: 3,
                d_tasks: 2,
                n_per_task: 300,
                n_test: 50,
                n_test_unlabeled: 100,
                gamma_dist: GammaDist::Uniform { lo: 0.0, hi: 1.5 },
                ..DgGenConfig::default()
            },
            sweep: SweepKey::DTasks,
            sweep_values: vec![2],
            symmetric_test: false,
            search: SearchConfig {
                rule: SelectionRule::Mtl,
                ..SearchConfig::default()
            },
            estimators: vec![
                Estimator::CsCau,
                Estimator::CsShat,
                Estimator::Cs,
                Estimator::Mean,
                Estimator::Dom,
                Estimator::ShatSharp,
                Estimator::CauSharp,
                Estimator::CauSharpUl,
            ],
            baseline: Estimator::Dom,
            lasso_k: 8,
            n_eval: 100_000,
        }
    }

    pub fn preset(name: ExperimentName) -> Option<Self> {
        let opts = match name {
            ExperimentName::Fig2ClosedForm => return None,
            ExperimentName::DgFull | ExperimentName::Custom => Self::dg(),
            ExperimentName::DgSparseLasso => Self {
                generator: DgGenConfig {
                    n_noise: 32,
                    n_per_task: 500,
                    ..DgGenConfig::default()
                },
                sweep_values: vec![3, 6],
                estimators: vec![
                    Estimator::CsCau,
                    Estimator::CsShatLasso,
                    Estimator::CsShatGreedy,
                    Estimator::Cs,
                    Estimator::Mean,
                ],
                ..Self::dg()
            },
            ExperimentName::DgGreedyLarge => Self {
                generator: DgGenConfig {
                    s_size: 20,
                    n_size: 20,
                    n_per_task: 500,
                    eps_std: 6.0,
                    ..DgGenConfig::default()
                },
                sweep_values: vec![3, 6],
                estimators: vec![Estimator::CsCau, Estimator::CsShatGreedy, Estimator::Cs, Estimator::Mean],
                ..Self::dg()
            },
            ExperimentName::Amtl => Self::mtl(),
            ExperimentName::Smtl => Self {
                generator: DgGenConfig {
                    d_tasks: 6,
                    ..Self::mtl().generator
                },
                sweep: SweepKey::NPerTask,
                sweep_values: vec![10, 20, 50, 100],
                symmetric_test: true,
                ..Self::mtl()
            },
        };
        Some(opts)
    }

    fn validate(&self) -> Result<()> {
        if self.sweep_values.is_empty() {
            return Err(HarnessError::Config("sweep_values is empty".into()));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::Config("no estimators".into()));
        }
        if self.n_eval == 0 {
            return Err(HarnessError::Config("n_eval must be positive".into()));
        }
        let mtl_only = [
            Estimator::Dom,
            Estimator::ShatSharp,
            Estimator::CauSharp,
            Estimator::CauSharpUl,
        ];
        for (i, &v) in self.sweep_values.iter().enumerate() {
            let g = self.setting(i, 0);
            g.validate()?;
            let needs_test = self.estimators.iter().chain([&self.baseline]).any(|e| mtl_only.contains(e))
                || self.search.rule == SelectionRule::Mtl;
            if needs_test && g.n_test == 0 {
                return Err(HarnessError::Config(format!(
                    "setting {v}: multi-task estimators need a labeled test sample (generator.n_test)"
                )));
            }
        }
        Ok(())
    }

    fn setting(&self, index: usize, seed: u64) -> DgGenConfig {
        let mut g = self.generator.clone();
        let v = self.sweep_values[index];
        match self.sweep {
            SweepKey::DTasks => g.d_tasks = v,
            SweepKey::NPerTask => g.n_per_task = v,
            SweepKey::NTestUnlabeled => g.n_test_unlabeled = v,
        }
        if self.symmetric_test {
            g.n_test = g.n_per_task;
        }
        g.seed = seed;
        g
    }

    fn setting_label(&self, index: usize) -> String {
        let key = serde_json::to_value(self.sweep).expect("unit variant");
        format!("{}={}", key.as_str().expect("string"), self.sweep_values[index])
    }
}

/// Report plus the text of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: Report,
    pub summary_csv: String,
}

/// Applies dotted-path overrides to the serialized defaults; every path must
/// already exist.
fn resolve<T: Serialize + DeserializeOwned>(defaults: &T, overrides: &BTreeMap<String, Value>) -> Result<T> {
    let mut root = serde_json::to_value(defaults)?;
    for (path, value) in overrides {
        let mut node = &mut root;
        for part in path.split('.') {
            node = node
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| HarnessError::Config(format!("unknown option {path:?}")))?;
        }
        *node = value.clone();
    }
    serde_json::from_value(root).map_err(|e| HarnessError::Config(e.to_string()))
}

/// Number of worker threads from `INVTRANSFER_WORKERS`, else the available parallelism.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var("INVTRANSFER_WORKERS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w >= 1)
            .ok_or_else(|| HarnessError::Config(format!("INVTRANSFER_WORKERS={v:?} is not a positive integer"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs a preset on a pool of `workers` threads.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    if cfg.reps == 0 {
        return Err(HarnessError::Config("reps must be at least 1".into()));
    }
    if cfg.name == ExperimentName::Custom && !cfg.overrides.keys().any(|k| k.starts_with("generator")) {
        return Err(HarnessError::Config("custom experiments need generator overrides".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    pool.install(|| match PipelineOptions::preset(cfg.name) {
        None => run_fig2(cfg),
        Some(defaults) => run_pipeline(cfg, resolve(&defaults, &cfg.overrides)?),
    })
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Mean expected test errors over random three-node parameters, on a grid
/// of coefficient variances, with zero coefficient mean.
fn run_fig2(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let opts: Fig2Options = resolve(&Fig2Options::default(), &cfg.overrides)?;
    if !(opts.sigma2_min > 0.0 && opts.sigma2_min <= opts.sigma2_max) || opts.grid_points == 0 {
        return Err(HarnessError::Config("need 0 < sigma2_min <= sigma2_max and grid_points >= 1".into()));
    }
    for (name, r) in [
        ("alpha_range", opts.alpha_range),
        ("var_x_range", opts.var_x_range),
        ("var_eta_range", opts.var_eta_range),
    ] {
        if !(r.0 <= r.1) || (name != "alpha_range" && r.0 <= 0.0) {
            return Err(HarnessError::Config(format!("invalid {name} [{}, {}]", r.0, r.1)));
        }
    }
    let grid = log_spaced(opts.sigma2_min, opts.sigma2_max, opts.grid_points);
    let draws: Vec<(ThreeNodeConfig, Vec<f64>)> = (0..cfg.reps)
        .into_par_iter()
        .map(|m| fig2_draw(&opts, cfg.seed, m))
        .collect();
    let per_draw: Vec<Result<Vec<f64>>> = draws
        .par_iter()
        .map(|(tn, z)| {
            grid.iter()
                .map(|&s2| {
                    let gammas: Vec<f64> = z.iter().map(|zk| s2.sqrt() * zk).collect();
                    let beta = pooled_coefficients_closed_form(&gammas, tn)?;
                    Ok(expected_test_error(&beta, GammaT::Moments { mean: 0.0, var: s2 }, tn))
                })
                .collect()
        })
        .collect();
    let mut sums = vec![0.0; grid.len()];
    let mut failures = Vec::new();
    let mut used = 0usize;
    for (m, res) in per_draw.into_iter().enumerate() {
        match res {
            Ok(errs) => {
                used += 1;
                sums.iter_mut().zip(errs).for_each(|(s, e)| *s += e);
            }
            Err(e) => failures.push(Failure {
                setting: "all".into(),
                rep: m,
                estimator: None,
                message: e.to_string(),
            }),
        }
    }
    let sigma2 = opts.sigma_eps * opts.sigma_eps;
    let mut records = Vec::new();
    let mut csv = String::from("sigma2,err_pooled,err_invariant\n");
    for (g, s) in grid.iter().zip(&sums) {
        let pooled = s / used.max(1) as f64;
        // the invariant predictor's error is the noise variance for every draw
        let inv = sigma2;
        let setting = format!("sigma2={g:?}");
        for (est, v) in [("pooled", pooled), ("invariant", inv)] {
            records.push(Record {
                setting: setting.clone(),
                rep: 0,
                estimator: est.into(),
                test_mse: v,
                log_test_mse: v.ln(),
                chosen: None,
            });
        }
        csv.push_str(&format!("{g:?},{pooled:?},{inv:?}\n"));
    }
    let summary = summarize(&records, "pooled");
    Ok(ExperimentOutput {
        report: Report {
            schema_version: SCHEMA_VERSION,
            experiment: cfg.name.as_str().into(),
            seed: cfg.seed,
            reps: cfg.reps,
            log_base: "e",
            options: serde_json::to_value(&opts)?,
            records,
            failures,
            summary,
        },
        summary_csv: csv,
    })
}

/// One random parameter draw: the model and standard normal coefficient seeds.
fn fig2_draw(opts: &Fig2Options, seed: u64, m: usize) -> (ThreeNodeConfig, Vec<f64>) {
    let mut r = rng::stream(seed, &[tag::EXPERIMENT, m as u64]);
    let mut uniform = |iv: Interval| iv.0 + (iv.1 - iv.0) * r.random::<f64>();
    let alpha: Vec<f64> = (0..opts.s_size).map(|_| uniform(opts.alpha_range)).collect();
    let sigma_x: Vec<f64> = (0..opts.s_size).map(|_| uniform(opts.var_x_range).sqrt()).collect();
    let sigma_eta = uniform(opts.var_eta_range).sqrt();
    let tn = ThreeNodeConfig {
        s_size: opts.s_size,
        alpha,
        sigma_x,
        sigma_eps: opts.sigma_eps,
        sigma_eta,
        gamma_mean: 0.0,
        gamma_var: 1.0,
        d_tasks: opts.d_tasks,
        n_per_task: 1,
        seed: 0,
    };
    let z = (0..opts.d_tasks).map(|_| r.sample(StandardNormal)).collect();
    (tn, z)
}

fn run_pipeline(cfg: &ExperimentConfig, opts: PipelineOptions) -> Result<ExperimentOutput> {
    opts.validate()?;
    let jobs: Vec<(usize, usize)> = (0..opts.sweep_values.len())
        .flat_map(|s| (0..cfg.reps).map(move |r| (s, r)))
        .collect();
    let outcomes: Vec<(Vec<Record>, Vec<Failure>)> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let rep_seed = rng::derive_seed(cfg.seed, &[tag::EXPERIMENT, s as u64, r as u64]);
            run_rep(&opts, s, r, rep_seed)
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (rs, fs) in outcomes {
        records.extend(rs);
        failures.extend(fs);
    }
    let summary: Vec<SummaryRow> = summarize(&records, &opts.baseline.name());
    let summary_csv = crate::report::summary_csv(&summary);
    Ok(ExperimentOutput {
        report: Report {
            schema_version: SCHEMA_VERSION,
            experiment: cfg.name.as_str().into(),
            seed: cfg.seed,
            reps: cfg.reps,
            log_base: "e",
            options: serde_json::to_value(&opts)?,
            records,
            failures,
            summary,
        },
        summary_csv,
    })
}

fn search_with(ds: &MultiTaskDataset, base: &SearchConfig, mode: SearchMode, seed: u64) -> Result<SearchResult> {
    let mut cfg = *base;
    cfg.mode = mode;
    cfg.split.seed = seed;
    cfg.kernel.seed = seed;
    Ok(subset_search(ds, &cfg)?)
}

fn run_rep(opts: &PipelineOptions, setting: usize, rep: usize, seed: u64) -> (Vec<Record>, Vec<Failure>) {
    let label = opts.setting_label(setting);
    let fail = |estimator: Option<Estimator>, e: &dyn std::fmt::Display| Failure {
        setting: label.clone(),
        rep,
        estimator: estimator.map(Estimator::name),
        message: e.to_string(),
    };
    let gen_cfg = opts.setting(setting, seed);
    let inst = match gen_dg_tasks(&gen_cfg) {
        Ok(i) => i,
        Err(e) => return (Vec::new(), vec![fail(None, &e)]),
    };
    let ds = &inst.dataset;
    let test_id = gen_cfg.test_task_id();
    let law = inst.model.test_law();
    let (x_eval, y_eval) = inst
        .model
        .sample(law, opts.n_eval, &mut sample_stream(seed, test_id, 2));
    let causal = gen_cfg.causal_subset();
    let p = gen_cfg.p();

    let mut full: Option<std::result::Result<SearchResult, String>> = None;
    let mut full_search = || -> Result<SearchResult> {
        let res = full
            .get_or_insert_with(|| search_with(ds, &opts.search, SearchMode::Full, seed).map_err(|e| e.to_string()));
        res.clone().map_err(HarnessError::Config)
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &est in &opts.estimators {
        let fitted: Result<(LinearPredictor, Option<SubsetMask>)> = (|| {
            let em = |subset: &SubsetMask, unlabeled: bool| -> Result<LinearPredictor> {
                let em_opts = EmOptions {
                    use_unlabeled: unlabeled,
                    ..opts.search.em
                };
                Ok(em_fit(ds, subset, test_id, &em_opts)?.predictor)
            };
            Ok(match est {
                Estimator::CsCau => (fit_pooled_ols(ds, &causal)?, Some(causal.clone())),
                Estimator::Cs => (fit_pooled_ols(ds, &SubsetMask::full(p))?, None),
                Estimator::Mean => (fit_pooled_ols(ds, &SubsetMask::empty())?, None),
                Estimator::Dom => (fit_domain_only(ds, test_id)?, None),
                Estimator::CsShat => {
                    let chosen = full_search()?.chosen;
                    (fit_pooled_ols(ds, &chosen)?, Some(chosen))
                }
                Estimator::CsShatGreedy => {
                    let chosen = search_with(ds, &opts.search, SearchMode::Greedy, seed)?.chosen;
                    (fit_pooled_ols(ds, &chosen)?, Some(chosen))
                }
                Estimator::CsShatLasso => {
                    let screened = lasso_screen(ds, opts.lasso_k.min(p))?;
                    let mut cfg = opts.search;
                    cfg.split.seed = seed;
                    cfg.kernel.seed = seed;
                    let chosen = full_subset_search_within(ds, &cfg, &screened)?.chosen;
                    (fit_pooled_ols(ds, &chosen)?, Some(chosen))
                }
                Estimator::ShatSharp => {
                    let chosen = full_search()?.chosen;
                    (em(&chosen, false)?, Some(chosen))
                }
                Estimator::CauSharp => (em(&causal, false)?, Some(causal.clone())),
                Estimator::CauSharpUl => (em(&causal, true)?, Some(causal.clone())),
            })
        })();
        match fitted {
            Ok((pred, chosen)) => {
                let mse = mse_on(&pred, &x_eval, &y_eval);
                records.push(Record {
                    setting: label.clone(),
                    rep,
                    estimator: est.name(),
                    test_mse: mse,
                    log_test_mse: mse.ln(),
                    chosen,
                });
            }
            Err(e) => failures.push(fail(Some(est), &e)),
        }
    }
    (records, failures)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_follow_paths_and_reject_unknown_keys() {
        let defaults = PipelineOptions::preset(ExperimentName::DgFull).unwrap();
        let mut ov = BTreeMap::new();
        ov.insert("generator.n_per_task".to_string(), Value::from(77));
        ov.insert("sweep_values".to_string(), serde_json::json!([6]));
        let opts: PipelineOptions = resolve(&defaults, &ov).unwrap();
        assert_eq!(opts.generator.n_per_task, 77);
        assert_eq!(opts.sweep_values, vec![6]);
        ov.insert("generator.nope".to_string(), Value::from(1));
        assert!(matches!(resolve(&defaults, &ov), Err(HarnessError::Config(_))));
    }

    #[test]
    fn estimator_names_are_snake_case() {
        assert_eq!(Estimator::CauSharpUl.name(), "cau_sharp_ul");
        assert_eq!(Estimator::CsShatLasso.name(), "cs_shat_lasso");
    }

    #[test]
    fn presets_validate() {
        for name in [
            ExperimentName::DgFull,
            ExperimentName::DgSparseLasso,
            ExperimentName::DgGreedyLarge,
            ExperimentName::Amtl,
            ExperimentName::Smtl,
        ] {
            PipelineOptions::preset(name).unwrap().validate().unwrap();
        }
        let mut bad = PipelineOptions::preset(ExperimentName::Amtl).unwrap();
        bad.generator.n_test = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn custom_requires_generator() {
        let cfg = ExperimentConfig::new(ExperimentName::Custom, 1);
        assert!(matches!(run_experiment(&cfg, 1), Err(HarnessError::Config(_))));
    }
}
