//! Invariant-subset search: exhaustive and greedy enumeration of predictor
//! subsets, each judged by a residual invariance test on a held-out split,
//! followed by a selection rule over the accepted subsets.

use std::collections::HashMap;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariance::{hsic_d_sample_test, levene_test, KernelConfig, TestOutcome};
use crate::model::{split_train_validation, MultiTaskDataset, SplitConfig, SubsetMask, TaskSample};
use crate::mtl::{em_fit, EmOptions};
use crate::regression::{empirical_mse, residuals, PooledDesign};
use crate::rng::{self, tag};

/// Largest predictor count searched exhaustively without a size cap.
pub const MAX_FULL_ENUMERATION: usize = 25;

/// Folds of the cross validation used by [`select_rule_mtl`].
pub const CV_FOLDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    #[default]
    Hsic,
    Levene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    #[default]
    Full,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Smallest validation error.
    #[default]
    Dg,
    /// Smallest cross-validated error of the EM fit on the test task.
    Mtl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Rejection level of the invariance test.
    pub level: f64,
    pub test_kind: TestKind,
    pub mode: SearchMode,
    /// Greedy iterations; `None` means `2p`.
    pub greedy_iters: Option<usize>,
    pub rule: SelectionRule,
    pub split: SplitConfig,
    pub max_subset_size: Option<usize>,
    pub kernel: KernelConfig,
    /// EM settings for the multi-task rule.
    pub em: EmOptions,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            level: 0.05,
            test_kind: TestKind::Hsic,
            mode: SearchMode::Full,
            greedy_iters: None,
            rule: SelectionRule::Dg,
            split: SplitConfig::default(),
            max_subset_size: None,
            kernel: KernelConfig::default(),
            em: EmOptions::default(),
        }
    }
}

impl SearchConfig {
    fn validate(&self, p: usize) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!("level {} not in (0,1)", self.level)));
        }
        if let Some(m) = self.max_subset_size {
            if m > p {
                return Err(Error::InvalidConfig(format!("max_subset_size {m} exceeds p={p}")));
            }
        }
        if self.greedy_iters == Some(0) {
            return Err(Error::InvalidConfig("greedy_iters must be positive".into()));
        }
        Ok(())
    }
}

/// A subset that passed the invariance test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptedSubset {
    pub subset: SubsetMask,
    pub p_value: f64,
    pub validation_mse: f64,
}

/// Outcome of evaluating one subset. `error` is set when the fit or the
/// test failed; such subsets are never accepted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetEvaluation {
    pub subset: SubsetMask,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub validation_mse: Option<f64>,
    pub accepted: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub chosen: SubsetMask,
    /// In evaluation order.
    pub accepted: Vec<AcceptedSubset>,
    pub evaluated_count: usize,
    /// Every evaluation, in evaluation order.
    pub log: Vec<SubsetEvaluation>,
}

/// Shared state of one search run: the fixed split and the cached design.
struct Evaluator {
    design: PooledDesign,
    validation: MultiTaskDataset,
    level: f64,
    test_kind: TestKind,
    kernel: KernelConfig,
}

impl Evaluator {
    fn new(dataset: &MultiTaskDataset, cfg: &SearchConfig) -> Result<Self> {
        let training = dataset.training_only();
        let labeled = training.labeled_training().count();
        if labeled < 2 {
            return Err(Error::SingleTask);
        }
        let (train, validation) = split_train_validation(&training, &cfg.split)?;
        Ok(Self {
            design: PooledDesign::from_dataset(&train)?,
            validation,
            level: cfg.level,
            test_kind: cfg.test_kind,
            kernel: cfg.kernel,
        })
    }

    fn try_evaluate(&self, subset: &SubsetMask) -> Result<(TestOutcome, f64)> {
        let predictor = self.design.fit(subset)?;
        let res = residuals(&predictor, &self.validation)?;
        let outcome = match self.test_kind {
            TestKind::Hsic => hsic_d_sample_test(&res, &self.kernel, self.level)?,
            TestKind::Levene => levene_test(&res, self.level)?,
        };
        Ok((outcome, empirical_mse(&predictor, &self.validation)?))
    }

    fn evaluate(&self, subset: &SubsetMask) -> SubsetEvaluation {
        match self.try_evaluate(subset) {
            Ok((outcome, mse)) => SubsetEvaluation {
                subset: subset.clone(),
                statistic: Some(outcome.statistic),
                p_value: Some(outcome.p_value),
                validation_mse: Some(mse),
                accepted: outcome.p_value > self.level,
                error: None,
            },
            Err(e) => SubsetEvaluation {
                subset: subset.clone(),
                statistic: None,
                p_value: None,
                validation_mse: None,
                accepted: false,
                error: Some(e.to_string()),
            },
        }
    }

    /// Evaluates in parallel; the output keeps the input order.
    fn evaluate_all(&self, subsets: &[SubsetMask]) -> Vec<SubsetEvaluation> {
        subsets.par_iter().map(|s| self.evaluate(s)).collect()
    }
}

fn accepted_of(log: &[SubsetEvaluation]) -> Vec<AcceptedSubset> {
    log.iter()
        .filter(|e| e.accepted)
        .map(|e| AcceptedSubset {
            subset: e.subset.clone(),
            p_value: e.p_value.expect("accepted evaluations carry a p-value"),
            validation_mse: e.validation_mse.expect("accepted evaluations carry an error"),
        })
        .collect()
}

fn finish(dataset: &MultiTaskDataset, cfg: &SearchConfig, log: Vec<SubsetEvaluation>) -> Result<SearchResult> {
    let accepted = accepted_of(&log);
    let chosen = match cfg.rule {
        SelectionRule::Dg => select_rule_dg(&accepted),
        SelectionRule::Mtl => {
            let test_id = dataset.test_task_id.ok_or(Error::NoTestTask)?;
            select_rule_mtl(&accepted, dataset, test_id, &cfg.em, cfg.split.seed)?
        }
    };
    Ok(SearchResult {
        chosen,
        accepted,
        evaluated_count: log.len(),
        log,
    })
}

/// Runs the search selected by `cfg.mode`.
pub fn subset_search(dataset: &MultiTaskDataset, cfg: &SearchConfig) -> Result<SearchResult> {
    match cfg.mode {
        SearchMode::Full => full_subset_search(dataset, cfg),
        SearchMode::Greedy => greedy_subset_search(dataset, cfg),
    }
}

/// Tests every subset of the predictors, the empty set included.
pub fn full_subset_search(dataset: &MultiTaskDataset, cfg: &SearchConfig) -> Result<SearchResult> {
    full_subset_search_within(dataset, cfg, &SubsetMask::full(dataset.p))
}

/// Tests every subset of `universe` (with at most `max_subset_size` elements).
pub fn full_subset_search_within(
    dataset: &MultiTaskDataset,
    cfg: &SearchConfig,
    universe: &SubsetMask,
) -> Result<SearchResult> {
    cfg.validate(dataset.p)?;
    let k = universe.len();
    if k > MAX_FULL_ENUMERATION && cfg.max_subset_size.is_none() {
        return Err(Error::EnumerationTooLarge { p: k });
    }
    if universe.indices().iter().any(|&j| j >= dataset.p) {
        return Err(Error::InvalidConfig(format!("universe {universe} exceeds p={}", dataset.p)));
    }
    let evaluator = Evaluator::new(dataset, cfg)?;
    let subsets: Vec<SubsetMask> = SubsetMask::enumerate(k, cfg.max_subset_size.unwrap_or(k))
        .into_iter()
        .map(|s| {
            let idx = s.indices().iter().map(|&i| universe.indices()[i]).collect();
            SubsetMask::new(idx, dataset.p).expect("indices from universe")
        })
        .collect();
    let log = evaluator.evaluate_all(&subsets);
    finish(dataset, cfg, log)
}

/// Local search over subsets that differ by one predictor.
///
/// The walk starts at the empty set, whose neighbors are the singletons.
/// Each iteration evaluates the not yet visited neighbors of the current
/// set. The accepted neighbor with the smallest validation error becomes
/// current; without one, the neighbor with the smallest test statistic does.
/// The walk ends after the iteration budget or when every neighbor was
/// already visited.
pub fn greedy_subset_search(dataset: &MultiTaskDataset, cfg: &SearchConfig) -> Result<SearchResult> {
    cfg.validate(dataset.p)?;
    let p = dataset.p;
    let evaluator = Evaluator::new(dataset, cfg)?;
    let iters = cfg.greedy_iters.unwrap_or(2 * p);
    let max_size = cfg.max_subset_size.unwrap_or(p);

    let mut seen: HashMap<SubsetMask, usize> = HashMap::new();
    let mut log = Vec::new();
    let mut current = SubsetMask::empty();
    seen.insert(current.clone(), 0);
    log.push(evaluator.evaluate(&current));

    for _ in 0..iters {
        let fresh: Vec<SubsetMask> = (0..p)
            .map(|j| current.toggled(j))
            .filter(|s| s.len() <= max_size && !seen.contains_key(s))
            .collect();
        if fresh.is_empty() {
            break;
        }
        let evals = evaluator.evaluate_all(&fresh);
        for e in &evals {
            seen.insert(e.subset.clone(), log.len());
            log.push(e.clone());
        }
        let best_accepted = evals
            .iter()
            .filter(|e| e.accepted)
            .min_by(|a, b| {
                a.validation_mse
                    .unwrap()
                    .total_cmp(&b.validation_mse.unwrap())
                    .then_with(|| a.subset.cmp(&b.subset))
            });
        let next = best_accepted.or_else(|| {
            evals
                .iter()
                .filter(|e| e.statistic.is_some())
                .min_by(|a, b| {
                    a.statistic
                        .unwrap()
                        .total_cmp(&b.statistic.unwrap())
                        .then_with(|| a.subset.cmp(&b.subset))
                })
        });
        match next {
            Some(e) => current = e.subset.clone(),
            None => break,
        }
    }
    finish(dataset, cfg, log)
}

/// The accepted subset with the smallest validation error; ties go to the
/// smaller, then lexicographically first, subset. Empty when nothing was
/// accepted.
pub fn select_rule_dg(accepted: &[AcceptedSubset]) -> SubsetMask {
    accepted
        .iter()
        .min_by(|a, b| {
            a.validation_mse
                .total_cmp(&b.validation_mse)
                .then_with(|| a.subset.cmp(&b.subset))
        })
        .map(|a| a.subset.clone())
        .unwrap_or_default()
}

/// Cross-validated squared error of the EM predictor for `subset`, folding
/// over the labeled test rows. Training tasks are used in full by every fold.
pub fn mtl_cv_error(
    dataset: &MultiTaskDataset,
    subset: &SubsetMask,
    test_task_id: u32,
    opts: &EmOptions,
    seed: u64,
) -> Result<f64> {
    let test = dataset.labeled_sample(test_task_id).ok_or(Error::NoTestTask)?;
    let n = test.n_rows();
    if n < CV_FOLDS {
        return Err(Error::TestTaskTooSmall { rows: n, needed: CV_FOLDS });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[tag::CV_FOLDS, u64::from(test_task_id)]));
    let y = test.targets.as_ref().expect("labeled");
    let mut sse = 0.0;
    for fold in 0..CV_FOLDS {
        let mut held: Vec<usize> = order.iter().skip(fold).step_by(CV_FOLDS).copied().collect();
        held.sort_unstable();
        let kept: Vec<usize> = (0..n).filter(|i| held.binary_search(i).is_err()).collect();
        let mut tasks: Vec<TaskSample> = dataset
            .tasks
            .iter()
            .filter(|t| !(t.task_id == test_task_id && t.is_labeled()))
            .cloned()
            .collect();
        tasks.push(test.select_rows(&kept));
        let fold_ds = MultiTaskDataset {
            tasks,
            p: dataset.p,
            feature_names: None,
            test_task_id: Some(test_task_id),
        };
        let fit = em_fit(&fold_ds, subset, test_task_id, opts)?;
        let held_sample = test.select_rows(&held);
        let pred = fit.predictor.predict(&held_sample.features);
        let held_y = DVector::from_iterator(held.len(), held.iter().map(|&i| y[i]));
        sse += (held_y - pred).norm_squared();
    }
    Ok(sse / n as f64)
}

/// The accepted subset with the smallest 10-fold cross-validated error of
/// the EM fit on the test task. Subsets whose fit fails in some fold count
/// as infinitely bad. Ties as in [`select_rule_dg`].
pub fn select_rule_mtl(
    accepted: &[AcceptedSubset],
    dataset: &MultiTaskDataset,
    test_task_id: u32,
    opts: &EmOptions,
    seed: u64,
) -> Result<SubsetMask> {
    match accepted {
        [] => return Ok(SubsetMask::empty()),
        [only] => return Ok(only.subset.clone()),
        _ => {}
    }
    let n = dataset.labeled_sample(test_task_id).ok_or(Error::NoTestTask)?.n_rows();
    if n < CV_FOLDS {
        return Err(Error::TestTaskTooSmall { rows: n, needed: CV_FOLDS });
    }
    let errors: Vec<f64> = accepted
        .par_iter()
        .map(|a| mtl_cv_error(dataset, &a.subset, test_task_id, opts, seed).unwrap_or(f64::INFINITY))
        .collect();
    let best = accepted
        .iter()
        .zip(&errors)
        .min_by(|(a, ea), (b, eb)| ea.total_cmp(eb).then_with(|| a.subset.cmp(&b.subset)))
        .map(|(a, _)| a.subset.clone())
        .expect("nonempty");
    Ok(best)
}
