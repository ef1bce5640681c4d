//! Shared domain types: task-indexed samples, predictor subsets, linear
//! predictors, and the deterministic per-task train/validation split.
//!
//! Feature indices are 0-based inside the library. [`SubsetMask`] converts
//! to and from the 1-based form used in files, JSON and on the command line.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng;

/// Observations from one task. Unlabeled samples carry no targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSample {
    pub task_id: u32,
    /// `n_k x p`, one row per observation.
    pub features: DMatrix<f64>,
    pub targets: Option<DVector<f64>>,
}

impl TaskSample {
    pub fn labeled(task_id: u32, features: DMatrix<f64>, targets: DVector<f64>) -> Self {
        Self {
            task_id,
            features,
            targets: Some(targets),
        }
    }

    pub fn unlabeled(task_id: u32, features: DMatrix<f64>) -> Self {
        Self {
            task_id,
            features,
            targets: None,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_labeled(&self) -> bool {
        self.targets.is_some()
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> TaskSample {
        TaskSample {
            task_id: self.task_id,
            features: self.features.select_rows(rows),
            targets: self.targets.as_ref().map(|y| y.select_rows(rows)),
        }
    }
}

/// Samples grouped by task. A task id may appear at most twice: once as a
/// labeled sample and once as an unlabeled one.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskDataset {
    pub tasks: Vec<TaskSample>,
    pub p: usize,
    pub feature_names: Option<Vec<String>>,
    pub test_task_id: Option<u32>,
}

impl MultiTaskDataset {
    pub fn new(tasks: Vec<TaskSample>, p: usize) -> Self {
        Self {
            tasks,
            p,
            feature_names: None,
            test_task_id: None,
        }
    }

    pub fn with_test_task(mut self, task_id: u32) -> Self {
        self.test_task_id = Some(task_id);
        self
    }

    /// Distinct task ids in order of first appearance.
    pub fn task_ids(&self) -> Vec<u32> {
        let mut seen = HashSet::new();
        self.tasks
            .iter()
            .filter(|t| seen.insert(t.task_id))
            .map(|t| t.task_id)
            .collect()
    }

    pub fn is_test(&self, task_id: u32) -> bool {
        self.test_task_id == Some(task_id)
    }

    /// Samples of every task other than the test task (labeled or not).
    pub fn training_samples(&self) -> impl Iterator<Item = &TaskSample> {
        self.tasks.iter().filter(move |t| !self.is_test(t.task_id))
    }

    /// Labeled samples of the training tasks.
    pub fn labeled_training(&self) -> impl Iterator<Item = &TaskSample> {
        self.training_samples().filter(|t| t.is_labeled())
    }

    pub fn labeled_sample(&self, task_id: u32) -> Option<&TaskSample> {
        self.tasks
            .iter()
            .find(|t| t.task_id == task_id && t.is_labeled())
    }

    pub fn unlabeled_sample(&self, task_id: u32) -> Option<&TaskSample> {
        self.tasks
            .iter()
            .find(|t| t.task_id == task_id && !t.is_labeled())
    }

    /// Copy holding only the labeled training samples; the test task is dropped.
    pub fn training_only(&self) -> MultiTaskDataset {
        MultiTaskDataset {
            tasks: self.labeled_training().cloned().collect(),
            p: self.p,
            feature_names: self.feature_names.clone(),
            test_task_id: None,
        }
    }

    pub fn n_labeled_training_rows(&self) -> usize {
        self.labeled_training().map(TaskSample::n_rows).sum()
    }
}

/// Checks every structural invariant of a dataset.
pub fn validate_dataset(dataset: &MultiTaskDataset) -> Result<()> {
    let mut seen = HashSet::new();
    if let Some(names) = &dataset.feature_names {
        if names.len() != dataset.p {
            return Err(Error::DimensionMismatch {
                task_id: 0,
                detail: format!("{} feature names for p={}", names.len(), dataset.p),
            });
        }
    }
    for task in &dataset.tasks {
        let id = task.task_id;
        if id == 0 {
            return Err(Error::InvalidConfig("task ids start at 1".into()));
        }
        if !seen.insert((id, task.is_labeled())) {
            return Err(Error::DuplicateTaskId { task_id: id });
        }
        if task.features.ncols() != dataset.p {
            return Err(Error::DimensionMismatch {
                task_id: id,
                detail: format!("{} features, dataset has p={}", task.features.ncols(), dataset.p),
            });
        }
        if task.n_rows() == 0 {
            return Err(Error::TaskTooSmall {
                task_id: id,
                rows: 0,
                needed: 1,
            });
        }
        if let Some(y) = &task.targets {
            if y.len() != task.n_rows() {
                return Err(Error::DimensionMismatch {
                    task_id: id,
                    detail: format!("{} targets for {} rows", y.len(), task.n_rows()),
                });
            }
        }
        for row in 0..task.n_rows() {
            let bad_x = task.features.row(row).iter().any(|v| !v.is_finite());
            let bad_y = task.targets.as_ref().is_some_and(|y| !y[row].is_finite());
            if bad_x || bad_y {
                return Err(Error::NonFiniteValue { task_id: id, row });
            }
        }
    }
    if let Some(test) = dataset.test_task_id {
        if !dataset.tasks.iter().any(|t| t.task_id == test) {
            return Err(Error::InvalidConfig(format!("test task {test} not in dataset")));
        }
    }
    Ok(())
}

/// A set of predictor indices (0-based, strictly increasing).
///
/// Ordered by cardinality first, then lexicographically; this is also the
/// enumeration order of the subset search and its tie-break order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SubsetMask {
    indices: Vec<usize>,
}

impl SubsetMask {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a mask from 0-based indices, validating them against `p`.
    pub fn new(mut indices: Vec<usize>, p: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(format!("duplicate subset index in {indices:?}")));
        }
        if let Some(&last) = indices.last() {
            if last >= p {
                return Err(Error::InvalidConfig(format!(
                    "subset index {} exceeds p={p}",
                    last + 1
                )));
            }
        }
        Ok(Self { indices })
    }

    /// Builds a mask from 1-based indices as written in files and on the CLI.
    pub fn from_one_based(indices: &[usize], p: usize) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::InvalidConfig("feature indices are 1-based".into()));
        }
        Self::new(indices.iter().map(|i| i - 1).collect(), p)
    }

    pub fn full(p: usize) -> Self {
        Self {
            indices: (0..p).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// Indices in `0..p` not in the mask.
    pub fn complement(&self, p: usize) -> SubsetMask {
        SubsetMask {
            indices: (0..p).filter(|i| !self.contains(*i)).collect(),
        }
    }

    /// The mask with `index` added if absent, removed if present.
    pub fn toggled(&self, index: usize) -> SubsetMask {
        let mut indices = self.indices.clone();
        match indices.binary_search(&index) {
            Ok(pos) => {
                indices.remove(pos);
            }
            Err(pos) => indices.insert(pos, index),
        }
        SubsetMask { indices }
    }

    /// All subsets of `{0..p}` with at most `max_size` elements, in
    /// (cardinality, lexicographic) order.
    pub fn enumerate(p: usize, max_size: usize) -> Vec<SubsetMask> {
        let mut out = Vec::new();
        for size in 0..=max_size.min(p) {
            let mut combo: Vec<usize> = (0..size).collect();
            loop {
                out.push(SubsetMask {
                    indices: combo.clone(),
                });
                // advance to the next combination in lexicographic order
                let mut i = size;
                while i > 0 && combo[i - 1] == p - size + i - 1 {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                combo[i - 1] += 1;
                for j in i..size {
                    combo[j] = combo[j - 1] + 1;
                }
            }
        }
        out
    }
}

impl Ord for SubsetMask {
    fn cmp(&self, other: &Self) -> Ordering {
        self.indices
            .len()
            .cmp(&other.indices.len())
            .then_with(|| self.indices.cmp(&other.indices))
    }
}

impl PartialOrd for SubsetMask {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, idx) in self.indices.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", idx + 1)?;
        }
        write!(f, "}}")
    }
}

impl Serialize for SubsetMask {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SubsetMask {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let one_based = Vec::<usize>::deserialize(deserializer)?;
        if one_based.contains(&0) {
            return Err(serde::de::Error::custom("feature indices are 1-based"));
        }
        let mut indices: Vec<usize> = one_based.into_iter().map(|i| i - 1).collect();
        indices.sort_unstable();
        indices.dedup();
        Ok(SubsetMask { indices })
    }
}

/// `y ~ intercept + coefficients . x[subset]`; every feature outside the
/// subset has coefficient exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    pub subset: SubsetMask,
    pub coefficients: DVector<f64>,
    pub intercept: f64,
}

impl LinearPredictor {
    /// The constant predictor.
    pub fn mean(intercept: f64) -> Self {
        Self {
            subset: SubsetMask::empty(),
            coefficients: DVector::zeros(0),
            intercept,
        }
    }

    /// Predictor using every feature, from a length-`p` coefficient vector.
    pub fn dense(coefficients: DVector<f64>, intercept: f64) -> Self {
        Self {
            subset: SubsetMask::full(coefficients.len()),
            coefficients,
            intercept,
        }
    }

    /// Coefficients expanded to all `p` features.
    pub fn full_coefficients(&self, p: usize) -> DVector<f64> {
        let mut beta = DVector::zeros(p);
        for (c, &j) in self.coefficients.iter().zip(self.subset.indices()) {
            beta[j] = *c;
        }
        beta
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .subset
                .indices()
                .iter()
                .zip(self.coefficients.iter())
                .map(|(&j, c)| c * row[j])
                .sum::<f64>()
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> DVector<f64> {
        let mut out = DVector::from_element(features.nrows(), self.intercept);
        for (&j, c) in self.subset.indices().iter().zip(self.coefficients.iter()) {
            out.axpy(*c, &features.column(j), 1.0);
        }
        out
    }
}

/// Per-task stratified split parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

/// Splits every labeled sample into disjoint train/validation parts.
///
/// Unlabeled samples go to the training part unchanged. Each part keeps the
/// original row order; the row assignment depends only on the seed and the
/// task id.
pub fn split_train_validation(
    dataset: &MultiTaskDataset,
    cfg: &SplitConfig,
) -> Result<(MultiTaskDataset, MultiTaskDataset)> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction {} not in (0,1)",
            cfg.train_fraction
        )));
    }
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for task in &dataset.tasks {
        if !task.is_labeled() {
            train.push(task.clone());
            continue;
        }
        let n = task.n_rows();
        if n < 2 {
            return Err(Error::TaskTooSmall {
                task_id: task.task_id,
                rows: n,
                needed: 2,
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = rng::stream(cfg.seed, &[rng::tag::SPLIT, u64::from(task.task_id)]);
        order.shuffle(&mut rng);
        let n_train = ((n as f64 * cfg.train_fraction).round() as usize).clamp(1, n - 1);
        let (tr, va) = order.split_at_mut(n_train);
        tr.sort_unstable();
        va.sort_unstable();
        train.push(task.select_rows(tr));
        valid.push(task.select_rows(va));
    }
    let keep_test = |parts: &[TaskSample]| {
        dataset
            .test_task_id
            .filter(|id| parts.iter().any(|t| t.task_id == *id))
    };
    let train_ds = MultiTaskDataset {
        test_task_id: keep_test(&train),
        tasks: train,
        p: dataset.p,
        feature_names: dataset.feature_names.clone(),
    };
    let valid_ds = MultiTaskDataset {
        test_task_id: keep_test(&valid),
        tasks: valid,
        p: dataset.p,
        feature_names: dataset.feature_names.clone(),
    };
    Ok((train_ds, valid_ds))
}
