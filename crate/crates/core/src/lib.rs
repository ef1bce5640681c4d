//! Invariant-subset transfer learning for linear models.
//!
//! Finds predictor subsets whose regression residuals have the same
//! distribution in every training task, and builds predictors from them for
//! unseen tasks (domain generalization) and for tasks with a few labels
//! (multi-task learning, fitted by EM on a Gaussian missing-data model).

pub mod error;
pub mod invariance;
pub mod linalg;
pub mod model;
pub mod mtl;
pub mod optim;
pub mod regression;
pub mod rng;
pub mod search;
pub mod synthetic;

pub use error::{Error, Result};
pub use invariance::{hsic_d_sample_test, hsic_statistic, levene_test, Bandwidth, KernelConfig, TestOutcome};
pub use mtl::{
    analytic_beta_opt, coefficients_from_covariance, em_fit, em_step, naive_plugin_fit, observed_loglik,
    CovarianceModel, EmFit, EmOptions, MtlData, NaiveFit, NaiveOptions,
};
pub use model::{
    split_train_validation, validate_dataset, LinearPredictor, MultiTaskDataset, SplitConfig, SubsetMask,
    TaskSample,
};
pub use search::{
    full_subset_search, greedy_subset_search, select_rule_dg, select_rule_mtl, subset_search, AcceptedSubset,
    SearchConfig, SearchMode, SearchResult, SelectionRule, SubsetEvaluation, TestKind,
};
pub use regression::{
    empirical_mse, fit_domain_only, fit_pooled_ols, lasso_screen, residuals, PooledDesign, ResidualSample,
};
