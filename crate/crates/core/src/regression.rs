//! Pooled least squares restricted to a predictor subset, residuals, empirical
//! risk, and Lasso screening.
//!
//! "Pooled" always means: all labeled samples of every task except the
//! dataset's test task, concatenated with task identity discarded.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{LinearPredictor, MultiTaskDataset, SubsetMask, TaskSample};

/// Residuals of a predictor together with the task each row came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSample {
    pub residuals: Vec<f64>,
    pub task_labels: Vec<u32>,
}

impl ResidualSample {
    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    /// Residuals grouped by task label, groups ordered by label.
    pub fn groups(&self) -> Vec<(u32, Vec<f64>)> {
        let mut labels: Vec<u32> = self.task_labels.clone();
        labels.sort_unstable();
        labels.dedup();
        labels
            .into_iter()
            .map(|l| {
                let vals = self
                    .residuals
                    .iter()
                    .zip(&self.task_labels)
                    .filter(|(_, t)| **t == l)
                    .map(|(r, _)| *r)
                    .collect();
                (l, vals)
            })
            .collect()
    }
}

/// Stacks the rows of the given labeled samples.
fn stack<'a>(samples: impl Iterator<Item = &'a TaskSample>, p: usize) -> (DMatrix<f64>, DVector<f64>) {
    let samples: Vec<&TaskSample> = samples.collect();
    let n: usize = samples.iter().map(|t| t.n_rows()).sum();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut offset = 0;
    for t in samples {
        let rows = t.n_rows();
        x.rows_mut(offset, rows).copy_from(&t.features);
        if let Some(targets) = &t.targets {
            y.rows_mut(offset, rows).copy_from(targets);
        }
        offset += rows;
    }
    (x, y)
}

/// Centered second moments of the pooled training rows.
///
/// Built once, it fits any subset in `O(|S|^3)`; the subset search relies
/// on this.
#[derive(Debug, Clone)]
pub struct PooledDesign {
    n: usize,
    x_mean: DVector<f64>,
    y_mean: f64,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
}

impl PooledDesign {
    pub fn from_dataset(dataset: &MultiTaskDataset) -> Result<Self> {
        let (x, y) = stack(dataset.labeled_training(), dataset.p);
        Self::from_rows(&x, &y)
    }

    pub fn from_rows(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::NoLabeledData);
        }
        let nf = n as f64;
        let x_mean = DVector::from_fn(x.ncols(), |j, _| x.column(j).sum() / nf);
        let y_mean = y.sum() / nf;
        let mut xc = x.clone();
        for j in 0..x.ncols() {
            xc.column_mut(j).add_scalar_mut(-x_mean[j]);
        }
        let yc = y.add_scalar(-y_mean);
        Ok(Self {
            n,
            gram: xc.tr_mul(&xc),
            xty: xc.tr_mul(&yc),
            x_mean,
            y_mean,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    /// Least squares on `subset` plus an unpenalized intercept.
    pub fn fit(&self, subset: &SubsetMask) -> Result<LinearPredictor> {
        if subset.is_empty() {
            return Ok(LinearPredictor::mean(self.y_mean));
        }
        let idx = subset.indices();
        if self.n < idx.len() + 1 {
            return Err(Error::RankDeficient(format!(
                "{} rows for {} coefficients and an intercept",
                self.n,
                idx.len()
            )));
        }
        let g = linalg::submatrix(&self.gram, idx, idx);
        let rhs = linalg::subvector(&self.xty, idx);
        let chol = match linalg::cholesky(&g).filter(|c| well_conditioned(c, &g)) {
            Some(c) => c,
            None => {
                let jitter = 1e-10 * g.trace() / idx.len() as f64;
                if !(jitter > 0.0) {
                    return Err(Error::RankDeficient(format!("zero-variance design on {subset}")));
                }
                let ridged = &g + DMatrix::identity(idx.len(), idx.len()) * jitter;
                linalg::cholesky(&ridged)
                    .ok_or_else(|| Error::RankDeficient(format!("singular Gram matrix on {subset}")))?
            }
        };
        let beta = chol.solve(&rhs);
        let intercept = self.y_mean - beta.dot(&linalg::subvector(&self.x_mean, idx));
        Ok(LinearPredictor {
            subset: subset.clone(),
            coefficients: beta,
            intercept,
        })
    }
}

fn well_conditioned(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, g: &DMatrix<f64>) -> bool {
    let pivots = chol.l_dirty().diagonal();
    let min_pivot_sq = pivots.iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
    let max_diag = g.diagonal().iter().copied().fold(0.0, f64::max);
    min_pivot_sq > 1e-12 * max_diag
}

/// Pooled OLS over the training tasks on `subset`. The empty subset gives the
/// pooled target mean.
pub fn fit_pooled_ols(dataset: &MultiTaskDataset, subset: &SubsetMask) -> Result<LinearPredictor> {
    PooledDesign::from_dataset(dataset)?.fit(subset)
}

/// Full-feature OLS on the labeled sample of the test task alone.
pub fn fit_domain_only(dataset: &MultiTaskDataset, test_task_id: u32) -> Result<LinearPredictor> {
    let sample = dataset.labeled_sample(test_task_id).ok_or(Error::NoLabeledData)?;
    if sample.n_rows() < dataset.p + 1 {
        return Err(Error::RankDeficient(format!(
            "test task has {} rows for p={}",
            sample.n_rows(),
            dataset.p
        )));
    }
    let (x, y) = stack(std::iter::once(sample), dataset.p);
    PooledDesign::from_rows(&x, &y)?.fit(&SubsetMask::full(dataset.p))
}

/// Residuals `y - intercept - beta.x` of every training row.
pub fn residuals(predictor: &LinearPredictor, dataset: &MultiTaskDataset) -> Result<ResidualSample> {
    let mut out = ResidualSample {
        residuals: Vec::new(),
        task_labels: Vec::new(),
    };
    for task in dataset.training_samples() {
        let y = task
            .targets
            .as_ref()
            .ok_or(Error::UnlabeledTask { task_id: task.task_id })?;
        let fitted = predictor.predict(&task.features);
        out.residuals.extend(y.iter().zip(fitted.iter()).map(|(a, b)| a - b));
        out.task_labels.extend(std::iter::repeat_n(task.task_id, y.len()));
    }
    Ok(out)
}

/// Mean squared residual over the pooled labeled training rows.
pub fn empirical_mse(predictor: &LinearPredictor, dataset: &MultiTaskDataset) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for task in dataset.labeled_training() {
        let y = task.targets.as_ref().expect("labeled");
        let fitted = predictor.predict(&task.features);
        total += y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        n += y.len();
    }
    if n == 0 {
        return Err(Error::NoLabeledData);
    }
    Ok(total / n as f64)
}

/// Mean squared error of a predictor on a bare sample.
pub fn mse_on(predictor: &LinearPredictor, x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let fitted = predictor.predict(x);
    y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

const LASSO_PATH_LEN: usize = 100;
const LASSO_MIN_RATIO: f64 = 1e-4;
const LASSO_TOL: f64 = 1e-9;
const LASSO_MAX_SWEEPS: usize = 100_000;

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Selects at most `k` predictors with the Lasso.
///
/// Features are standardized on the pooled training rows. The penalty path
/// runs geometrically from the smallest penalty that zeroes every coefficient
/// down to `1e-4` of it; the returned set is the active set at the last
/// penalty before the active set first exceeds `k` variables.
pub fn lasso_screen(dataset: &MultiTaskDataset, k: usize) -> Result<SubsetMask> {
    let p = dataset.p;
    if k == 0 || k > p {
        return Err(Error::InvalidK { k, p });
    }
    let (x, y) = stack(dataset.labeled_training(), p);
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples { have: n, need: 2 });
    }
    let nf = n as f64;
    let y_mean = y.sum() / nf;
    let yc = y.add_scalar(-y_mean);
    let mut xs = x.clone();
    let mut usable = vec![true; p];
    for j in 0..p {
        let mean = x.column(j).sum() / nf;
        let mut col = xs.column_mut(j);
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / nf).sqrt();
        if sd > 1e-12 {
            col /= sd;
        } else {
            usable[j] = false;
            col.fill(0.0);
        }
    }
    let gram = xs.tr_mul(&xs) / nf;
    let corr = xs.tr_mul(&yc) / nf;
    let lambda_max = (0..p)
        .filter(|&j| usable[j])
        .map(|j| corr[j].abs())
        .fold(0.0, f64::max);
    if lambda_max <= 0.0 {
        return Ok(SubsetMask::empty());
    }

    let mut beta = DVector::<f64>::zeros(p);
    // partial residual correlation r = corr - gram * beta
    let mut r = corr.clone();
    let mut selected = SubsetMask::empty();
    for step in 0..LASSO_PATH_LEN {
        let lambda =
            lambda_max * LASSO_MIN_RATIO.powf(step as f64 / (LASSO_PATH_LEN - 1) as f64);
        for _ in 0..LASSO_MAX_SWEEPS {
            let mut max_change: f64 = 0.0;
            for j in 0..p {
                if !usable[j] {
                    continue;
                }
                let rho = r[j] + gram[(j, j)] * beta[j];
                let updated = soft_threshold(rho, lambda) / gram[(j, j)];
                let delta = updated - beta[j];
                if delta != 0.0 {
                    r.axpy(-delta, &gram.column(j), 1.0);
                    beta[j] = updated;
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < LASSO_TOL {
                break;
            }
        }
        let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        if active.len() > k {
            break;
        }
        selected = SubsetMask::new(active, p)?;
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    use crate::rng;

    fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::stream(seed, &[99]);
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut r))
    }

    fn one_task(x: DMatrix<f64>, y: DVector<f64>) -> MultiTaskDataset {
        let p = x.ncols();
        MultiTaskDataset::new(vec![TaskSample::labeled(1, x, y)], p)
    }

    /// Normal equations on the design `[1, X_S]`, solved by LU.
    fn normal_equations_oracle(x: &DMatrix<f64>, y: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
        let n = x.nrows();
        let design = DMatrix::from_fn(n, idx.len() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, idx[j - 1])] });
        let a = design.tr_mul(&design);
        let b = design.tr_mul(y);
        a.lu().solve(&b).unwrap()
    }

    #[test]
    fn noiseless_line() {
        let x = DMatrix::from_fn(20, 1, |i, _| i as f64 - 3.0);
        let y = x.column(0) * 2.0;
        let fit = fit_pooled_ols(&one_task(x, y), &SubsetMask::full(1)).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-10);
        assert!(fit.intercept.abs() < 1e-10);
    }

    #[test]
    fn empty_subset_is_mean() {
        let x = DMatrix::from_fn(3, 2, |i, j| (i + j) as f64);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let fit = fit_pooled_ols(&one_task(x, y), &SubsetMask::empty()).unwrap();
        assert_eq!(fit.coefficients.len(), 0);
        assert!((fit.intercept - 2.0).abs() < 1e-15);
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let x = gaussian(200, 4, 1);
        let mut r = rng::stream(2, &[]);
        let y = DVector::from_fn(200, |i, _| {
            0.5 + x[(i, 0)] - 2.0 * x[(i, 2)] + 0.3 * x[(i, 3)] + r.random::<f64>()
        });
        let ds = MultiTaskDataset::new(
            vec![
                TaskSample::labeled(1, x.rows(0, 120).into(), y.rows(0, 120).into()),
                TaskSample::labeled(2, x.rows(120, 80).into(), y.rows(120, 80).into()),
            ],
            4,
        );
        for idx in [vec![0, 1, 2, 3], vec![1, 3], vec![2]] {
            let fit = fit_pooled_ols(&ds, &SubsetMask::new(idx.clone(), 4).unwrap()).unwrap();
            let oracle = normal_equations_oracle(&x, &y, &idx);
            assert!((fit.intercept - oracle[0]).abs() < 1e-8);
            for (k, c) in fit.coefficients.iter().enumerate() {
                assert!((c - oracle[k + 1]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pooling_skips_test_task() {
        let x = gaussian(30, 2, 3);
        let y = DVector::from_fn(30, |i, _| x[(i, 0)]);
        let wild = TaskSample::labeled(9, gaussian(30, 2, 4) * 50.0, DVector::from_element(30, 1e3));
        let ds = MultiTaskDataset::new(vec![TaskSample::labeled(1, x.clone(), y.clone()), wild], 2).with_test_task(9);
        let fit = fit_pooled_ols(&ds, &SubsetMask::full(2)).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn domain_only_ignores_training_tasks() {
        let xt = gaussian(50, 2, 5);
        let yt = DVector::from_fn(50, |i, _| xt[(i, 0)] - xt[(i, 1)]);
        let test = TaskSample::labeled(3, xt.clone(), yt.clone());
        let noisy = TaskSample::labeled(1, gaussian(40, 2, 6) * 10.0, DVector::from_element(40, -7.0));
        let ds = MultiTaskDataset::new(vec![noisy, test.clone()], 2).with_test_task(3);
        let fit = fit_domain_only(&ds, 3).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((fit.coefficients[1] + 1.0).abs() < 1e-10);
        let alone = MultiTaskDataset::new(vec![test], 2).with_test_task(3);
        assert_eq!(fit, fit_domain_only(&alone, 3).unwrap());
    }

    #[test]
    fn domain_only_matches_oracle() {
        let x = gaussian(50, 6, 7);
        let mut r = rng::stream(8, &[]);
        let y = DVector::from_fn(50, |i, _| x.row(i).sum() + r.random::<f64>());
        let ds = MultiTaskDataset::new(vec![TaskSample::labeled(4, x.clone(), y.clone())], 6).with_test_task(4);
        let fit = fit_domain_only(&ds, 4).unwrap();
        let oracle = normal_equations_oracle(&x, &y, &[0, 1, 2, 3, 4, 5]);
        assert!((fit.intercept - oracle[0]).abs() < 1e-8);
        for k in 0..6 {
            assert!((fit.coefficients[k] - oracle[k + 1]).abs() < 1e-8);
        }
        let small = MultiTaskDataset::new(vec![TaskSample::labeled(4, x.rows(0, 6).into(), y.rows(0, 6).into())], 6);
        assert!(matches!(fit_domain_only(&small, 4), Err(Error::RankDeficient(_))));
        assert_eq!(fit_domain_only(&small, 5), Err(Error::NoLabeledData));
    }

    #[test]
    fn residual_identities() {
        let x = gaussian(60, 3, 9);
        let mut r = rng::stream(10, &[]);
        let y = DVector::from_fn(60, |i, _| 2.0 * x[(i, 1)] + r.random::<f64>());
        let ds = MultiTaskDataset::new(
            vec![
                TaskSample::labeled(1, x.rows(0, 30).into(), y.rows(0, 30).into()),
                TaskSample::labeled(2, x.rows(30, 30).into(), y.rows(30, 30).into()),
            ],
            3,
        );
        let zero = LinearPredictor::mean(0.0);
        let res = residuals(&zero, &ds).unwrap();
        assert_eq!(res.residuals, y.as_slice().to_vec());
        assert_eq!(res.task_labels[29], 1);
        assert_eq!(res.task_labels[30], 2);

        let subset = SubsetMask::new(vec![0, 1], 3).unwrap();
        let fit = fit_pooled_ols(&ds, &subset).unwrap();
        let res = residuals(&fit, &ds).unwrap();
        for &j in subset.indices() {
            let dot: f64 = (0..60).map(|i| x[(i, j)] * res.residuals[i]).sum();
            assert!(dot.abs() < 1e-8, "residuals not orthogonal to feature {j}: {dot}");
        }
        let mse = empirical_mse(&fit, &ds).unwrap();
        let direct = res.residuals.iter().map(|r| r * r).sum::<f64>() / 60.0;
        assert!((mse - direct).abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_has_zero_residuals_and_mse() {
        let x = gaussian(10, 2, 11);
        let y = DVector::from_fn(10, |i, _| 1.0 + x[(i, 0)]);
        let ds = one_task(x, y);
        let fit = fit_pooled_ols(&ds, &SubsetMask::full(2)).unwrap();
        assert!(residuals(&fit, &ds).unwrap().residuals.iter().all(|r| r.abs() < 1e-10));
        assert!(empirical_mse(&fit, &ds).unwrap() < 1e-20);
    }

    #[test]
    fn mean_mse_of_two_points() {
        let ds = one_task(DMatrix::zeros(2, 1), DVector::from_vec(vec![0.0, 2.0]));
        let fit = fit_pooled_ols(&ds, &SubsetMask::empty()).unwrap();
        assert!((empirical_mse(&fit, &ds).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unlabeled_training_task_has_no_residuals() {
        let ds = MultiTaskDataset::new(vec![TaskSample::unlabeled(2, DMatrix::zeros(3, 1))], 1);
        assert_eq!(
            residuals(&LinearPredictor::mean(0.0), &ds),
            Err(Error::UnlabeledTask { task_id: 2 })
        );
        assert_eq!(empirical_mse(&LinearPredictor::mean(0.0), &ds), Err(Error::NoLabeledData));
        assert_eq!(fit_pooled_ols(&ds, &SubsetMask::empty()), Err(Error::NoLabeledData));
    }

    #[test]
    fn too_few_rows_is_rank_deficient() {
        let ds = one_task(gaussian(2, 2, 12), DVector::from_vec(vec![1.0, 2.0]));
        assert!(matches!(
            fit_pooled_ols(&ds, &SubsetMask::full(2)),
            Err(Error::RankDeficient(_))
        ));
        let constant = one_task(DMatrix::from_element(5, 1, 3.0), DVector::from_fn(5, |i, _| i as f64));
        assert!(matches!(
            fit_pooled_ols(&constant, &SubsetMask::full(1)),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn lasso_picks_single_signal() {
        let x = gaussian(300, 3, 13);
        let mut r = rng::stream(14, &[]);
        let y = DVector::from_fn(300, |i, _| 5.0 * x[(i, 1)] + 0.1 * r.random::<f64>());
        let s = lasso_screen(&one_task(x, y), 1).unwrap();
        assert_eq!(s.one_based(), vec![2]);
    }

    #[test]
    fn lasso_unpenalized_limit_keeps_signal_variables() {
        let x = gaussian(200, 4, 15);
        let mut r = rng::stream(16, &[]);
        let y = DVector::from_fn(200, |i, _| {
            x[(i, 0)] - x[(i, 1)] + 0.5 * x[(i, 2)] + 0.2 * x[(i, 3)] + r.random::<f64>()
        });
        let s = lasso_screen(&one_task(x, y), 4).unwrap();
        assert_eq!(s, SubsetMask::full(4));
    }

    #[test]
    fn lasso_rejects_bad_k() {
        let ds = one_task(gaussian(10, 3, 17), DVector::zeros(10));
        assert_eq!(lasso_screen(&ds, 0), Err(Error::InvalidK { k: 0, p: 3 }));
        assert_eq!(lasso_screen(&ds, 4), Err(Error::InvalidK { k: 4, p: 3 }));
    }
}
