//! Multi-task estimation given an invariant set.
//!
//! The joint law of `(X_S, X_N, Y)` is modeled as one Gaussian shared by the
//! test task and the surrogate training distributions. Training rows observe
//! `(X_S, Y)`, labeled test rows observe everything, unlabeled test rows
//! observe `(X_S, X_N)`. The observed-data likelihood is maximized by EM and
//! the regression of `Y` on `X` is read off the fitted covariance.
//!
//! Rows sharing an observation pattern are reduced to sufficient statistics
//! once, so every EM step costs `O(patterns * (p+1)^3)` independent of `n`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{LinearPredictor, MultiTaskDataset, SubsetMask, TaskSample};
use crate::optim::{nelder_mead, NelderMeadOptions};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Mean and covariance of `(X_S, X_N, Y)` in that internal order.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    /// Original feature index of each internal feature position (`S` block first).
    pub feature_order: Vec<usize>,
    /// Size of the leading `X_S` block.
    pub s_size: usize,
    pub mean: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// Observed-data log-likelihood after each EM step.
    pub loglik_trace: Vec<f64>,
}

impl CovarianceModel {
    pub fn new(
        feature_order: Vec<usize>,
        s_size: usize,
        mean: DVector<f64>,
        sigma: DMatrix<f64>,
    ) -> Result<Self> {
        let dim = feature_order.len() + 1;
        if mean.len() != dim || sigma.nrows() != dim || sigma.ncols() != dim || s_size > dim - 1 {
            return Err(Error::DimensionMismatch {
                task_id: 0,
                detail: format!("covariance model of dimension {dim}"),
            });
        }
        Ok(Self {
            feature_order,
            s_size,
            mean,
            sigma,
            loglik_trace: Vec::new(),
        })
    }

    /// Number of features `p`.
    pub fn p(&self) -> usize {
        self.feature_order.len()
    }

    pub fn y_index(&self) -> usize {
        self.p()
    }
}

/// Feature layout induced by an invariant set: internal order `(S, N)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub s: Vec<usize>,
    pub n: Vec<usize>,
}

impl Layout {
    pub fn new(subset: &SubsetMask, p: usize) -> Self {
        Self {
            s: subset.indices().to_vec(),
            n: subset.complement(p).indices().to_vec(),
        }
    }

    pub fn p(&self) -> usize {
        self.s.len() + self.n.len()
    }

    pub fn feature_order(&self) -> Vec<usize> {
        self.s.iter().chain(&self.n).copied().collect()
    }

    /// Features of `sample` permuted into internal order.
    fn features(&self, sample: &TaskSample) -> DMatrix<f64> {
        sample.features.select_columns(&self.feature_order())
    }

    /// Features in internal order followed by the target.
    fn labeled_rows(&self, sample: &TaskSample) -> DMatrix<f64> {
        let p = self.p();
        let mut z = self.features(sample).resize_horizontally(p + 1, 0.0);
        z.set_column(p, sample.targets.as_ref().expect("labeled sample"));
        z
    }

    fn s_and_y(&self, sample: &TaskSample, y: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(sample.n_rows(), self.s.len() + 1);
        for (k, &j) in self.s.iter().enumerate() {
            m.set_column(k, &sample.features.column(j));
        }
        m.set_column(self.s.len(), y);
        m
    }
}

/// Sufficient statistics of all rows sharing one observation pattern,
/// centered at the data's shift vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPattern {
    /// Observed internal coordinates, increasing.
    pub observed: Vec<usize>,
    pub n: usize,
    sum: DVector<f64>,
    sumsq: DMatrix<f64>,
}

/// Pooled rows with missing coordinates, reduced per observation pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct MtlData {
    dim: usize,
    shift: DVector<f64>,
    patterns: Vec<ObservedPattern>,
}

impl MtlData {
    /// Builds the data from blocks of rows; each block lists its observed
    /// coordinates and a matrix with one column per observed coordinate.
    pub fn from_blocks(dim: usize, blocks: Vec<(Vec<usize>, DMatrix<f64>)>) -> Result<Self> {
        let mut totals = vec![0.0; dim];
        let mut counts = vec![0usize; dim];
        for (obs, rows) in &blocks {
            if obs.is_empty() || rows.ncols() != obs.len() || obs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::DimensionMismatch {
                    task_id: 0,
                    detail: format!("observation pattern {obs:?} with {} columns", rows.ncols()),
                });
            }
            if obs.last().is_some_and(|&c| c >= dim) {
                return Err(Error::DimensionMismatch {
                    task_id: 0,
                    detail: format!("pattern {obs:?} outside dimension {dim}"),
                });
            }
            for (k, &c) in obs.iter().enumerate() {
                totals[c] += rows.column(k).sum();
                counts[c] += rows.nrows();
            }
        }
        let shift = DVector::from_fn(dim, |c, _| {
            if counts[c] > 0 {
                totals[c] / counts[c] as f64
            } else {
                0.0
            }
        });
        let mut patterns: Vec<ObservedPattern> = Vec::new();
        for (obs, rows) in blocks {
            if rows.nrows() == 0 {
                continue;
            }
            let mut centered = rows;
            for (k, &c) in obs.iter().enumerate() {
                centered.column_mut(k).add_scalar_mut(-shift[c]);
            }
            let sum = DVector::from_fn(obs.len(), |k, _| centered.column(k).sum());
            let sumsq = centered.tr_mul(&centered);
            match patterns.iter_mut().find(|p| p.observed == obs) {
                Some(p) => {
                    p.n += centered.nrows();
                    p.sum += sum;
                    p.sumsq += sumsq;
                }
                None => patterns.push(ObservedPattern {
                    observed: obs,
                    n: centered.nrows(),
                    sum,
                    sumsq,
                }),
            }
        }
        if patterns.is_empty() {
            return Err(Error::NoLabeledData);
        }
        Ok(Self {
            dim,
            shift,
            patterns,
        })
    }

    /// Pooled data for an invariant set: labeled training rows observe
    /// `(X_S, Y)`, the labeled test rows observe everything and, when
    /// requested, unlabeled test rows observe `X`. Unlabeled training rows
    /// are not used.
    pub fn from_dataset(
        dataset: &MultiTaskDataset,
        layout: &Layout,
        test_task_id: u32,
        use_unlabeled: bool,
    ) -> Result<Self> {
        let p = layout.p();
        let s = layout.s.len();
        let mut blocks = Vec::new();
        let train_obs: Vec<usize> = (0..s).chain(std::iter::once(p)).collect();
        for task in dataset.tasks.iter().filter(|t| t.task_id != test_task_id) {
            if let Some(y) = &task.targets {
                blocks.push((train_obs.clone(), layout.s_and_y(task, y)));
            }
        }
        let test = dataset.labeled_sample(test_task_id).ok_or(Error::NoTestTask)?;
        blocks.push(((0..=p).collect(), layout.labeled_rows(test)));
        if use_unlabeled {
            if let Some(un) = dataset.unlabeled_sample(test_task_id) {
                blocks.push(((0..p).collect(), layout.features(un)));
            }
        }
        Self::from_blocks(p + 1, blocks)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.patterns.iter().map(|p| p.n).sum()
    }

    pub fn patterns(&self) -> &[ObservedPattern] {
        &self.patterns
    }
}

fn check_dims(model: &CovarianceModel, data: &MtlData) -> Result<()> {
    if model.sigma.nrows() != data.dim {
        return Err(Error::DimensionMismatch {
            task_id: 0,
            detail: format!("model dimension {} vs data dimension {}", model.sigma.nrows(), data.dim),
        });
    }
    Ok(())
}

/// Gaussian log-likelihood of the observed coordinates of every row.
pub fn observed_loglik(model: &CovarianceModel, data: &MtlData) -> Result<f64> {
    check_dims(model, data)?;
    let mu = &model.mean - &data.shift;
    let mut total = 0.0;
    for pat in &data.patterns {
        let o = &pat.observed;
        let sigma_o = linalg::submatrix(&model.sigma, o, o);
        let chol = linalg::cholesky_or(&sigma_o, "observed block of the covariance model")?;
        let mu_o = linalg::subvector(&mu, o);
        let n = pat.n as f64;
        // scatter around the model mean
        let scatter = &pat.sumsq - &pat.sum * mu_o.transpose() - &mu_o * pat.sum.transpose()
            + &mu_o * mu_o.transpose() * n;
        let quad = chol.solve(&scatter).trace();
        total += -0.5 * n * (linalg::log_det(&chol) + o.len() as f64 * LN_2PI) - 0.5 * quad;
    }
    Ok(total)
}

/// Mean and covariance of the unobserved coordinates given observed values.
///
/// Returns `(missing indices, conditional mean, conditional covariance)`.
pub fn conditional_moments(
    model: &CovarianceModel,
    observed: &[usize],
    values: &DVector<f64>,
) -> Result<(Vec<usize>, DVector<f64>, DMatrix<f64>)> {
    let dim = model.sigma.nrows();
    let missing: Vec<usize> = (0..dim).filter(|c| !observed.contains(c)).collect();
    let (b, cond_cov) = regression_of_missing(model, observed, &missing)?;
    let centered = values - linalg::subvector(&model.mean, observed);
    let cond_mean = linalg::subvector(&model.mean, &missing) + b * centered;
    Ok((missing, cond_mean, cond_cov))
}

/// `B = Sigma_mo Sigma_oo^-1` and `C = Sigma_mm - B Sigma_om`.
fn regression_of_missing(
    model: &CovarianceModel,
    o: &[usize],
    m: &[usize],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sigma_oo = linalg::submatrix(&model.sigma, o, o);
    let sigma_om = linalg::submatrix(&model.sigma, o, m);
    let sigma_mm = linalg::submatrix(&model.sigma, m, m);
    let chol = linalg::cholesky_or(&sigma_oo, "observed block of the covariance model")?;
    let b = chol.solve(&sigma_om).transpose();
    let c = sigma_mm - &b * sigma_om;
    Ok((b, c))
}

fn scatter_into(target: &mut DMatrix<f64>, rows: &[usize], cols: &[usize], block: &DMatrix<f64>) {
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            target[(r, c)] += block[(i, j)];
        }
    }
}

/// One EM iteration: conditional-mean imputation of the missing coordinates
/// with conditional-covariance correction, then the completed-data moments.
pub fn em_step(model: &CovarianceModel, data: &MtlData) -> Result<CovarianceModel> {
    check_dims(model, data)?;
    let dim = data.dim;
    let mu = &model.mean - &data.shift;
    let mut t1 = DVector::<f64>::zeros(dim);
    let mut t2 = DMatrix::<f64>::zeros(dim, dim);
    let mut n_total = 0.0;
    for pat in &data.patterns {
        let o = &pat.observed;
        let n = pat.n as f64;
        n_total += n;
        for (k, &c) in o.iter().enumerate() {
            t1[c] += pat.sum[k];
        }
        scatter_into(&mut t2, o, o, &pat.sumsq);
        if o.len() == dim {
            continue;
        }
        let m: Vec<usize> = (0..dim).filter(|c| !o.contains(c)).collect();
        let (b, cond_cov) = regression_of_missing(model, o, &m)?;
        let c = linalg::subvector(&mu, &m) - &b * linalg::subvector(&mu, o);
        let b_sum = &b * &pat.sum;
        let sum_m = &c * n + &b_sum;
        for (k, &idx) in m.iter().enumerate() {
            t1[idx] += sum_m[k];
        }
        let cross = &c * pat.sum.transpose() + &b * &pat.sumsq;
        scatter_into(&mut t2, &m, o, &cross);
        scatter_into(&mut t2, o, &m, &cross.transpose());
        let mm = &c * c.transpose() * n
            + &c * b_sum.transpose()
            + &b_sum * c.transpose()
            + &b * &pat.sumsq * b.transpose()
            + cond_cov * n;
        scatter_into(&mut t2, &m, &m, &mm);
    }
    let mean_c = t1 / n_total;
    let mut sigma = t2 / n_total - &mean_c * mean_c.transpose();
    linalg::symmetrize(&mut sigma);
    linalg::cholesky_or(&sigma, "EM covariance update")?;
    Ok(CovarianceModel {
        feature_order: model.feature_order.clone(),
        s_size: model.s_size,
        mean: mean_c + &data.shift,
        sigma,
        loglik_trace: model.loglik_trace.clone(),
    })
}

/// `beta = Sigma_XX^-1 Sigma_XY`, intercept from the mean, in original feature order.
pub fn coefficients_from_covariance(model: &CovarianceModel) -> Result<LinearPredictor> {
    let p = model.p();
    let sigma_xx = model.sigma.view((0, 0), (p, p)).into_owned();
    let sigma_xy = model.sigma.view((0, p), (p, 1)).column(0).into_owned();
    let chol = linalg::cholesky_or(&sigma_xx, "feature block of the covariance model")?;
    let beta_internal = chol.solve(&sigma_xy);
    let mean_x = model.mean.rows(0, p);
    let intercept = model.mean[p] - beta_internal.dot(&mean_x);
    let mut beta = DVector::zeros(p);
    for (k, &j) in model.feature_order.iter().enumerate() {
        beta[j] = beta_internal[k];
    }
    Ok(LinearPredictor::dense(beta, intercept))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmOptions {
    /// Relative log-likelihood change below which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    pub use_unlabeled: bool,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            use_unlabeled: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub model: CovarianceModel,
    pub predictor: LinearPredictor,
    pub iterations: usize,
    pub converged: bool,
}

/// Starting point: moments of the labeled test sample, ridged when singular.
fn initial_model(test: &TaskSample, layout: &Layout) -> Result<CovarianceModel> {
    let p = layout.p();
    let n_t = test.n_rows();
    if n_t < 2 {
        return Err(Error::TestTaskTooSmall { rows: n_t, needed: 2 });
    }
    let (mean, mut sigma) = linalg::sample_moments(&layout.labeled_rows(test));
    if n_t <= p + 1 || !linalg::is_positive_definite(&sigma) {
        let ridge = 1e-3 * sigma.trace() / (p + 1) as f64;
        for i in 0..=p {
            sigma[(i, i)] += ridge;
        }
    }
    linalg::cholesky_or(&sigma, "initial test-task covariance")?;
    CovarianceModel::new(layout.feature_order(), layout.s.len(), mean, sigma)
}

/// Relative size of a log-likelihood decrease attributed to rounding.
const ROUNDOFF_DECREASE: f64 = 1e-10;

/// Maximizes the observed-data likelihood by EM for the invariant set `subset`.
pub fn em_fit(
    dataset: &MultiTaskDataset,
    subset: &SubsetMask,
    test_task_id: u32,
    opts: &EmOptions,
) -> Result<EmFit> {
    let layout = Layout::new(subset, dataset.p);
    let test = dataset.labeled_sample(test_task_id).ok_or(Error::NoTestTask)?;
    let data = MtlData::from_dataset(dataset, &layout, test_task_id, opts.use_unlabeled)?;
    let mut model = initial_model(test, &layout)?;
    let mut prev = observed_loglik(&model, &data)?;
    model.loglik_trace.push(prev);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let next = em_step(&model, &data)?;
        iterations += 1;
        let ll = observed_loglik(&next, &data)?;
        // a tiny decrease means the iterates only move by rounding: keep the
        // previous model and stop
        if ll < prev && prev - ll <= ROUNDOFF_DECREASE * prev.abs().max(1.0) {
            converged = true;
            break;
        }
        model = next;
        model.loglik_trace.push(ll);
        if (ll - prev).abs() <= opts.tol * prev.abs().max(1.0) {
            converged = true;
            break;
        }
        prev = ll;
    }
    let predictor = coefficients_from_covariance(&model)?;
    Ok(EmFit {
        model,
        predictor,
        iterations,
        converged,
    })
}

/// Settings of the plug-in estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveOptions {
    /// Feature covariance to use instead of the test-sample estimate, in
    /// original feature order.
    pub known_sigma_x: Option<DMatrix<f64>>,
    /// Include the unlabeled test rows in the moment estimates and likelihood.
    pub use_unlabeled: bool,
    pub nelder_mead: NelderMeadOptions,
}

impl Default for NaiveOptions {
    fn default() -> Self {
        Self {
            known_sigma_x: None,
            use_unlabeled: true,
            nelder_mead: NelderMeadOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveFit {
    pub model: CovarianceModel,
    pub predictor: LinearPredictor,
    /// The initial free block had to be moved to reach a PD matrix.
    pub repaired: bool,
    pub evals: usize,
}

const MIN_EIGENVALUE: f64 = 1e-8;

/// Plug-in estimator with `Cov(X_S, Y)` and `Var(Y)` fixed by `alpha` and
/// `eps_var`; the free block `Cov(X_N, Y)` is made feasible by shrinking
/// toward `Sigma_NS alpha` and then fitted by Nelder-Mead on the test-task
/// likelihood.
pub fn naive_plugin_fit(
    dataset: &MultiTaskDataset,
    subset: &SubsetMask,
    test_task_id: u32,
    alpha: &DVector<f64>,
    eps_var: f64,
    opts: &NaiveOptions,
) -> Result<NaiveFit> {
    let layout = Layout::new(subset, dataset.p);
    let (p, s) = (layout.p(), layout.s.len());
    if alpha.len() != s {
        return Err(Error::InvalidConfig(format!("alpha has length {} for |S|={s}", alpha.len())));
    }
    let labeled = dataset.labeled_sample(test_task_id);
    let unlabeled = dataset.unlabeled_sample(test_task_id).filter(|_| opts.use_unlabeled);
    let x_blocks: Vec<DMatrix<f64>> = labeled
        .iter()
        .chain(unlabeled.iter())
        .map(|t| layout.features(t))
        .collect();
    if x_blocks.is_empty() {
        return Err(Error::NoTestTask);
    }
    let n_x: usize = x_blocks.iter().map(|b| b.nrows()).sum();
    let mut x_all = DMatrix::zeros(n_x, p);
    let mut offset = 0;
    for b in &x_blocks {
        x_all.rows_mut(offset, b.nrows()).copy_from(b);
        offset += b.nrows();
    }
    let (mean_x, sample_sigma_x) = linalg::sample_moments(&x_all);
    let sigma_x = match &opts.known_sigma_x {
        Some(known) => {
            let order = layout.feature_order();
            linalg::submatrix(known, &order, &order)
        }
        None => sample_sigma_x,
    };
    if !linalg::is_positive_definite(&sigma_x) {
        return Err(Error::InfeasibleConstraints("feature covariance is not positive definite".into()));
    }
    if !(eps_var > 0.0) {
        return Err(Error::InfeasibleConstraints(format!("noise variance {eps_var} must be positive")));
    }

    let s_idx: Vec<usize> = (0..s).collect();
    let n_idx: Vec<usize> = (s..p).collect();
    let sigma_s = linalg::submatrix(&sigma_x, &s_idx, &s_idx);
    let cov_sy = &sigma_s * alpha;
    let var_y = alpha.dot(&cov_sy) + eps_var;
    let center = linalg::submatrix(&sigma_x, &n_idx, &s_idx) * alpha;

    let build = |free: &[f64]| -> DMatrix<f64> {
        let mut sigma = sigma_x.clone().resize(p + 1, p + 1, 0.0);
        for k in 0..s {
            sigma[(k, p)] = cov_sy[k];
            sigma[(p, k)] = cov_sy[k];
        }
        for (k, v) in free.iter().enumerate() {
            sigma[(s + k, p)] = *v;
            sigma[(p, s + k)] = *v;
        }
        sigma[(p, p)] = var_y;
        sigma
    };

    let start: DVector<f64> = match labeled.filter(|t| t.n_rows() >= 2) {
        Some(t) => {
            let (_, cov) = linalg::sample_moments(&layout.labeled_rows(t));
            DVector::from_fn(p - s, |k, _| cov[(s + k, p)])
        }
        None => center.clone(),
    };
    let mut shrink = 1.0;
    let mut free = start.clone();
    for _ in 0..60 {
        free = &center + (&start - &center) * shrink;
        if linalg::min_eigenvalue(&build(free.as_slice())) >= MIN_EIGENVALUE {
            break;
        }
        shrink *= 0.5;
    }
    if linalg::min_eigenvalue(&build(free.as_slice())) < MIN_EIGENVALUE {
        free = center.clone();
        shrink = 0.0;
    }
    let repaired = shrink < 1.0;

    let mut mean = mean_x.clone().resize_vertically(p + 1, 0.0);
    mean[p] = alpha.dot(&mean_x.rows(0, s));
    let make_model = |free: &[f64]| CovarianceModel {
        feature_order: layout.feature_order(),
        s_size: s,
        mean: mean.clone(),
        sigma: build(free),
        loglik_trace: Vec::new(),
    };

    let mut evals = 0;
    if p > s {
        if let Some(t) = labeled {
            let mut blocks = Vec::new();
            blocks.push(((0..=p).collect::<Vec<_>>(), layout.labeled_rows(t)));
            if let Some(u) = unlabeled {
                blocks.push(((0..p).collect(), layout.features(u)));
            }
            let data = MtlData::from_blocks(p + 1, blocks)?;
            let objective = |c: &[f64]| match observed_loglik(&make_model(c), &data) {
                Ok(ll) => -ll,
                Err(_) => f64::INFINITY,
            };
            let steps: Vec<f64> = (s..p).map(|j| 0.1 * (sigma_x[(j, j)] * var_y).sqrt()).collect();
            let best = nelder_mead(objective, free.as_slice(), &steps, &opts.nelder_mead);
            evals = best.evals;
            if best.value.is_finite() {
                free = DVector::from_vec(best.x);
            }
        }
    }
    let model = make_model(free.as_slice());
    let predictor = coefficients_from_covariance(&model)?;
    Ok(NaiveFit {
        model,
        predictor,
        repaired,
        evals,
    })
}

/// Loss-minimizing coefficients on the test task from the invariant
/// regression and the anticausal regression `X_N = gamma Y + eta`.
///
/// `sigma_n = E(eta eta^t)`, `sigma_xs = E(X_S X_S^t)`, `sigma_xn = E(X_S eta^t)`.
/// Exact when `eta` is uncorrelated with the noise of `Y`.
pub fn analytic_beta_opt(
    alpha: &DVector<f64>,
    eps_var: f64,
    gamma: &DVector<f64>,
    sigma_n: &DMatrix<f64>,
    sigma_xs: &DMatrix<f64>,
    sigma_xn: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let chol = linalg::cholesky_or(sigma_xs, "covariance of the invariant block")?;
    let xs_inv_xn = chol.solve(sigma_xn);
    let mut m = gamma * gamma.transpose() * eps_var + sigma_n - sigma_xn.transpose() * &xs_inv_xn;
    linalg::symmetrize(&mut m);
    let eig = SymmetricEigen::new(m.clone());
    let max_abs = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let min_abs = eig.eigenvalues.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    if !(max_abs > 0.0) || min_abs <= 1e-14 * max_abs {
        return Err(Error::SingularM);
    }
    let beta_n = m.lu().solve(&(gamma * eps_var)).ok_or(Error::SingularM)?;
    let beta_s = alpha * (1.0 - gamma.dot(&beta_n)) - xs_inv_xn * &beta_n;
    Ok((beta_s, beta_n))
}
