//! Seeded generators for the two simulation designs and the closed-form
//! errors of the three-node model.
//!
//! Multi-task design, per task `k`:
//!
//! ```text
//! X_S ~ N(0, U_S U_S^t)      U_S entries ~ u_causal_range
//! Y   = alpha^t X_S + eps     eps ~ N(0, eps_std^2)
//! X_N = gamma_k Y + (I + U_k) eta,   eta ~ N(0, V V^t)
//! ```
//!
//! with `U_k` entries from `u_mix_range`, `V` entries from `u_noise_range`,
//! and one `gamma_k` entry per `X_N` coordinate. `alpha` is shared by all
//! tasks; everything else is redrawn per task. Features are ordered
//! `(X_S, X_N, extra noise)`, so the invariant set is `{1..s_size}`.
//!
//! Three-node design: `X_S` independent with variances `sigma_x^2`,
//! `Y = alpha^t X_S + eps`, `Z = gamma_k Y + eta`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LinearPredictor, MultiTaskDataset, SubsetMask, TaskSample};
use crate::rng::{self, tag, StreamRng};

/// Closed interval `[lo, hi]`; uniform draws, or the constant when `lo == hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    fn validate(&self, name: &str) -> Result<()> {
        if self.0.is_finite() && self.1.is_finite() && self.0 <= self.1 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("{name} range [{}, {}] is empty", self.0, self.1)))
        }
    }

    fn sample(&self, r: &mut StreamRng) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            r.random_range(self.0..self.1)
        }
    }

    fn matrix(&self, rows: usize, cols: usize, r: &mut StreamRng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| self.sample(r))
    }
}

/// Law of the per-task anticausal coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaDist {
    StudentT { df: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Mean and variance.
    Normal { mu: f64, var: f64 },
}

impl GammaDist {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            GammaDist::StudentT { df } => df > 0.0,
            GammaDist::Uniform { lo, hi } => lo <= hi,
            GammaDist::Normal { mu, var } => mu.is_finite() && var >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid gamma distribution {self:?}")))
        }
    }

    fn sample(&self, r: &mut StreamRng) -> f64 {
        match *self {
            GammaDist::StudentT { df } => StudentT::new(df).expect("validated").sample(r),
            GammaDist::Uniform { lo, hi } => Interval(lo, hi).sample(r),
            GammaDist::Normal { mu, var } => Normal::new(mu, var.sqrt()).expect("validated").sample(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgGenConfig {
    pub s_size: usize,
    pub n_size: usize,
    /// Independent standard normal predictors appended after `X_N`.
    pub n_noise: usize,
    pub d_tasks: usize,
    pub n_per_task: usize,
    /// Labeled rows of the test task included in the dataset.
    pub n_test: usize,
    /// Unlabeled rows of the test task included in the dataset.
    pub n_test_unlabeled: usize,
    pub eps_std: f64,
    pub gamma_dist: GammaDist,
    pub u_causal_range: Interval,
    pub u_noise_range: Interval,
    pub u_mix_range: Interval,
    pub alpha_range: Interval,
    pub seed: u64,
}

impl Default for DgGenConfig {
    fn default() -> Self {
        Self {
            s_size: 4,
            n_size: 4,
            n_noise: 0,
            d_tasks: 6,
            n_per_task: 1000,
            n_test: 0,
            n_test_unlabeled: 0,
            eps_std: std::f64::consts::SQRT_2,
            gamma_dist: GammaDist::StudentT { df: 3.0 },
            u_causal_range: Interval(-2.0, 2.0),
            u_noise_range: Interval(-1.0, 1.0),
            u_mix_range: Interval(-4.0, 4.0),
            alpha_range: Interval(-1.0, 2.5),
            seed: 0,
        }
    }
}

impl DgGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_tasks == 0 {
            return Err(Error::InvalidConfig("at least one training task".into()));
        }
        if self.n_per_task == 0 {
            return Err(Error::InvalidConfig("n_per_task must be positive".into()));
        }
        if self.s_size + self.n_size + self.n_noise == 0 {
            return Err(Error::InvalidConfig("no predictors".into()));
        }
        if !(self.eps_std > 0.0 && self.eps_std.is_finite()) {
            return Err(Error::InvalidConfig(format!("eps_std {} must be positive", self.eps_std)));
        }
        self.gamma_dist.validate()?;
        self.u_causal_range.validate("u_causal")?;
        self.u_noise_range.validate("u_noise")?;
        self.u_mix_range.validate("u_mix")?;
        self.alpha_range.validate("alpha")
    }

    pub fn p(&self) -> usize {
        self.s_size + self.n_size + self.n_noise
    }

    pub fn test_task_id(&self) -> u32 {
        self.d_tasks as u32 + 1
    }

    /// The invariant set of the design.
    pub fn causal_subset(&self) -> SubsetMask {
        SubsetMask::new((0..self.s_size).collect(), self.p()).expect("in range")
    }
}

/// Parameters of one generated task.
#[derive(Debug, Clone, PartialEq)]
pub struct DgTaskLaw {
    pub task_id: u32,
    /// `Sigma_S = u_s u_s^t`.
    pub u_s: DMatrix<f64>,
    /// One coefficient per `X_N` coordinate.
    pub gamma: DVector<f64>,
    /// `I + U_k`.
    pub mix: DMatrix<f64>,
    /// `Sigma_N = v v^t`.
    pub v: DMatrix<f64>,
}

/// Everything needed to draw fresh samples from any task.
#[derive(Debug, Clone, PartialEq)]
pub struct DgModel {
    pub config: DgGenConfig,
    pub alpha: DVector<f64>,
    /// Training tasks followed by the test task.
    pub tasks: Vec<DgTaskLaw>,
}

impl DgModel {
    pub fn test_law(&self) -> &DgTaskLaw {
        self.tasks.last().expect("test task present")
    }

    /// `n` rows of task `law`, drawn from `r`.
    pub fn sample(&self, law: &DgTaskLaw, n: usize, r: &mut StreamRng) -> (DMatrix<f64>, DVector<f64>) {
        let cfg = &self.config;
        let (s, m, extra) = (cfg.s_size, cfg.n_size, cfg.n_noise);
        let mut x = DMatrix::zeros(n, s + m + extra);
        let mut y = DVector::zeros(n);
        let mut z_s = DVector::zeros(s);
        let mut z_n = DVector::zeros(m);
        for i in 0..n {
            z_s.iter_mut().for_each(|v| *v = StandardNormal.sample(r));
            let xs = &law.u_s * &z_s;
            let eps: f64 = StandardNormal.sample(r);
            let yi = self.alpha.dot(&xs) + cfg.eps_std * eps;
            z_n.iter_mut().for_each(|v| *v = StandardNormal.sample(r));
            let xn = &law.gamma * yi + &law.mix * (&law.v * &z_n);
            for j in 0..s {
                x[(i, j)] = xs[j];
            }
            for j in 0..m {
                x[(i, s + j)] = xn[j];
            }
            for j in 0..extra {
                x[(i, s + m + j)] = StandardNormal.sample(r);
            }
            y[i] = yi;
        }
        (x, y)
    }

    /// Population covariance of `(X, Y)` for a task, features in dataset order.
    pub fn population_covariance(&self, law: &DgTaskLaw) -> DMatrix<f64> {
        let cfg = &self.config;
        let (s, m, extra) = (cfg.s_size, cfg.n_size, cfg.n_noise);
        let p = s + m + extra;
        let sigma_s = &law.u_s * law.u_s.transpose();
        let cov_sy = &sigma_s * &self.alpha;
        let var_y = self.alpha.dot(&cov_sy) + cfg.eps_std * cfg.eps_std;
        let noise = &law.mix * &law.v;
        let cov_ns = &law.gamma * cov_sy.transpose();
        let cov_nn = &law.gamma * law.gamma.transpose() * var_y + &noise * noise.transpose();
        let cov_ny = &law.gamma * var_y;
        let mut c = DMatrix::zeros(p + 1, p + 1);
        c.view_mut((0, 0), (s, s)).copy_from(&sigma_s);
        c.view_mut((s, 0), (m, s)).copy_from(&cov_ns);
        c.view_mut((0, s), (s, m)).copy_from(&cov_ns.transpose());
        c.view_mut((s, s), (m, m)).copy_from(&cov_nn);
        for j in 0..extra {
            c[(s + m + j, s + m + j)] = 1.0;
        }
        for j in 0..s {
            c[(j, p)] = cov_sy[j];
            c[(p, j)] = cov_sy[j];
        }
        for j in 0..m {
            c[(s + j, p)] = cov_ny[j];
            c[(p, s + j)] = cov_ny[j];
        }
        c[(p, p)] = var_y;
        c
    }

    /// Exact expected squared error of `predictor` on a task (all means are zero).
    pub fn population_mse(&self, law: &DgTaskLaw, predictor: &LinearPredictor) -> f64 {
        let p = self.config.p();
        let c = self.population_covariance(law);
        let mut w = -predictor.full_coefficients(p).resize_vertically(p + 1, 0.0);
        w[p] = 1.0;
        (w.transpose() * c * &w)[(0, 0)] + predictor.intercept * predictor.intercept
    }
}

/// A generated dataset with the law that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DgInstance {
    pub dataset: MultiTaskDataset,
    pub model: DgModel,
}

fn draw_task_law(cfg: &DgGenConfig, task_id: u32) -> DgTaskLaw {
    let mut r = rng::stream(cfg.seed, &[tag::DG_PARAMS, u64::from(task_id)]);
    let u_s = cfg.u_causal_range.matrix(cfg.s_size, cfg.s_size, &mut r);
    let gamma = DVector::from_fn(cfg.n_size, |_, _| cfg.gamma_dist.sample(&mut r));
    let mix = DMatrix::identity(cfg.n_size, cfg.n_size) + cfg.u_mix_range.matrix(cfg.n_size, cfg.n_size, &mut r);
    let v = cfg.u_noise_range.matrix(cfg.n_size, cfg.n_size, &mut r);
    DgTaskLaw {
        task_id,
        u_s,
        gamma,
        mix,
        v,
    }
}

/// Seed path of the rows of one task: `part` 0 is labeled data, 1 unlabeled,
/// 2 and above are reserved for evaluation samples.
pub fn sample_stream(seed: u64, task_id: u32, part: u64) -> StreamRng {
    rng::stream(seed, &[tag::DG_SAMPLE, u64::from(task_id), part])
}

/// `d_tasks` training tasks (ids `1..=D`) plus the test task (id `D+1`).
pub fn gen_dg_tasks(cfg: &DgGenConfig) -> Result<DgInstance> {
    cfg.validate()?;
    let mut r = rng::stream(cfg.seed, &[tag::DG_PARAMS]);
    let alpha = DVector::from_fn(cfg.s_size, |_, _| cfg.alpha_range.sample(&mut r));
    let tasks: Vec<DgTaskLaw> = (1..=cfg.test_task_id()).map(|id| draw_task_law(cfg, id)).collect();
    let model = DgModel {
        config: cfg.clone(),
        alpha,
        tasks,
    };
    let mut samples = Vec::new();
    for law in &model.tasks {
        let is_test = law.task_id == cfg.test_task_id();
        let n = if is_test { cfg.n_test } else { cfg.n_per_task };
        if n > 0 {
            let (x, y) = model.sample(law, n, &mut sample_stream(cfg.seed, law.task_id, 0));
            samples.push(TaskSample::labeled(law.task_id, x, y));
        }
        if is_test && cfg.n_test_unlabeled > 0 {
            let (x, _) = model.sample(law, cfg.n_test_unlabeled, &mut sample_stream(cfg.seed, law.task_id, 1));
            samples.push(TaskSample::unlabeled(law.task_id, x));
        }
    }
    let has_test = samples.iter().any(|t| t.task_id == cfg.test_task_id());
    let mut dataset = MultiTaskDataset::new(samples, cfg.p());
    dataset.feature_names = Some((1..=cfg.p()).map(|j| format!("x{j}")).collect());
    if has_test {
        dataset.test_task_id = Some(cfg.test_task_id());
    }
    Ok(DgInstance { dataset, model })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreeNodeConfig {
    pub s_size: usize,
    pub alpha: Vec<f64>,
    /// Standard deviations of the independent `X_S` coordinates.
    pub sigma_x: Vec<f64>,
    /// Standard deviation of the noise of `Y`.
    pub sigma_eps: f64,
    /// Standard deviation of the noise of `Z`.
    pub sigma_eta: f64,
    pub gamma_mean: f64,
    pub gamma_var: f64,
    pub d_tasks: usize,
    pub n_per_task: usize,
    pub seed: u64,
}

impl ThreeNodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() != self.s_size || self.sigma_x.len() != self.s_size {
            return Err(Error::InvalidConfig(format!(
                "alpha ({}) and sigma_x ({}) must have length s_size={}",
                self.alpha.len(),
                self.sigma_x.len(),
                self.s_size
            )));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !self.sigma_x.iter().all(|&v| positive(v)) || !positive(self.sigma_eps) || !positive(self.sigma_eta) {
            return Err(Error::InvalidConfig("standard deviations must be positive".into()));
        }
        if !(self.gamma_var >= 0.0) || !self.gamma_mean.is_finite() {
            return Err(Error::InvalidConfig("gamma variance must be nonnegative".into()));
        }
        if self.d_tasks == 0 {
            return Err(Error::InvalidConfig("at least one training task".into()));
        }
        Ok(())
    }

    fn var_x(&self) -> DVector<f64> {
        DVector::from_iterator(self.s_size, self.sigma_x.iter().map(|s| s * s))
    }

    /// `A = alpha^t diag(sigma_x^2) alpha`.
    pub fn explained_variance(&self) -> f64 {
        self.alpha.iter().zip(&self.sigma_x).map(|(a, s)| a * a * s * s).sum()
    }

    /// `V_Y = A + sigma_eps^2`.
    pub fn var_y(&self) -> f64 {
        self.explained_variance() + self.sigma_eps * self.sigma_eps
    }

    /// Population covariance of `(X_S, Z, Y)` for a task with coefficient `gamma`.
    pub fn population_covariance(&self, gamma: f64) -> DMatrix<f64> {
        let s = self.s_size;
        let var_x = self.var_x();
        let alpha = DVector::from_column_slice(&self.alpha);
        let cov_xy = var_x.component_mul(&alpha);
        let var_y = self.var_y();
        let mut c = DMatrix::zeros(s + 2, s + 2);
        for j in 0..s {
            c[(j, j)] = var_x[j];
            c[(j, s)] = gamma * cov_xy[j];
            c[(s, j)] = gamma * cov_xy[j];
            c[(j, s + 1)] = cov_xy[j];
            c[(s + 1, j)] = cov_xy[j];
        }
        c[(s, s)] = gamma * gamma * var_y + self.sigma_eta * self.sigma_eta;
        c[(s, s + 1)] = gamma * var_y;
        c[(s + 1, s)] = gamma * var_y;
        c[(s + 1, s + 1)] = var_y;
        c
    }
}

/// A three-node dataset and the task coefficients used to generate it.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeNodeData {
    pub dataset: MultiTaskDataset,
    /// Coefficients of the training tasks `1..=D`.
    pub gammas: Vec<f64>,
    /// Coefficient of the test task `D+1`.
    pub gamma_test: f64,
}

/// Draws `gamma_k ~ N(gamma_mean, gamma_var)` for the training and test tasks.
pub fn draw_three_node_gammas(cfg: &ThreeNodeConfig) -> Result<(Vec<f64>, f64)> {
    cfg.validate()?;
    let mut r = rng::stream(cfg.seed, &[tag::THREE_NODE]);
    let dist = GammaDist::Normal {
        mu: cfg.gamma_mean,
        var: cfg.gamma_var,
    };
    let gammas: Vec<f64> = (0..cfg.d_tasks).map(|_| dist.sample(&mut r)).collect();
    let gamma_test = dist.sample(&mut r);
    Ok((gammas, gamma_test))
}

fn three_node_rows(cfg: &ThreeNodeConfig, gamma: f64, n: usize, r: &mut StreamRng) -> (DMatrix<f64>, DVector<f64>) {
    let s = cfg.s_size;
    let mut x = DMatrix::zeros(n, s + 1);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let mut yi = 0.0;
        for j in 0..s {
            let v: f64 = StandardNormal.sample(r);
            x[(i, j)] = cfg.sigma_x[j] * v;
            yi += cfg.alpha[j] * x[(i, j)];
        }
        let eps: f64 = StandardNormal.sample(r);
        yi += cfg.sigma_eps * eps;
        let eta: f64 = StandardNormal.sample(r);
        x[(i, s)] = gamma * yi + cfg.sigma_eta * eta;
        y[i] = yi;
    }
    (x, y)
}

/// Generates the training tasks and the test task with the given coefficients.
pub fn gen_three_node_with_gammas(cfg: &ThreeNodeConfig, gammas: &[f64], gamma_test: f64) -> Result<ThreeNodeData> {
    cfg.validate()?;
    if cfg.n_per_task == 0 {
        return Err(Error::InvalidConfig("n_per_task must be positive".into()));
    }
    let mut tasks = Vec::new();
    for (k, &g) in gammas.iter().chain(std::iter::once(&gamma_test)).enumerate() {
        let id = k as u32 + 1;
        let mut r = rng::stream(cfg.seed, &[tag::THREE_NODE, u64::from(id)]);
        let (x, y) = three_node_rows(cfg, g, cfg.n_per_task, &mut r);
        tasks.push(TaskSample::labeled(id, x, y));
    }
    let test_id = gammas.len() as u32 + 1;
    Ok(ThreeNodeData {
        dataset: MultiTaskDataset::new(tasks, cfg.s_size + 1).with_test_task(test_id),
        gammas: gammas.to_vec(),
        gamma_test,
    })
}

/// Three-node data with coefficients drawn from the configured law.
pub fn gen_three_node(cfg: &ThreeNodeConfig) -> Result<ThreeNodeData> {
    let (gammas, gamma_test) = draw_three_node_gammas(cfg)?;
    gen_three_node_with_gammas(cfg, &gammas, gamma_test)
}

/// Coefficients on `(X_S, Z)` in the three-node model.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeNodeCoefficients {
    pub beta_s: DVector<f64>,
    pub beta_z: f64,
}

impl ThreeNodeCoefficients {
    /// `(alpha, 0)`.
    pub fn invariant(cfg: &ThreeNodeConfig) -> Self {
        Self {
            beta_s: DVector::from_column_slice(&cfg.alpha),
            beta_z: 0.0,
        }
    }
}

/// Population coefficients of least squares pooled over balanced training
/// tasks with coefficients `gammas`.
pub fn pooled_coefficients_closed_form(gammas: &[f64], cfg: &ThreeNodeConfig) -> Result<ThreeNodeCoefficients> {
    cfg.validate()?;
    let d = gammas.len() as f64;
    let g_sum: f64 = gammas.iter().sum();
    let g_sq: f64 = gammas.iter().map(|g| g * g).sum();
    let a = cfg.explained_variance();
    let s2 = cfg.sigma_eps * cfg.sigma_eps;
    let denom = g_sq * cfg.var_y() + d * cfg.sigma_eta * cfg.sigma_eta - g_sum * g_sum * a / d;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::DegenerateDenominator);
    }
    let beta_z = g_sum * s2 / denom;
    let beta_s = DVector::from_column_slice(&cfg.alpha) * (1.0 - g_sum / d * beta_z);
    Ok(ThreeNodeCoefficients { beta_s, beta_z })
}

/// Test-task coefficient, fixed or random with given mean and variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaT {
    Value(f64),
    Moments { mean: f64, var: f64 },
}

/// Expected squared error of `beta` on a test task.
///
/// The residual is `(1 - b gamma)(alpha^t X_S + eps) - w^t X_S - b eta`, so
/// the error is a quadratic in `gamma`; for random `gamma` only its first two
/// moments enter.
pub fn expected_test_error(beta: &ThreeNodeCoefficients, gamma: GammaT, cfg: &ThreeNodeConfig) -> f64 {
    let (m1, m2) = match gamma {
        GammaT::Value(g) => (g, g * g),
        GammaT::Moments { mean, var } => (mean, mean * mean + var),
    };
    let b = beta.beta_z;
    // E(1 - b gamma) and E(1 - b gamma)^2
    let e1 = 1.0 - b * m1;
    let e2 = 1.0 - 2.0 * b * m1 + b * b * m2;
    let var_x = cfg.var_x();
    let alpha = DVector::from_column_slice(&cfg.alpha);
    let a = cfg.explained_variance();
    let a_dw = alpha.component_mul(&var_x).dot(&beta.beta_s);
    let w_dw = beta.beta_s.component_mul(&var_x).dot(&beta.beta_s);
    let s2 = cfg.sigma_eps * cfg.sigma_eps;
    e2 * (a + s2) - 2.0 * e1 * a_dw + w_dw + b * b * cfg.sigma_eta * cfg.sigma_eta
}
