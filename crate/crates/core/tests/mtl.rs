use invariant_transfer::mtl::{Layout, NaiveOptions};
use invariant_transfer::rng::{self, StreamRng};
use invariant_transfer::synthetic::{gen_dg_tasks, DgGenConfig, GammaDist};
use invariant_transfer::{
    analytic_beta_opt, coefficients_from_covariance, em_fit, fit_domain_only, fit_pooled_ols, naive_plugin_fit,
    CovarianceModel, EmOptions, LinearPredictor, MultiTaskDataset, SubsetMask, TaskSample,
};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

fn normal(r: &mut StreamRng) -> f64 {
    StandardNormal.sample(r)
}

fn amtl(seed: u64) -> DgGenConfig {
    DgGenConfig {
        s_size: 3,
        n_size: 3,
        d_tasks: 2,
        n_per_task: 300,
        n_test: 50,
        n_test_unlabeled: 100,
        gamma_dist: GammaDist::Uniform { lo: 0.0, hi: 1.5 },
        seed,
        ..DgGenConfig::default()
    }
}

#[test]
fn em_likelihood_never_decreases_on_benchmark_instances() {
    for seed in 0..50 {
        let inst = gen_dg_tasks(&amtl(seed)).unwrap();
        let cfg = amtl(seed);
        for use_unlabeled in [false, true] {
            let opts = EmOptions {
                tol: 0.0,
                max_iter: 200,
                use_unlabeled,
            };
            let fit = em_fit(&inst.dataset, &cfg.causal_subset(), cfg.test_task_id(), &opts).unwrap();
            for w in fit.model.loglik_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "seed {seed}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

/// Rows of `(X_S, X_N, Y)` with `X_S ~ N(0, I)`, `Y = 1.5 x1 - x2 + eps` and
/// `X_N = gamma Y + eta`, all with the given noise scales.
fn shared_law_task(id: u32, n: usize, gamma: [f64; 2], r: &mut StreamRng) -> TaskSample {
    let mut x = DMatrix::zeros(n, 4);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let (a, b) = (normal(r), normal(r));
        let yi = 1.5 * a - b + normal(r);
        x[(i, 0)] = a;
        x[(i, 1)] = b;
        x[(i, 2)] = gamma[0] * yi + 0.8 * normal(r);
        x[(i, 3)] = gamma[1] * yi + normal(r);
        y[i] = yi;
    }
    TaskSample::labeled(id, x, y)
}

/// Largest relative gap between the EM coefficients and pooled full-feature
/// OLS over all four tasks, when every task follows the same law.
fn identical_task_gap(n_per_task: usize) -> f64 {
    let mut r = rng::stream(11, &[1]);
    let tasks: Vec<TaskSample> = (1..=4).map(|id| shared_law_task(id, n_per_task, [1.0, -0.7], &mut r)).collect();
    let pooled = fit_pooled_ols(&MultiTaskDataset::new(tasks.clone(), 4), &SubsetMask::full(4))
        .unwrap()
        .full_coefficients(4);
    let ds = MultiTaskDataset::new(tasks, 4).with_test_task(4);
    let s = SubsetMask::new(vec![0, 1], 4).unwrap();
    let em = em_fit(&ds, &s, 4, &EmOptions::default()).unwrap().predictor.full_coefficients(4);
    (0..4).map(|j| (em[j] - pooled[j]).abs() / pooled[j].abs()).fold(0.0, f64::max)
}

// The X_N block of the EM estimate is learned from the 5000 test rows only, so
// its sampling error alone is a few percent of coefficients near 0.2 to 0.5.
#[test]
#[ignore = "unattainable at 5000 rows per task: sampling error of the test-only block exceeds 2%"]
fn identical_tasks_with_abundant_data_match_pooled_least_squares() {
    let gap = identical_task_gap(5000);
    assert!(gap <= 0.02, "largest relative coefficient gap {gap}");
}

#[test]
fn identical_tasks_with_ten_times_more_data_match_pooled_least_squares() {
    let gap = identical_task_gap(50_000);
    assert!(gap <= 0.02, "largest relative coefficient gap {gap}");
}

#[test]
fn large_test_samples_pull_the_estimate_to_the_test_only_fit() {
    let s = SubsetMask::new(vec![0, 1], 4).unwrap();
    let mut mean_dist = Vec::new();
    for n_t in [50, 500, 5000] {
        let mut total = 0.0;
        for seed in 0..5 {
            let mut r = rng::stream(seed, &[2, n_t as u64]);
            // training tasks follow a different anticausal law than the test task
            let mut tasks: Vec<TaskSample> = (1..=3).map(|id| shared_law_task(id, 20, [0.2, 0.3], &mut r)).collect();
            tasks.push(shared_law_task(4, n_t, [1.0, -0.7], &mut r));
            let ds = MultiTaskDataset::new(tasks, 4).with_test_task(4);
            let em = em_fit(&ds, &s, 4, &EmOptions::default()).unwrap().predictor.full_coefficients(4);
            let dom = fit_domain_only(&ds, 4).unwrap().full_coefficients(4);
            total += (em - dom).norm();
        }
        mean_dist.push(total / 5.0);
    }
    assert!(mean_dist[0] > mean_dist[1] && mean_dist[1] > mean_dist[2], "{mean_dist:?}");
    assert!(mean_dist[2] < 0.01, "{mean_dist:?}");
}

#[test]
fn fitted_joint_model_reproduces_the_always_observed_moments() {
    // (X_S, Y) is observed in every row, so its maximum-likelihood marginal
    // equals the sample moments of those rows.
    for seed in 0..5 {
        let cfg = amtl(100 + seed);
        let inst = gen_dg_tasks(&cfg).unwrap();
        let opts = EmOptions {
            tol: 1e-14,
            max_iter: 5000,
            use_unlabeled: false,
        };
        let fit = em_fit(&inst.dataset, &cfg.causal_subset(), cfg.test_task_id(), &opts).unwrap();
        let s = cfg.s_size;
        let rows: Vec<(Vec<f64>, f64)> = inst
            .dataset
            .tasks
            .iter()
            .filter(|t| t.is_labeled())
            .flat_map(|t| {
                let y = t.targets.as_ref().unwrap();
                (0..t.n_rows()).map(move |i| ((0..s).map(|j| t.features[(i, j)]).collect(), y[i]))
            })
            .collect();
        let n = rows.len() as f64;
        let z: Vec<Vec<f64>> = rows
            .iter()
            .map(|(x, y)| x.iter().copied().chain(std::iter::once(*y)).collect())
            .collect();
        let idx: Vec<usize> = (0..s).chain(std::iter::once(cfg.p())).collect();
        for (a, &ia) in idx.iter().enumerate() {
            let mean_a = z.iter().map(|v| v[a]).sum::<f64>() / n;
            assert!((fit.model.mean[ia] - mean_a).abs() < 1e-6);
            for (b, &ib) in idx.iter().enumerate() {
                let mean_b = z.iter().map(|v| v[b]).sum::<f64>() / n;
                let cov = z.iter().map(|v| (v[a] - mean_a) * (v[b] - mean_b)).sum::<f64>() / n;
                let model = fit.model.sigma[(ia, ib)];
                assert!((model - cov).abs() < 1e-6 * cov.abs().max(1.0), "({ia},{ib}): {model} vs {cov}");
            }
        }
    }
}

#[test]
fn plug_in_fit_stays_at_population_moments() {
    // population covariance of (x1, x2, x3, y) with y = x1 - 0.5 x2 + eps,
    // x3 = 0.8 y + eta
    let alpha = DVector::from_vec(vec![1.0, -0.5]);
    let eps_var = 0.7;
    let sx = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
    let cov_sy = &sx * &alpha;
    let var_y = alpha.dot(&cov_sy) + eps_var;
    let mut sigma = DMatrix::zeros(4, 4);
    sigma.view_mut((0, 0), (2, 2)).copy_from(&sx);
    for k in 0..2 {
        sigma[(k, 2)] = 0.8 * cov_sy[k];
        sigma[(2, k)] = 0.8 * cov_sy[k];
        sigma[(k, 3)] = cov_sy[k];
        sigma[(3, k)] = cov_sy[k];
    }
    sigma[(2, 2)] = 0.64 * var_y + 0.5;
    sigma[(2, 3)] = 0.8 * var_y;
    sigma[(3, 2)] = 0.8 * var_y;
    sigma[(3, 3)] = var_y;

    // a sample whose moments are exactly (0, sigma)
    let n = 400;
    let mut r = rng::stream(5, &[3]);
    let mut z = DMatrix::from_fn(n, 4, |_, _| normal(&mut r));
    for j in 0..4 {
        let m = z.column(j).mean();
        z.column_mut(j).add_scalar_mut(-m);
    }
    let cov = z.tr_mul(&z) / n as f64;
    let white = cov.cholesky().unwrap().l().try_inverse().unwrap();
    let target = sigma.clone().cholesky().unwrap().l();
    let rows = z * white.transpose() * target.transpose();
    let sample = TaskSample::labeled(
        1,
        rows.columns(0, 3).into_owned(),
        rows.column(3).into_owned(),
    );
    let ds = MultiTaskDataset::new(vec![sample], 3).with_test_task(1);
    let s = SubsetMask::new(vec![0, 1], 3).unwrap();
    let fit = naive_plugin_fit(&ds, &s, 1, &alpha, eps_var, &NaiveOptions::default()).unwrap();
    assert!(!fit.repaired);
    assert!((fit.model.sigma[(2, 3)] - sigma[(2, 3)]).abs() < 1e-3);
}

/// `(analytic coefficients in original order, population covariance of (X, Y))`
/// for the test task of a generated instance.
fn analytic_on_test_law(seed: u64) -> (DVector<f64>, DMatrix<f64>, usize, invariant_transfer::synthetic::DgInstance) {
    let cfg = DgGenConfig {
        s_size: 3,
        n_size: 2,
        seed,
        ..DgGenConfig::default()
    };
    let inst = gen_dg_tasks(&cfg).unwrap();
    let law = inst.model.test_law();
    let sigma_xs = &law.u_s * law.u_s.transpose();
    let noise = &law.mix * &law.v;
    let sigma_n = &noise * noise.transpose();
    let sigma_xn = DMatrix::zeros(3, 2);
    let eps_var = cfg.eps_std * cfg.eps_std;
    let (bs, bn) = analytic_beta_opt(&inst.model.alpha, eps_var, &law.gamma, &sigma_n, &sigma_xs, &sigma_xn).unwrap();
    let beta = DVector::from_iterator(5, bs.iter().chain(bn.iter()).copied());
    let cov = inst.model.population_covariance(law);
    (beta, cov, cfg.p(), inst)
}

#[test]
fn analytic_optimum_matches_population_regression() {
    for seed in 0..20 {
        let (beta, cov, p, _) = analytic_on_test_law(seed);
        let model = CovarianceModel::new((0..p).collect(), p, DVector::zeros(p + 1), cov).unwrap();
        let oracle = coefficients_from_covariance(&model).unwrap().full_coefficients(p);
        for j in 0..p {
            assert!(
                (beta[j] - oracle[j]).abs() < 1e-8 * oracle[j].abs().max(1.0),
                "seed {seed}, coefficient {j}"
            );
        }
    }
}

#[test]
fn analytic_optimum_beats_random_perturbations() {
    for seed in 0..5 {
        let (beta, _, _, inst) = analytic_on_test_law(seed);
        let law = inst.model.test_law();
        let best = inst.model.population_mse(law, &LinearPredictor::dense(beta.clone(), 0.0));
        let mut r = rng::stream(seed, &[4]);
        for _ in 0..200 {
            let mut dir = DVector::from_fn(5, |_, _| normal(&mut r));
            dir *= 0.1 / dir.norm();
            let worse = inst.model.population_mse(law, &LinearPredictor::dense(&beta + dir, 0.0));
            assert!(worse >= best - 1e-9 * best, "seed {seed}: {worse} < {best}");
        }
    }
}

#[test]
fn layout_puts_the_invariant_block_first() {
    let layout = Layout::new(&SubsetMask::new(vec![1, 3], 4).unwrap(), 4);
    assert_eq!(layout.feature_order(), vec![1, 3, 0, 2]);
}
