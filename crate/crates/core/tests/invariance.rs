use invariant_transfer::regression::ResidualSample;
use invariant_transfer::rng::{self, StreamRng};
use invariant_transfer::{hsic_d_sample_test, hsic_statistic, levene_test, KernelConfig};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(r: &mut StreamRng) -> f64 {
    StandardNormal.sample(r)
}

fn null_sample(tasks: u32, per_task: usize, r: &mut StreamRng) -> ResidualSample {
    let mut residuals = Vec::new();
    let mut task_labels = Vec::new();
    for t in 1..=tasks {
        for _ in 0..per_task {
            residuals.push(normal(r));
            task_labels.push(t);
        }
    }
    ResidualSample { residuals, task_labels }
}

/// `(1/n^2) sum k l + (1/n^4) sum k sum l - (2/n^3) sum_ijq k_ij l_iq`.
fn double_sum_hsic(s: &ResidualSample, h: f64) -> f64 {
    let n = s.len();
    let nf = n as f64;
    let k = |i: usize, j: usize| {
        let d = s.residuals[i] - s.residuals[j];
        (-d * d / (2.0 * h * h)).exp()
    };
    let l = |i: usize, j: usize| f64::from(u8::from(s.task_labels[i] == s.task_labels[j]));
    let (mut a, mut sk, mut sl, mut c) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let (mut ki, mut li) = (0.0, 0.0);
        for j in 0..n {
            a += k(i, j) * l(i, j);
            sk += k(i, j);
            sl += l(i, j);
            ki += k(i, j);
            li += l(i, j);
        }
        c += ki * li;
    }
    a / (nf * nf) + sk * sl / nf.powi(4) - 2.0 * c / nf.powi(3)
}

fn upper_median_positive_distance(r: &[f64]) -> f64 {
    let mut d: Vec<f64> = Vec::new();
    for i in 0..r.len() {
        for j in i + 1..r.len() {
            let v = (r[i] - r[j]).abs();
            if v > 0.0 {
                d.push(v);
            }
        }
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

#[test]
fn trace_form_matches_double_sum_oracle() {
    let mut r = rng::stream(2024, &[1]);
    for _ in 0..20 {
        let tasks = r.random_range(2..5);
        let mut s = null_sample(tasks, 100 / tasks as usize, &mut r);
        // inject some dependence so the statistic is not near zero
        for (x, &t) in s.residuals.iter_mut().zip(&s.task_labels) {
            *x *= 1.0 + 0.3 * f64::from(t);
        }
        let h = r.random_range(0.2..3.0);
        let fixed = hsic_statistic(&s, &KernelConfig::fixed(h).unwrap()).unwrap();
        assert!((fixed - double_sum_hsic(&s, h)).abs() < 1e-10);

        let med = upper_median_positive_distance(&s.residuals) / 2f64.sqrt();
        let heuristic = hsic_statistic(&s, &KernelConfig::default()).unwrap();
        assert!((heuristic - double_sum_hsic(&s, med)).abs() < 1e-10);
    }
}

fn rejection_rate(reps: u64, mut test: impl FnMut(u64) -> bool) -> f64 {
    (0..reps).filter(|&rep| test(rep)).count() as f64 / reps as f64
}

#[test]
fn hsic_is_calibrated_on_gaussian_nulls() {
    let rate = rejection_rate(500, |rep| {
        let s = null_sample(3, 200, &mut rng::stream(rep, &[2]));
        !hsic_d_sample_test(&s, &KernelConfig::default(), 0.05).unwrap().accepted
    });
    assert!((0.02..=0.10).contains(&rate), "rejection rate {rate}");
}

#[test]
fn hsic_is_calibrated_under_label_permutation() {
    let rate = rejection_rate(500, |rep| {
        let mut r = rng::stream(rep, &[3]);
        // heavy-tailed, task-dependent residuals whose labels are then shuffled
        let mut s = null_sample(3, 200, &mut r);
        for (x, &t) in s.residuals.iter_mut().zip(&s.task_labels) {
            *x = x.powi(3) * f64::from(t);
        }
        s.task_labels.shuffle(&mut r);
        !hsic_d_sample_test(&s, &KernelConfig::default(), 0.05).unwrap().accepted
    });
    assert!((0.02..=0.10).contains(&rate), "rejection rate {rate}");
}

#[test]
fn levene_is_calibrated_on_gaussian_nulls() {
    let rate = rejection_rate(500, |rep| {
        let s = null_sample(3, 200, &mut rng::stream(rep, &[4]));
        !levene_test(&s, 0.05).unwrap().accepted
    });
    assert!((0.03..=0.08).contains(&rate), "rejection rate {rate}");
}

#[test]
fn both_tests_detect_a_tenfold_variance_change() {
    let mut r = rng::stream(9, &[5]);
    let mut s = null_sample(2, 500, &mut r);
    for (x, &t) in s.residuals.iter_mut().zip(&s.task_labels) {
        if t == 2 {
            *x *= 10f64.sqrt();
        }
    }
    assert!(levene_test(&s, 0.05).unwrap().p_value < 0.01);
    assert!(hsic_d_sample_test(&s, &KernelConfig::default(), 0.05).unwrap().p_value < 0.01);
}

#[test]
fn perfect_task_dependence_is_rejected() {
    let s = ResidualSample {
        residuals: (0..100).map(|i| if i < 50 { 1.0 } else { -1.0 }).collect(),
        task_labels: (0..100).map(|i| if i < 50 { 1 } else { 2 }).collect(),
    };
    let out = hsic_d_sample_test(&s, &KernelConfig::default(), 0.05).unwrap();
    assert!(out.statistic > 0.0);
    assert!(out.p_value < 1e-6);
    assert!(!out.accepted);
}
