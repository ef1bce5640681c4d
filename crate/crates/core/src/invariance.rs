//! Tests for equality of residual distributions across tasks.
//!
//! The kernel test measures dependence between a residual and the task it
//! came from with the biased HSIC estimate: Gaussian kernel on residuals,
//! delta kernel on task labels. Its null law is approximated by a Gamma
//! distribution fitted to the closed-form null mean and variance.
//!
//! The delta kernel makes the centered label Gram matrix piecewise constant
//! on task blocks, so the trace and the variance sum reduce to per-row block
//! sums of `K` and `K∘K`. Only the upper triangle of the residual Gram
//! matrix is kept, and only for moderate sample sizes.

use std::cell::RefCell;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Gamma};

use crate::error::{Error, Result};
use crate::regression::ResidualSample;
use crate::rng;

/// Largest sample used to compute the median pairwise distance.
pub const MEDIAN_SUBSAMPLE: usize = 2000;

/// Bandwidth of the Gaussian residual kernel `exp(-d^2 / (2 h^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `h = median(|r_i - r_j|) / sqrt(2)`, so the median pair has exponent 1.
    #[default]
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
    /// Seed of the subsample used by the median heuristic on large samples.
    pub seed: u64,
}

impl KernelConfig {
    pub fn fixed(h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidConfig(format!("bandwidth {h} must be positive")));
        }
        Ok(Self {
            bandwidth: Bandwidth::Fixed(h),
            seed: 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    /// `p_value > level`.
    pub accepted: bool,
    pub level: f64,
    /// The null approximation was unusable; the outcome is a conservative accept.
    pub degenerate: bool,
}

impl TestOutcome {
    fn new(statistic: f64, p_value: f64, level: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            statistic,
            p_value,
            accepted: p_value > level,
            level,
            degenerate: false,
        }
    }

    fn degenerate(statistic: f64, level: f64) -> Self {
        Self {
            degenerate: true,
            ..Self::new(statistic, 1.0, level)
        }
    }
}

/// Residuals reordered so that each task occupies a contiguous range.
///
/// Every quantity computed below is a sum over rows or row pairs, so the
/// reordering does not change it.
struct Grouped {
    r: Vec<f64>,
    block: Vec<usize>,
    /// `starts[b]..starts[b + 1]` are the rows of block `b`.
    starts: Vec<usize>,
}

impl Grouped {
    fn new(sample: &ResidualSample) -> Self {
        let mut order: Vec<usize> = (0..sample.len()).collect();
        order.sort_by_key(|&i| sample.task_labels[i]);
        let mut block = Vec::with_capacity(order.len());
        let mut starts = vec![0];
        for (pos, &i) in order.iter().enumerate() {
            if pos > 0 && sample.task_labels[i] != sample.task_labels[order[pos - 1]] {
                starts.push(pos);
            }
            block.push(starts.len() - 1);
        }
        starts.push(order.len());
        Self {
            r: order.iter().map(|&i| sample.residuals[i]).collect(),
            block,
            starts,
        }
    }

    fn n(&self) -> usize {
        self.r.len()
    }

    fn count(&self) -> usize {
        self.starts.len() - 1
    }

    fn size(&self, b: usize) -> usize {
        self.starts[b + 1] - self.starts[b]
    }
}

fn check_sample(sample: &ResidualSample) -> Result<Grouped> {
    if sample.residuals.len() != sample.task_labels.len() {
        return Err(Error::DimensionMismatch {
            task_id: 0,
            detail: format!(
                "{} residuals with {} task labels",
                sample.residuals.len(),
                sample.task_labels.len()
            ),
        });
    }
    let n = sample.len();
    if n < 4 {
        return Err(Error::TooFewSamples { have: n, need: 4 });
    }
    let grouped = Grouped::new(sample);
    if grouped.count() < 2 {
        return Err(Error::SingleTask);
    }
    Ok(grouped)
}

/// Median of the positive pairwise distances, on a seeded subsample when the
/// sample is large. `None` when all residuals coincide.
///
/// For an even count of distances this is the upper median. The order
/// statistic is found by bisection on the bit pattern of the distance,
/// counting pairs below a threshold with two pointers over sorted points.
fn median_distance(residuals: &[f64], seed: u64) -> Option<f64> {
    let mut points: Vec<f64> = if residuals.len() > MEDIAN_SUBSAMPLE {
        let mut r = rng::stream(seed, &[rng::tag::MEDIAN, residuals.len() as u64]);
        let mut picked = index::sample(&mut r, residuals.len(), MEDIAN_SUBSAMPLE).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| residuals[i]).collect()
    } else {
        residuals.to_vec()
    };
    points.sort_unstable_by(f64::total_cmp);
    let n = points.len();
    // pairs i < j with points[j] - points[i] <= v
    let count_le = |v: f64| -> usize {
        let mut total = 0;
        let mut j = 0;
        for i in 0..n {
            j = j.max(i + 1);
            while j < n && points[j] - points[i] <= v {
                j += 1;
            }
            total += j - i - 1;
        }
        total
    };
    let zeros = count_le(0.0);
    let positive = n * n.saturating_sub(1) / 2 - zeros;
    if positive == 0 {
        return None;
    }
    // the (positive / 2)-th smallest positive distance, 0-based
    let target = zeros + positive / 2 + 1;
    let (mut lo, mut hi) = (0u64, (points[n - 1] - points[0]).to_bits());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if count_le(f64::from_bits(mid)) >= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Some(f64::from_bits(lo))
}

fn bandwidth(sample: &ResidualSample, cfg: &KernelConfig) -> Option<f64> {
    match cfg.bandwidth {
        Bandwidth::Fixed(h) => Some(h),
        Bandwidth::MedianHeuristic => {
            median_distance(&sample.residuals, cfg.seed).map(|m| m / std::f64::consts::SQRT_2)
        }
    }
}

/// `exp(x)` for `x <= 0`, branch free so that kernel rows vectorize.
///
/// Range reduction `x = k ln2 + r` with `|r| <= ln2 / 2`, a degree-13 Taylor
/// polynomial for `exp(r)`, and `2^k` assembled from its exponent bits.
/// Arguments below `-700` return 0.
#[inline(always)]
fn exp_nonpositive(x: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // 1.5 * 2^52: adding it rounds to an integer held in the low mantissa bits
    const SHIFTER: f64 = 6_755_399_441_055_744.0;
    let xc = if x < -700.0 { -700.0 } else { x };
    let t = xc * std::f64::consts::LOG2_E + SHIFTER;
    let k = t - SHIFTER;
    let r = (xc - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    let scale = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
    let v = p * scale;
    if x < -700.0 {
        0.0
    } else {
        v
    }
}

/// Upper-triangle entries cached by [`Kernel`]; larger samples recompute rows.
const KERNEL_CACHE_LIMIT: usize = 1 << 24;

thread_local! {
    /// Reused across tests on the same thread to avoid fresh page faults.
    static KERNEL_BUFFER: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

#[inline(always)]
fn fill_row(r: &[f64], i: usize, scale: f64, out: &mut [f64]) {
    let ri = r[i];
    for (o, rj) in out.iter_mut().zip(&r[i + 1..]) {
        let d = ri - rj;
        *o = exp_nonpositive(scale * d * d);
    }
}

#[inline(always)]
fn fill_upper_generic(r: &[f64], scale: f64, out: &mut [f64]) {
    let n = r.len();
    let mut off = 0;
    for i in 0..n {
        let len = n - i - 1;
        fill_row(r, i, scale, &mut out[off..off + len]);
        off += len;
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
fn fill_upper_avx2(r: &[f64], scale: f64, out: &mut [f64]) {
    fill_upper_generic(r, scale, out);
}

/// Packed upper triangle of the kernel matrix, row by row. Wider vectors
/// are used when available; the arithmetic, and so the result, is the same.
fn fill_upper(r: &[f64], scale: f64, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked just above.
        unsafe { fill_upper_avx2(r, scale, out) };
        return;
    }
    fill_upper_generic(r, scale, out);
}

/// Off-diagonal Gaussian kernel rows `K_ij`, `j > i`.
struct Kernel<'a> {
    r: &'a [f64],
    scale: f64,
    cache: Option<Vec<f64>>,
}

impl<'a> Kernel<'a> {
    fn new(r: &'a [f64], h: f64) -> Self {
        let n = r.len();
        let mut k = Self {
            r,
            scale: -0.5 / (h * h),
            cache: None,
        };
        let entries = n * n.saturating_sub(1) / 2;
        if entries <= KERNEL_CACHE_LIMIT {
            let mut cache = KERNEL_BUFFER.with(|b| std::mem::take(&mut *b.borrow_mut()));
            cache.resize(entries, 0.0);
            fill_upper(r, k.scale, &mut cache);
            k.cache = Some(cache);
        }
        k
    }

    fn offset(&self, i: usize) -> usize {
        let n = self.r.len();
        i * (2 * n - i - 1) / 2
    }

    fn fill(&self, i: usize, out: &mut [f64]) {
        fill_row(self.r, i, self.scale, out);
    }

    /// `K_ij` for `j = i+1..n`.
    fn row<'b>(&'b self, i: usize, buf: &'b mut Vec<f64>) -> &'b [f64] {
        let len = self.r.len() - i - 1;
        match &self.cache {
            Some(c) => {
                let off = self.offset(i);
                &c[off..off + len]
            }
            None => {
                buf.resize(len, 0.0);
                self.fill(i, buf);
                buf
            }
        }
    }
}

impl Drop for Kernel<'_> {
    fn drop(&mut self) {
        if let Some(cache) = self.cache.take() {
            KERNEL_BUFFER.with(|b| *b.borrow_mut() = cache);
        }
    }
}

const LANES: usize = 4;

/// `sum_k f(x_k) w_k` with independent partial sums, so the loop vectorizes.
#[inline(always)]
fn lane_sum(xs: &[f64], w: Option<&[f64]>, f: impl Fn(f64) -> f64) -> f64 {
    let mut acc = [0.0; LANES];
    let mut tail = 0.0;
    match w {
        Some(w) => {
            let (xc, wc) = (xs.chunks_exact(LANES), w.chunks_exact(LANES));
            for (&x, &v) in xc.remainder().iter().zip(wc.remainder()) {
                tail += f(x) * v;
            }
            for (x, v) in xc.zip(wc) {
                for l in 0..LANES {
                    acc[l] += f(x[l]) * v[l];
                }
            }
        }
        None => {
            let xc = xs.chunks_exact(LANES);
            tail = xc.remainder().iter().map(|&x| f(x)).sum();
            for x in xc {
                for l in 0..LANES {
                    acc[l] += f(x[l]);
                }
            }
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Block sums of kernel rows: for every row `i` and block `b`, returns
/// `t[b][i] = sum_{j in b} K_ij` and `q[b][i] = sum_{j in b} K_ij^2`
/// (the diagonal has `K_ii = 1`).
fn first_moments(g: &Grouped, kernel: &Kernel) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = g.n();
    let nb = g.count();
    let mut t = vec![vec![0.0; n]; nb];
    let mut q = vec![vec![0.0; n]; nb];
    let mut buf = Vec::new();
    for i in 0..n {
        let bi = g.block[i];
        let row = kernel.row(i, &mut buf);
        t[bi][i] += 1.0;
        q[bi][i] += 1.0;
        // row i against later rows, which lie in blocks bi..nb
        for b in bi..nb {
            let lo = g.starts[b].max(i + 1);
            let hi = g.starts[b + 1];
            if lo < hi {
                let seg = &row[lo - i - 1..hi - i - 1];
                t[b][i] += lane_sum(seg, None, |k| k);
                q[b][i] += lane_sum(seg, None, |k| k * k);
            }
        }
        // the same pairs seen from the later rows
        for ((tj, qj), &k) in t[bi][i + 1..].iter_mut().zip(q[bi][i + 1..].iter_mut()).zip(row) {
            *tj += k;
            *qj += k * k;
        }
    }
    (t, q)
}

/// `p[b][i] = sum_{j in b} K_ij u_j`.
fn weighted_sums(g: &Grouped, kernel: &Kernel, u: &[f64]) -> Vec<Vec<f64>> {
    let n = g.n();
    let nb = g.count();
    let mut p = vec![vec![0.0; n]; nb];
    let mut buf = Vec::new();
    for i in 0..n {
        let bi = g.block[i];
        let row = kernel.row(i, &mut buf);
        p[bi][i] += u[i];
        for b in bi..nb {
            let lo = g.starts[b].max(i + 1);
            let hi = g.starts[b + 1];
            if lo < hi {
                p[b][i] += lane_sum(&row[lo - i - 1..hi - i - 1], Some(&u[lo..hi]), |k| k);
            }
        }
        let ui = u[i];
        for (pj, &k) in p[bi][i + 1..].iter_mut().zip(row) {
            *pj += k * ui;
        }
    }
    p
}

/// Kernel moments needed by both the statistic and the null approximation.
/// Row-indexed vectors are in the grouped order.
struct KernelMoments {
    n: usize,
    /// `sum_ij K_ij Lc_ij = n^2 HSIC_b`.
    trace: f64,
    /// Row sums of `K`.
    row_sums: Vec<f64>,
    /// `t[b][i] = sum_{j in b} K_ij`.
    t: Vec<Vec<f64>>,
    /// `q[b][i] = sum_{j in b} K_ij^2`.
    q: Vec<Vec<f64>>,
    /// `Lc` on block pairs.
    lc: Vec<Vec<f64>>,
}

fn kernel_moments(g: &Grouped, kernel: &Kernel) -> KernelMoments {
    let n = g.n();
    let nb = g.count();
    let nf = n as f64;
    let (t, q) = first_moments(g, kernel);
    let a: Vec<f64> = (0..nb).map(|b| g.size(b) as f64 / nf).collect();
    let c: f64 = a.iter().map(|x| x * x).sum();
    let lc: Vec<Vec<f64>> = (0..nb)
        .map(|b| {
            (0..nb)
                .map(|b2| f64::from(u8::from(b == b2)) - a[b] - a[b2] + c)
                .collect()
        })
        .collect();
    let row_sums: Vec<f64> = (0..n).map(|i| t.iter().map(|tb| tb[i]).sum()).collect();
    let trace = (0..n)
        .map(|i| {
            let bi = g.block[i];
            t[bi][i] - 2.0 * a[bi] * row_sums[i] + c * row_sums[i]
        })
        .sum();
    KernelMoments {
        n,
        trace,
        row_sums,
        t,
        q,
        lc,
    }
}

/// `sum_{i != j} (Kc_ij Lc_ij)^2`, with `Kc = HKH`, `Lc = HLH`.
fn centered_product_square_sum(g: &Grouped, kernel: &Kernel, m: &KernelMoments) -> f64 {
    let n = m.n;
    let nf = n as f64;
    let nb = g.count();
    let grand = m.row_sums.iter().sum::<f64>() / (nf * nf);
    // Kc_ij = K_ij - u_i - u_j
    let u: Vec<f64> = m.row_sums.iter().map(|r| r / nf - 0.5 * grand).collect();
    let mut u1 = vec![0.0; nb];
    let mut u2 = vec![0.0; nb];
    for (i, &ui) in u.iter().enumerate() {
        u1[g.block[i]] += ui;
        u2[g.block[i]] += ui * ui;
    }
    // P[b][i] = sum_{j in b} K_ij u_j
    let pw = weighted_sums(g, kernel, &u);
    let mut total = 0.0;
    for i in 0..n {
        let bi = g.block[i];
        let ui = u[i];
        for b in 0..nb {
            let l2 = m.lc[bi][b] * m.lc[bi][b];
            let kc2 = m.q[b][i] - 2.0 * ui * m.t[b][i] - 2.0 * pw[b][i]
                + g.size(b) as f64 * ui * ui
                + 2.0 * ui * u1[b]
                + u2[b];
            total += l2 * kc2;
        }
        let diag = (1.0 - 2.0 * ui) * m.lc[bi][bi];
        total -= diag * diag;
    }
    total
}

/// Biased HSIC estimate `(1/n^2) tr(K H L H)` between residuals and task labels.
pub fn hsic_statistic(sample: &ResidualSample, cfg: &KernelConfig) -> Result<f64> {
    let g = check_sample(sample)?;
    let Some(h) = bandwidth(sample, cfg) else {
        return Ok(0.0);
    };
    let m = kernel_moments(&g, &Kernel::new(&g.r, h));
    let nf = m.n as f64;
    Ok(m.trace / (nf * nf))
}

/// D-sample test of residual/task independence at `level`.
///
/// The test statistic reported is `n * HSIC_b`; the p-value is the upper tail
/// of the moment-matched Gamma null.
pub fn hsic_d_sample_test(
    sample: &ResidualSample,
    cfg: &KernelConfig,
    level: f64,
) -> Result<TestOutcome> {
    check_level(level)?;
    let g = check_sample(sample)?;
    let Some(h) = bandwidth(sample, cfg) else {
        return Ok(TestOutcome::new(0.0, 1.0, level));
    };
    let kernel = Kernel::new(&g.r, h);
    let m = kernel_moments(&g, &kernel);
    let n = m.n;
    let nf = n as f64;
    let statistic = (m.trace / nf).max(0.0);

    let pairs = nf * (nf - 1.0);
    let mu_x = (m.row_sums.iter().sum::<f64>() - nf) / pairs;
    let mu_y = ((0..g.count()).map(|b| (g.size(b) * g.size(b)) as f64).sum::<f64>() - nf) / pairs;
    let mean = (1.0 + mu_x * mu_y - mu_x - mu_y) / nf;

    let sq = centered_product_square_sum(&g, &kernel, &m) / 36.0;
    let var = 72.0 * (nf - 4.0) * (nf - 5.0) / (nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0))
        * sq
        / pairs;
    if !(var > 0.0 && mean > 0.0 && var.is_finite()) {
        return Ok(TestOutcome::degenerate(statistic, level));
    }
    let shape = mean * mean / var;
    let scale = nf * var / mean;
    let gamma = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| Error::InvalidConfig(format!("gamma null: {e}")))?;
    Ok(TestOutcome::new(statistic, gamma.sf(statistic), level))
}

/// Levene's test for equal residual variance across tasks, centered at group means.
pub fn levene_test(sample: &ResidualSample, level: f64) -> Result<TestOutcome> {
    check_level(level)?;
    let groups = sample.groups();
    if groups.len() < 2 {
        return Err(Error::SingleTask);
    }
    if let Some(small) = groups.iter().map(|(_, g)| g.len()).min().filter(|&m| m < 2) {
        return Err(Error::TooFewSamples { have: small, need: 2 });
    }
    let z: Vec<Vec<f64>> = groups
        .iter()
        .map(|(_, g)| {
            let mean = g.iter().sum::<f64>() / g.len() as f64;
            g.iter().map(|r| (r - mean).abs()).collect()
        })
        .collect();
    let k = z.len() as f64;
    let n_total: usize = z.iter().map(Vec::len).sum();
    let nf = n_total as f64;
    let group_means: Vec<f64> = z.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let grand = z.iter().flatten().sum::<f64>() / nf;
    let between: f64 = z
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let within: f64 = z
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let (d1, d2) = (k - 1.0, nf - k);
    if within <= 0.0 {
        if between <= 0.0 {
            return Ok(TestOutcome::new(0.0, 1.0, level));
        }
        return Ok(TestOutcome::new(f64::INFINITY, 0.0, level));
    }
    let w = d2 / d1 * between / within;
    let f = FisherSnedecor::new(d1, d2).map_err(|e| Error::InvalidConfig(format!("F null: {e}")))?;
    Ok(TestOutcome::new(w, f.sf(w), level))
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("level {level} not in (0,1)")))
    }
}
