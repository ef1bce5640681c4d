//! Experiment records, their summary, and the two output files.

use std::collections::BTreeMap;

use invariant_transfer::SubsetMask;
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// Test error of one estimator in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub setting: String,
    pub rep: usize,
    pub estimator: String,
    pub test_mse: f64,
    /// Natural logarithm of `test_mse`.
    pub log_test_mse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chosen: Option<SubsetMask>,
}

/// A repetition, or one estimator within it, that did not complete.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub setting: String,
    pub rep: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub setting: String,
    pub estimator: String,
    pub n: usize,
    pub mean_mse: f64,
    pub mean_log_mse: f64,
    /// Sample standard deviation; 0 for a single record.
    pub std_log_mse: f64,
    pub median_log_mse: f64,
    pub baseline: String,
    /// Fraction of shared repetitions with strictly smaller error than the baseline.
    pub win_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub reps: usize,
    pub log_base: &'static str,
    /// Fully resolved preset options.
    pub options: serde_json::Value,
    pub records: Vec<Record>,
    pub failures: Vec<Failure>,
    pub summary: Vec<SummaryRow>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Summary statistics per (setting, estimator), in first-appearance order.
pub fn summarize(records: &[Record], baseline: &str) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<&Record>> = BTreeMap::new();
    for r in records {
        let key = (r.setting.clone(), r.estimator.clone());
        if !groups.contains_key(&key) {
            keys.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    keys.into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let n = rs.len();
            let nf = n as f64;
            let mean_mse = rs.iter().map(|r| r.test_mse).sum::<f64>() / nf;
            let mean_log = rs.iter().map(|r| r.log_test_mse).sum::<f64>() / nf;
            let std_log = if n > 1 {
                (rs.iter().map(|r| (r.log_test_mse - mean_log).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
            } else {
                0.0
            };
            let mut logs: Vec<f64> = rs.iter().map(|r| r.log_test_mse).collect();
            logs.sort_by(f64::total_cmp);
            let base: BTreeMap<usize, f64> = groups
                .get(&(key.0.clone(), baseline.to_string()))
                .map(|b| b.iter().map(|r| (r.rep, r.test_mse)).collect())
                .unwrap_or_default();
            let shared: Vec<bool> = rs
                .iter()
                .filter_map(|r| base.get(&r.rep).map(|b| r.test_mse < *b))
                .collect();
            let win_fraction = (!shared.is_empty())
                .then(|| shared.iter().filter(|&&w| w).count() as f64 / shared.len() as f64);
            SummaryRow {
                setting: key.0,
                estimator: key.1,
                n,
                mean_mse,
                mean_log_mse: mean_log,
                std_log_mse: std_log,
                median_log_mse: median(&logs),
                baseline: baseline.to_string(),
                win_fraction,
            }
        })
        .collect()
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out =
        String::from("setting,estimator,n,mean_mse,mean_log_mse,std_log_mse,median_log_mse,baseline,win_fraction\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.setting,
            r.estimator,
            r.n,
            fmt(r.mean_mse),
            fmt(r.mean_log_mse),
            fmt(r.std_log_mse),
            fmt(r.median_log_mse),
            r.baseline,
            r.win_fraction.map(fmt).unwrap_or_default()
        ));
    }
    out
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
