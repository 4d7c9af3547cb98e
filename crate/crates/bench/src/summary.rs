//! Replicate aggregation with Student-t confidence intervals.

use std::io;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::run::{RunRecord, RunStatus};

/// ESS is reported per this many sequential samples.
pub const ESS_UNIT: f64 = 1000.0;

/// Mean and 95% half-width `t_{0.975, n-1} * sd / sqrt(n)`, with `sd` the
/// unbiased sample standard deviation. No interval for fewer than two values.
pub fn mean_ci(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    (mean, Some(t * (var / n as f64).sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub target: String,
    pub param: f64,
    pub sampler: String,
    /// Successful replicates contributing to the row.
    pub replicates: usize,
    pub ess_per_1000: f64,
    pub ess_per_1000_ci: Option<f64>,
    pub ess_per_second: f64,
    pub ess_per_second_ci: Option<f64>,
}

/// One row per (target, parameter, sampler) in first-seen order, over the
/// successful replicates. ESS is rescaled by `1000 / k`.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&str, f64, &str)> = Vec::new();
    for r in records {
        let key = (r.target.as_str(), r.param, r.sampler.as_str());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(target, param, sampler)| {
            let ok: Vec<&RunRecord> = records
                .iter()
                .filter(|r| {
                    r.target == target && r.param == param && r.sampler == sampler && r.status == RunStatus::Ok
                })
                .collect();
            let ess: Vec<f64> = ok
                .iter()
                .filter_map(|r| r.ess.map(|e| e * ESS_UNIT / r.k as f64))
                .collect();
            let eps: Vec<f64> = ok.iter().filter_map(|r| r.ess_per_second).collect();
            let (ess_mean, ess_ci) = mean_ci(&ess);
            let (eps_mean, eps_ci) = mean_ci(&eps);
            SummaryRow {
                target: target.to_string(),
                param,
                sampler: sampler.to_string(),
                replicates: ok.len(),
                ess_per_1000: ess_mean,
                ess_per_1000_ci: ess_ci,
                ess_per_second: eps_mean,
                ess_per_second_ci: eps_ci,
            }
        })
        .collect()
}

pub fn write_summary<W: io::Write>(rows: &[SummaryRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
