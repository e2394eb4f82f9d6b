//! Per-metric summaries: mean, population SD, and the robustness
//! percentiles (5th for Dice, 95th for the error metrics).

use super::MetricSet;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub sd: f64,
    pub p05: f64,
    pub p95: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

/// Summaries for the four metrics; `None` where every case was undefined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub dice: Option<MetricSummary>,
    pub rve: Option<MetricSummary>,
    pub msd: Option<MetricSummary>,
    pub hd: Option<MetricSummary>,
}

impl SummaryStats {
    pub fn from_cases(cases: &[MetricSet]) -> Self {
        let pick = |f: fn(&MetricSet) -> Option<f64>| {
            let vals: Vec<Option<f64>> = cases.iter().map(f).collect();
            summarize(&vals).ok()
        };
        SummaryStats {
            dice: pick(|m| m.dice),
            rve: pick(|m| m.rve),
            msd: pick(|m| m.msd),
            hd: pick(|m| m.hd),
        }
    }
}

/// Linear-interpolated percentile at rank `q*(n-1)+1` over sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Summarize one metric over a case list, excluding undefined entries with
/// a recorded count.
pub fn summarize(values: &[Option<f64>]) -> Result<MetricSummary> {
    let defined: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    let n_excluded = values.len() - defined.len();
    if defined.is_empty() {
        return Err(Error::UndefinedMetric(
            "no defined cases remain after exclusion".to_string(),
        ));
    }
    let n = defined.len() as f64;
    let mean = defined.iter().sum::<f64>() / n;
    let var = defined.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = defined.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(MetricSummary {
        mean,
        sd: var.sqrt(),
        p05: percentile(&sorted, 0.05),
        p95: percentile(&sorted, 0.95),
        n_used: defined.len(),
        n_excluded,
    })
}
