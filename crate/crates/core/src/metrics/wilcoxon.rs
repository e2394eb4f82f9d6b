//! Two-sided Wilcoxon signed-rank test for paired samples: exact
//! sign-flip enumeration for small n, normal approximation with tie and
//! continuity corrections otherwise.

use crate::error::{Error, Result};
use statrs::distribution::{ContinuousCDF, Normal};

/// Largest n for which the exact 2^n enumeration is used.
pub const EXACT_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WilcoxonMethod {
    Exact,
    NormalApproximation,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences (W+).
    pub w_statistic: f64,
    pub p_value: f64,
    /// Pairs remaining after zero differences are dropped.
    pub n_used: usize,
    pub method: WilcoxonMethod,
}

/// Average ranks of `|values|` with ties sharing their mean rank; returns
/// the ranks aligned with `values` and the tie group sizes.
fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].abs().partial_cmp(&values[b].abs()).unwrap());
    let mut ranks = vec![0.0; n];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]].abs() == values[order[i]].abs() {
            j += 1;
        }
        // positions i..=j share the average of ranks i+1..=j+1
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "paired samples must have equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "need at least 5 nonzero differences, got {n}"
        )));
    }
    let (ranks, ties) = average_ranks(&diffs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    let (p_value, method) = if n <= EXACT_LIMIT {
        (exact_two_sided_p(&ranks, w_plus), WilcoxonMethod::Exact)
    } else {
        (
            normal_two_sided_p(n, &ties, w_plus),
            WilcoxonMethod::NormalApproximation,
        )
    };
    Ok(WilcoxonResult {
        w_statistic: w_plus,
        p_value,
        n_used: n,
        method,
    })
}

/// Exact two-sided p: the fraction of the 2^n sign assignments whose rank
/// sum deviates from the mean at least as much as the observed one.
fn exact_two_sided_p(ranks: &[f64], w_obs: f64) -> f64 {
    let n = ranks.len();
    let total: f64 = ranks.iter().sum();
    let mu = total / 2.0;
    let observed_dev = (w_obs - mu).abs();
    let mut count = 0u64;
    // Ranks are multiples of 0.5, so sums are exact in f64; the epsilon only
    // guards against the subtraction ordering.
    let eps = 1e-9;
    for bits in 0u64..(1u64 << n) {
        let mut s = 0.0;
        for (i, r) in ranks.iter().enumerate() {
            if bits >> i & 1 == 1 {
                s += r;
            }
        }
        if (s - mu).abs() >= observed_dev - eps {
            count += 1;
        }
    }
    count as f64 / (1u64 << n) as f64
}

/// Normal approximation with tie correction and a 0.5 continuity correction
/// toward the mean.
fn normal_two_sided_p(n: usize, ties: &[usize], w_plus: f64) -> f64 {
    let nf = n as f64;
    let mu = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum::<f64>()
        / 48.0;
    let sigma2 = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    if sigma2 <= 0.0 {
        return 1.0;
    }
    let dev = (w_plus - mu).abs();
    let z = (dev - 0.5).max(0.0) / sigma2.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}
