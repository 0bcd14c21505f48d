use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::MetricError;

/// Largest pooled sample size for which [`mann_whitney_u`] enumerates the
/// exact permutation distribution.
pub const EXACT_MAX_TOTAL: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// Pairs where the `a` value exceeds the `b` value, ties counting ½.
    pub u_a: f64,
    /// Same count for `b`; `u_a + u_b = n_a * n_b`.
    pub u_b: f64,
    pub n_a: usize,
    pub n_b: usize,
    /// Two-sided.
    pub p_value: f64,
    pub method: PValueMethod,
}

struct Ranked {
    /// Twice the midrank of each pooled value; always an integer.
    doubled: Vec<u64>,
    /// Sizes of tie groups.
    ties: Vec<usize>,
}

fn check(sample: &[f64]) -> Result<(), MetricError> {
    if sample.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

fn rank_pooled(pooled: &[f64]) -> Ranked {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|x, y| pooled[*x].total_cmp(&pooled[*y]));
    let mut doubled = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        // Ranks start+1..=end; twice their mean is start + 1 + end.
        let midrank2 = (start + 1 + end) as u64;
        for idx in &order[start..end] {
            doubled[*idx] = midrank2;
        }
        ties.push(end - start);
        start = end;
    }
    Ranked { doubled, ties }
}

fn pooled(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

/// `(U_a, U_b)` from midranks.
pub fn u_statistic(a: &[f64], b: &[f64]) -> Result<(f64, f64), MetricError> {
    check(a)?;
    check(b)?;
    let ranked = rank_pooled(&pooled(a, b));
    Ok(u_from_ranks(&ranked, a.len(), b.len()))
}

fn u_from_ranks(ranked: &Ranked, n_a: usize, n_b: usize) -> (f64, f64) {
    let s2: u64 = ranked.doubled[..n_a].iter().sum();
    let u_a = s2 as f64 / 2.0 - (n_a * (n_a + 1)) as f64 / 2.0;
    (u_a, (n_a * n_b) as f64 - u_a)
}

/// U test with the p-value from the normal approximation (tie-corrected
/// variance, continuity correction).
pub fn mann_whitney_u_normal(a: &[f64], b: &[f64]) -> Result<MannWhitney, MetricError> {
    check(a)?;
    check(b)?;
    let ranked = rank_pooled(&pooled(a, b));
    let (n_a, n_b) = (a.len(), b.len());
    let (u_a, u_b) = u_from_ranks(&ranked, n_a, n_b);

    let n = (n_a + n_b) as f64;
    let prod = (n_a * n_b) as f64;
    let tie_term: f64 = ranked.ties.iter().map(|t| { let t = *t as f64; t * t * t - t }).sum();
    let variance = if n > 1.0 { prod / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0))) } else { 0.0 };
    let p_value = if variance <= 0.0 {
        1.0
    } else {
        let deviation = (u_a - prod / 2.0).abs() - 0.5;
        let z = deviation.max(0.0) / libm::sqrt(variance);
        libm::erfc(z / core::f64::consts::SQRT_2).min(1.0)
    };
    Ok(MannWhitney { u_a, u_b, n_a, n_b, p_value, method: PValueMethod::NormalApprox })
}

/// U test with the p-value from the exact permutation distribution of the
/// (midranked) rank sum. Handles ties; cost grows as `n * n_a * n * n_a`.
pub fn mann_whitney_u_exact(a: &[f64], b: &[f64]) -> Result<MannWhitney, MetricError> {
    check(a)?;
    check(b)?;
    let ranked = rank_pooled(&pooled(a, b));
    let (n_a, n_b) = (a.len(), b.len());
    let (u_a, u_b) = u_from_ranks(&ranked, n_a, n_b);

    // ways[k][s]: subsets of size k whose doubled ranks sum to s.
    let max_sum: usize = ranked.doubled.iter().map(|r| *r as usize).sum();
    let mut ways = vec![vec![0.0f64; max_sum + 1]; n_a + 1];
    ways[0][0] = 1.0;
    for r in &ranked.doubled {
        let r = *r as usize;
        for k in (1..=n_a).rev() {
            let (lower, upper) = ways.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (r..=max_sum).rev() {
                if prev[s - r] != 0.0 {
                    cur[s] += prev[s - r];
                }
            }
        }
    }

    let observed: i64 = ranked.doubled[..n_a].iter().sum::<u64>() as i64;
    let mean2 = (n_a * (n_a + n_b + 1)) as i64;
    let observed_dev = (observed - mean2).abs();
    let total: f64 = ways[n_a].iter().sum();
    let extreme: f64 = ways[n_a]
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as i64 - mean2).abs() >= observed_dev)
        .map(|(_, w)| *w)
        .sum();
    let p_value = (extreme / total).min(1.0);
    Ok(MannWhitney { u_a, u_b, n_a, n_b, p_value, method: PValueMethod::Exact })
}

/// Exact p-value up to [`EXACT_MAX_TOTAL`] pooled values, normal
/// approximation above.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, MetricError> {
    if a.len() + b.len() > EXACT_MAX_TOTAL {
        mann_whitney_u_normal(a, b)
    } else {
        mann_whitney_u_exact(a, b)
    }
}

/// Rank-biserial effect size `|1 - 2U / (n_a * n_b)|`.
pub fn rank_biserial_r(u: f64, n_a: usize, n_b: usize) -> f64 {
    libm::fabs(1.0 - 2.0 * u / (n_a * n_b) as f64)
}

/// One row of a two-group score comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub dimension: String,
    pub group_a_name: String,
    pub group_b_name: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// U for group a.
    pub u_statistic: f64,
    /// U for group b.
    pub u_statistic_b: f64,
    pub p_value: f64,
    pub effect_size_r: f64,
}

impl GroupComparison {
    pub fn compute(
        dimension: &str,
        (group_a_name, a): (&str, &[f64]),
        (group_b_name, b): (&str, &[f64]),
    ) -> Result<Self, MetricError> {
        let test = mann_whitney_u(a, b)?;
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        Ok(Self {
            dimension: dimension.into(),
            group_a_name: group_a_name.into(),
            group_b_name: group_b_name.into(),
            n_a: test.n_a,
            n_b: test.n_b,
            mean_a: mean(a),
            mean_b: mean(b),
            u_statistic: test.u_a,
            u_statistic_b: test.u_b,
            p_value: test.p_value,
            effect_size_r: rank_biserial_r(test.u_a, test.n_a, test.n_b),
        })
    }
}
