use super::{normal_sf, tail_p, Alternative, Method, TestResult};
use crate::error::{Error, Result};

/// Exact null distributions are enumerated up to this many observations.
pub const EXACT_LIMIT: usize = 12;

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::Analysis(format!(
            "{what} contains non-finite value {v}"
        ))),
        None => Ok(()),
    }
}

/// Ranks doubled so that midranks stay integral, plus the sizes of tie groups.
fn doubled_midranks(values: &[f64]) -> (Vec<u64>, Vec<u64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share rank ((i+1) + (j+1)) / 2
        let doubled = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        ties.push((j - i + 1) as u64);
        i = j + 1;
    }
    (ranks, ties)
}

/// Midranks (1-based, ties averaged).
pub fn midranks(values: &[f64]) -> Vec<f64> {
    doubled_midranks(values)
        .0
        .into_iter()
        .map(|r| r as f64 / 2.0)
        .collect()
}

fn tie_sum(ties: &[u64]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

/// Number of sign assignments giving each doubled positive-rank sum.
pub fn signed_rank_exact_counts(doubled_ranks: &[u64]) -> Vec<u64> {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

fn tails(counts: &[u64], at: usize) -> (f64, f64) {
    let total: u64 = counts.iter().sum();
    let upper: u64 = counts[at..].iter().sum();
    let lower: u64 = counts[..=at].iter().sum();
    (upper as f64 / total as f64, lower as f64 / total as f64)
}

/// One-sample Wilcoxon signed-rank test of `median(values) = mu0`.
///
/// Differences equal to zero are dropped and tied magnitudes get midranks.
/// The statistic is the positive-rank sum `W+`. Up to [`EXACT_LIMIT`]
/// non-zero differences the null distribution is enumerated; beyond that a
/// normal approximation with continuity and tie corrections is used.
pub fn wilcoxon_signed_rank(
    values: &[f64],
    mu0: f64,
    alternative: Alternative,
) -> Result<TestResult> {
    signed_rank(values, mu0, alternative, None)
}

/// [`wilcoxon_signed_rank`] forced onto the normal approximation.
pub fn wilcoxon_signed_rank_normal(
    values: &[f64],
    mu0: f64,
    alternative: Alternative,
) -> Result<TestResult> {
    signed_rank(values, mu0, alternative, Some(Method::NormalApproximation))
}

fn signed_rank(
    values: &[f64],
    mu0: f64,
    alternative: Alternative,
    force: Option<Method>,
) -> Result<TestResult> {
    check_finite(values, "sample")?;
    let diffs: Vec<f64> = values
        .iter()
        .map(|v| v - mu0)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(Error::Degenerate(
            "every difference from the hypothesized median is zero".into(),
        ));
    }
    let n = diffs.len();
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = doubled_midranks(&magnitudes);
    let w2: u64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let statistic = w2 as f64 / 2.0;
    let exact = force.map_or(n <= EXACT_LIMIT, |f| f == Method::Exact);
    let (method, upper, lower) = if exact {
        let (u, l) = tails(&signed_rank_exact_counts(&ranks), w2 as usize);
        (Method::Exact, u, l)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum(&ties) / 48.0;
        let (u, l) = normal_tails(statistic, mean, var);
        (Method::NormalApproximation, u, l)
    };
    Ok(TestResult {
        statistic,
        p_value: tail_p(alternative, upper, lower),
        method,
        alternative,
        n,
        m: None,
    })
}

fn normal_tails(statistic: f64, mean: f64, var: f64) -> (f64, f64) {
    if var <= 0.0 {
        return (1.0, 1.0);
    }
    let sd = var.sqrt();
    let upper = normal_sf((statistic - mean - 0.5) / sd);
    let lower = normal_sf(-(statistic - mean + 0.5) / sd);
    (upper, lower)
}

/// Number of size-`n` subsets of `doubled_ranks` giving each doubled rank sum.
pub fn rank_sum_exact_counts(doubled_ranks: &[u64], n: usize) -> Vec<u64> {
    let total: u64 = doubled_ranks.iter().sum();
    let width = total as usize + 1;
    // table[k][s]: subsets of size k with doubled sum s
    let mut table = vec![vec![0u64; width]; n + 1];
    table[0][0] = 1;
    for &r in doubled_ranks {
        let r = r as usize;
        for k in (1..=n).rev() {
            for s in (r..width).rev() {
                let add = table[k - 1][s - r];
                table[k][s] += add;
            }
        }
    }
    table.swap_remove(n)
}

/// Two-sample Wilcoxon rank-sum test; the statistic is the rank sum of `x`.
///
/// `Greater` tests whether `x` tends to exceed `y`. Exact when
/// `n + m <= EXACT_LIMIT`, otherwise normal approximation with continuity
/// and tie corrections.
pub fn wilcoxon_rank_sum(x: &[f64], y: &[f64], alternative: Alternative) -> Result<TestResult> {
    rank_sum(x, y, alternative, None)
}

/// [`wilcoxon_rank_sum`] forced onto the normal approximation.
pub fn wilcoxon_rank_sum_normal(
    x: &[f64],
    y: &[f64],
    alternative: Alternative,
) -> Result<TestResult> {
    rank_sum(x, y, alternative, Some(Method::NormalApproximation))
}

fn rank_sum(
    x: &[f64],
    y: &[f64],
    alternative: Alternative,
    force: Option<Method>,
) -> Result<TestResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Analysis(
            "rank-sum test needs two non-empty samples".into(),
        ));
    }
    check_finite(x, "first sample")?;
    check_finite(y, "second sample")?;
    let (n, m) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = doubled_midranks(&pooled);
    let w2: u64 = ranks[..n].iter().sum();
    let statistic = w2 as f64 / 2.0;
    let exact = force.map_or(n + m <= EXACT_LIMIT, |f| f == Method::Exact);
    let (method, upper, lower) = if exact {
        let (u, l) = tails(&rank_sum_exact_counts(&ranks, n), w2 as usize);
        (Method::Exact, u, l)
    } else {
        let (nf, mf) = (n as f64, m as f64);
        let big = nf + mf;
        let mean = nf * (big + 1.0) / 2.0;
        let var = nf * mf / 12.0 * ((big + 1.0) - tie_sum(&ties) / (big * (big - 1.0)));
        let (u, l) = normal_tails(statistic, mean, var);
        (Method::NormalApproximation, u, l)
    };
    Ok(TestResult {
        statistic,
        p_value: tail_p(alternative, upper, lower),
        method,
        alternative,
        n,
        m: Some(m),
    })
}
