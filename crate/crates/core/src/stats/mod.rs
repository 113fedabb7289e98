//! Rank tests, Bonferroni correction, the Laplace trend factor and the
//! chi-square goodness-of-fit test.

mod laplace;
mod rank;

use serde::{Deserialize, Serialize};
use statrs::function::{erf, gamma};

use crate::error::{Error, Result};

pub use laplace::{laplace_factor, laplace_series, LAPLACE_THRESHOLD};
pub use rank::{
    midranks, rank_sum_exact_counts, signed_rank_exact_counts, wilcoxon_rank_sum,
    wilcoxon_rank_sum_normal, wilcoxon_signed_rank, wilcoxon_signed_rank_normal, EXACT_LIMIT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    NormalApproximation,
    ChiSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    Greater,
    Less,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    pub alternative: Alternative,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

/// Per-test significance level after a Bonferroni correction for `m` tests.
pub fn bonferroni(alpha: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::Analysis(
            "Bonferroni correction needs at least one test".into(),
        ));
    }
    Ok(alpha / m as f64)
}

/// Upper tail of the standard normal distribution.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erf::erfc(z / std::f64::consts::SQRT_2)
}

/// Upper tail `P(X >= x)` of a chi-square variable with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma::gamma_ur(df / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Pearson's statistic `sum (O - E)^2 / E` with `bins - 1 - fitted_params`
/// degrees of freedom.
pub fn chi_square_gof(
    observed: &[f64],
    expected: &[f64],
    fitted_params: usize,
) -> Result<TestResult> {
    if observed.len() != expected.len() {
        return Err(Error::Analysis(format!(
            "{} observed bins against {} expected",
            observed.len(),
            expected.len()
        )));
    }
    if observed.len() < 2 {
        return Err(Error::Analysis(
            "chi-square test needs at least two bins".into(),
        ));
    }
    if let Some(e) = expected.iter().find(|e| e.is_nan() || **e <= 0.0) {
        return Err(Error::Analysis(format!(
            "expected count {e} is not positive"
        )));
    }
    let df = observed.len() as i64 - 1 - fitted_params as i64;
    if df <= 0 {
        return Err(Error::Analysis("insufficient degrees of freedom".into()));
    }
    let statistic: f64 = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    Ok(TestResult {
        statistic,
        p_value: chi2_sf(statistic, df as f64),
        method: Method::ChiSquare,
        alternative: Alternative::Greater,
        n: observed.len(),
        m: None,
    })
}

/// Combines the two one-sided tail probabilities into the requested p-value.
pub(crate) fn tail_p(alternative: Alternative, upper: f64, lower: f64) -> f64 {
    let p = match alternative {
        Alternative::Greater => upper,
        Alternative::Less => lower,
        Alternative::TwoSided => 2.0 * upper.min(lower),
    };
    p.clamp(0.0, 1.0)
}
