//! The hypothesis tests, discovery trends and VDM fits run over a finished
//! verification.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::Serialize;

use vulnver::analysis::{
    affected_sets, discovery_series, metrics_table, ratio_to_f64, ErMode, FoundationalView,
    MonthlySeries, VersionMetrics,
};
use vulnver::mining::ThreadPool;
use vulnver::model::{CveRecord, VerificationResult, VersionCatalog, VersionId};
use vulnver::stats::{
    bonferroni, laplace_factor, laplace_series, wilcoxon_rank_sum, wilcoxon_signed_rank,
    Alternative, TestResult, LAPLACE_THRESHOLD,
};
use vulnver::vdm::{
    compare_quality, fit_all, model_registry, quality_curves, write_fits_csv, write_quality_csv,
    FitJob, FitRecord,
};
use vulnver::{Error, Result};

/// The two views whose trends and fits are compared.
pub const TREND_VIEWS: [FoundationalView; 2] =
    [FoundationalView::Verifiable, FoundationalView::Verified];

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Tested {
        #[serde(flatten)]
        result: TestResult,
        significant: bool,
    },
    Skipped {
        reason: String,
    },
}

impl Outcome {
    fn of(test: Result<TestResult>, alpha: f64) -> Outcome {
        match test {
            Ok(result) => Outcome::Tested {
                significant: result.p_value < alpha,
                result,
            },
            Err(e) => Outcome::Skipped {
                reason: e.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorRateTests {
    pub mu0: f64,
    pub versions: usize,
    pub er: Outcome,
    pub er_prime: Outcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct CategoryComparison {
    pub greater: &'static str,
    pub lesser: &'static str,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaxonomyTests {
    pub alpha: f64,
    pub comparisons: Vec<CategoryComparison>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ViewComparison {
    pub count: Outcome,
    pub fraction: Outcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendSummary {
    pub view: FoundationalView,
    pub version: VersionId,
    pub months: usize,
    pub events: u64,
    pub factor: Option<f64>,
    pub increasing_months: usize,
    pub decreasing_months: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub alpha: f64,
    pub horizon: Option<NaiveDate>,
    pub error_rates: ErrorRateTests,
    pub taxonomy: TaxonomyTests,
    pub foundational: ViewComparison,
    pub discovery: Outcome,
    pub trends: Vec<TrendSummary>,
}

pub struct StatsOutput {
    pub report: StatsReport,
    pub monthly_csv: Vec<u8>,
    pub laplace_csv: Vec<u8>,
    pub warnings: Vec<String>,
}

pub struct Inputs<'a> {
    pub results: &'a [VerificationResult],
    pub dataset: &'a [CveRecord],
    pub catalog: &'a VersionCatalog,
}

/// End of the discovery window: the given date or the latest publication.
pub fn horizon(dataset: &[CveRecord], given: Option<NaiveDate>) -> Option<NaiveDate> {
    given.or_else(|| dataset.iter().filter_map(|c| c.published).max())
}

fn share(count: u64, m: &VersionMetrics) -> Option<f64> {
    let den = m.n_verified + m.n_erroneous;
    (den > 0).then(|| count as f64 / den as f64)
}

/// Monthly discovery series per official version under `view`, counting the
/// CVEs that affect the version and, when `foundational_only`, the first one.
pub fn view_series(
    inputs: &Inputs<'_>,
    view: FoundationalView,
    horizon: NaiveDate,
    foundational_only: bool,
) -> Result<Vec<MonthlySeries>> {
    let sets = affected_sets(view, inputs.results, inputs.dataset)?;
    let first = inputs.catalog.first();
    Ok(inputs
        .catalog
        .official()
        .map(|entry| {
            let cves = sets
                .iter()
                .filter(|(_, s)| {
                    s.contains(&entry.version) && (!foundational_only || s.contains(first))
                })
                .map(|(c, _)| *c);
            discovery_series(entry.version.clone(), cves, entry.release_date, horizon)
        })
        .collect())
}

fn csv_error(e: std::io::Error) -> Error {
    Error::io("<csv>", e)
}

pub fn stats(
    inputs: &Inputs<'_>,
    mode: ErMode,
    mu0: f64,
    alpha: f64,
    horizon_date: Option<NaiveDate>,
) -> Result<StatsOutput> {
    let rows = metrics_table(inputs.results, inputs.dataset, inputs.catalog, mode)?;
    let mut warnings = Vec::new();

    let er: Vec<f64> = rows.iter().filter_map(|m| m.er.map(ratio_to_f64)).collect();
    let er_prime: Vec<f64> = rows
        .iter()
        .filter_map(|m| m.er_prime.map(ratio_to_f64))
        .collect();
    let error_rates = ErrorRateTests {
        mu0,
        versions: er.len(),
        er: Outcome::of(wilcoxon_signed_rank(&er, mu0, Alternative::Greater), alpha),
        er_prime: Outcome::of(
            wilcoxon_signed_rank(&er_prime, mu0, Alternative::Greater),
            alpha,
        ),
    };

    let rate = |pick: fn(&VersionMetrics) -> u64| -> Vec<f64> {
        rows.iter().filter_map(|m| share(pick(m), m)).collect()
    };
    let (p, f, b) = (
        rate(|m| m.p_error),
        rate(|m| m.f_error),
        rate(|m| m.b_error),
    );
    let corrected = bonferroni(alpha, 2)?;
    let compare =
        |greater: &'static str, x: &[f64], lesser: &'static str, y: &[f64]| CategoryComparison {
            greater,
            lesser,
            outcome: Outcome::of(wilcoxon_rank_sum(x, y, Alternative::Greater), corrected),
        };
    let taxonomy = TaxonomyTests {
        alpha: corrected,
        comparisons: vec![
            compare("P", &p, "B", &b),
            compare("F", &f, "B", &b),
            compare("P", &p, "F", &f),
        ],
    };

    let (fv_rows, _) =
        vulnver::analysis::foundational_report(inputs.results, inputs.dataset, inputs.catalog)?;
    let column = |view: FoundationalView, frac: bool| -> Vec<f64> {
        fv_rows
            .iter()
            .filter(|r| r.view == view)
            .filter_map(|r| {
                if frac {
                    r.fraction().map(ratio_to_f64)
                } else {
                    Some(r.foundational as f64)
                }
            })
            .collect()
    };
    let foundational = ViewComparison {
        count: Outcome::of(
            wilcoxon_rank_sum(
                &column(FoundationalView::Verifiable, false),
                &column(FoundationalView::Verified, false),
                Alternative::TwoSided,
            ),
            alpha,
        ),
        fraction: Outcome::of(
            wilcoxon_rank_sum(
                &column(FoundationalView::Verifiable, true),
                &column(FoundationalView::Verified, true),
                Alternative::TwoSided,
            ),
            alpha,
        ),
    };

    let horizon = horizon(inputs.dataset, horizon_date);
    let mut monthly = csv::Writer::from_writer(Vec::new());
    monthly.write_record(["view", "version", "month", "count", "cumulative"])?;
    let mut laplace = csv::Writer::from_writer(Vec::new());
    laplace.write_record(["view", "version", "months", "factor", "trend"])?;
    let mut trends = Vec::new();
    let mut pooled: Vec<Vec<f64>> = Vec::new();
    let discovery = match horizon {
        None => {
            warnings.push("no publication dates: discovery series skipped".into());
            Outcome::Skipped {
                reason: "no publication dates".into(),
            }
        }
        Some(h) => {
            for view in TREND_VIEWS {
                let mut counts_all = Vec::new();
                for s in view_series(inputs, view, h, true)? {
                    warnings.extend(s.warnings.iter().map(|w| format!("{}: {w}", view.name())));
                    let label = s.version.to_string();
                    for (i, (c, cum)) in s.counts.iter().zip(&s.cumulative).enumerate() {
                        monthly.write_record([
                            view.name(),
                            &label,
                            &(i + 1).to_string(),
                            &c.to_string(),
                            &cum.to_string(),
                        ])?;
                    }
                    let series = laplace_series(&s.counts);
                    let (mut up, mut down) = (0, 0);
                    for (j, factor) in &series {
                        let trend = match factor {
                            Some(l) if *l > LAPLACE_THRESHOLD => {
                                up += 1;
                                "increasing"
                            }
                            Some(l) if *l < -LAPLACE_THRESHOLD => {
                                down += 1;
                                "decreasing"
                            }
                            Some(_) => "none",
                            None => "",
                        };
                        let factor = factor.map(|l| format!("{l:.6}")).unwrap_or_default();
                        laplace.write_record([
                            view.name(),
                            &label,
                            &j.to_string(),
                            &factor,
                            trend,
                        ])?;
                    }
                    trends.push(TrendSummary {
                        view,
                        version: s.version.clone(),
                        months: s.len(),
                        events: s.total(),
                        factor: laplace_factor(&s.counts).ok(),
                        increasing_months: up,
                        decreasing_months: down,
                    });
                    counts_all.extend(s.counts.iter().map(|&c| c as f64));
                }
                pooled.push(counts_all);
            }
            Outcome::of(
                wilcoxon_rank_sum(&pooled[0], &pooled[1], Alternative::TwoSided),
                alpha,
            )
        }
    };

    Ok(StatsOutput {
        report: StatsReport {
            alpha,
            horizon,
            error_rates,
            taxonomy,
            foundational,
            discovery,
            trends,
        },
        monthly_csv: monthly
            .into_inner()
            .map_err(|e| csv_error(e.into_error()))?,
        laplace_csv: laplace
            .into_inner()
            .map_err(|e| csv_error(e.into_error()))?,
        warnings,
    })
}

pub struct VdmOutput {
    /// `(file name, content)` per artifact.
    pub files: Vec<(String, Vec<u8>)>,
    pub warnings: Vec<String>,
}

pub fn fits_file(view: FoundationalView) -> String {
    format!("vdm_fits_{}.csv", view.name())
}

pub fn quality_file(view: FoundationalView) -> String {
    format!("vdm_quality_{}.csv", view.name())
}

pub const COMPARE_FILE: &str = "vdm_compare.csv";

/// Fits every model to every version's cumulative discoveries at every
/// horizon from `from_month` to the end of the series, for both views, and
/// compares the quality curves of the two views.
pub fn vdm(
    inputs: &Inputs<'_>,
    from_month: usize,
    horizon_date: Option<NaiveDate>,
    pool: &ThreadPool,
) -> Result<VdmOutput> {
    let mut warnings = Vec::new();
    let mut files = Vec::new();
    let mut records: Vec<Vec<FitRecord>> = Vec::new();
    let horizon = horizon(inputs.dataset, horizon_date);
    if horizon.is_none() {
        warnings.push("no publication dates: nothing to fit".into());
    }
    for view in TREND_VIEWS {
        let series = match horizon {
            Some(h) => view_series(inputs, view, h, false)?,
            None => Vec::new(),
        };
        let cumulative: Vec<(VersionId, Vec<f64>)> = series
            .iter()
            .filter(|s| s.total() > 0)
            .map(|s| {
                (
                    s.version.clone(),
                    s.cumulative.iter().map(|&c| c as f64).collect(),
                )
            })
            .collect();
        let mut jobs = Vec::new();
        for (version, ys) in &cumulative {
            for model in model_registry() {
                for h in from_month.max(model.param_count() + 2)..=ys.len() {
                    jobs.push(FitJob {
                        model,
                        version,
                        cumulative: ys,
                        horizon: h,
                    });
                }
            }
        }
        let fits = fit_all(&jobs, pool)?;
        let mut buf = Vec::new();
        write_fits_csv(&fits, &mut buf)?;
        files.push((fits_file(view), buf));
        let mut buf = Vec::new();
        write_quality_csv(&quality_curves(&fits), &mut buf)?;
        files.push((quality_file(view), buf));
        records.push(fits);
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model",
        "pairs",
        "statistic",
        "p_value",
        "method",
        "warning",
    ])?;
    match compare_quality(&records[0], &records[1], Alternative::TwoSided) {
        Ok(rows) => {
            for c in rows {
                let o = &c.outcome;
                w.write_record([
                    c.model.map_or("pooled", |m| m.name()).to_string(),
                    o.pairs.to_string(),
                    o.result.statistic.to_string(),
                    o.result.p_value.to_string(),
                    serde_json::to_value(o.result.method)?
                        .as_str()
                        .unwrap_or_default()
                        .to_string(),
                    o.warning.clone().unwrap_or_default(),
                ])?;
            }
        }
        Err(e) => warnings.push(format!("quality comparison skipped: {e}")),
    }
    files.push((
        COMPARE_FILE.to_string(),
        w.into_inner().map_err(|e| csv_error(e.into_error()))?,
    ));
    let distinct: BTreeSet<&str> = warnings.iter().map(String::as_str).collect();
    let warnings = distinct.into_iter().map(str::to_string).collect();
    Ok(VdmOutput { files, warnings })
}
