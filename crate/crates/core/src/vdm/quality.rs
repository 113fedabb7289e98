use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::fit::FitRecord;
use super::models::VdmModel;
use crate::error::{Error, Result};
use crate::model::VersionId;
use crate::stats::{wilcoxon_signed_rank, Alternative, Method, TestResult};

/// Share of fits with goodness-of-fit p-value at least 0.05; fits without a
/// p-value count as not well fit.
pub fn quality<'a>(records: impl IntoIterator<Item = &'a FitRecord>) -> Result<f64> {
    let (mut good, mut total) = (0usize, 0usize);
    for r in records {
        total += 1;
        good += usize::from(r.well_fit());
    }
    if total == 0 {
        return Err(Error::Analysis("quality of an empty set of fits".into()));
    }
    Ok(good as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityPoint {
    pub model: VdmModel,
    pub horizon: usize,
    pub fits: usize,
    pub well_fit: usize,
    pub quality: f64,
}

/// Quality per model and horizon, pooling versions.
pub fn quality_curves(records: &[FitRecord]) -> Vec<QualityPoint> {
    let mut groups: BTreeMap<(VdmModel, usize), (usize, usize)> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.model, r.horizon)).or_default();
        g.0 += 1;
        g.1 += usize::from(r.well_fit());
    }
    groups
        .into_iter()
        .map(|((model, horizon), (fits, well_fit))| QualityPoint {
            model,
            horizon,
            fits,
            well_fit,
            quality: well_fit as f64 / fits as f64,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedOutcome {
    pub result: TestResult,
    pub pairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Signed-rank test on the paired differences `a - b`. When every difference
/// is zero the samples are indistinguishable: p = 1 with a warning.
pub fn paired_test(a: &[f64], b: &[f64], alternative: Alternative) -> Result<PairedOutcome> {
    if a.len() != b.len() {
        return Err(Error::Analysis(format!(
            "{} values paired with {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Analysis("paired test without pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().all(|d| *d == 0.0) {
        return Ok(PairedOutcome {
            result: TestResult {
                statistic: 0.0,
                p_value: 1.0,
                method: Method::Exact,
                alternative,
                n: 0,
                m: None,
            },
            pairs: a.len(),
            warning: Some("all paired differences are zero".into()),
        });
    }
    Ok(PairedOutcome {
        result: wilcoxon_signed_rank(&diffs, 0.0, alternative)?,
        pairs: a.len(),
        warning: None,
    })
}

/// One row of a dataset comparison; `model` is `None` for the pooled test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model: Option<VdmModel>,
    pub outcome: PairedOutcome,
}

fn per_model<K: Ord>(
    pairs: BTreeMap<(VdmModel, K), (f64, f64)>,
    alternative: Alternative,
) -> Result<Vec<Comparison>> {
    if pairs.is_empty() {
        return Err(Error::Analysis(
            "no comparable pairs between the datasets".into(),
        ));
    }
    let mut by_model: BTreeMap<VdmModel, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let (mut all_a, mut all_b) = (Vec::new(), Vec::new());
    for ((model, _), (a, b)) in pairs {
        let e = by_model.entry(model).or_default();
        e.0.push(a);
        e.1.push(b);
        all_a.push(a);
        all_b.push(b);
    }
    let mut out = Vec::new();
    for (model, (a, b)) in by_model {
        out.push(Comparison {
            model: Some(model),
            outcome: paired_test(&a, &b, alternative)?,
        });
    }
    out.push(Comparison {
        model: None,
        outcome: paired_test(&all_a, &all_b, alternative)?,
    });
    Ok(out)
}

/// Pairs fits of two datasets by (model, version, horizon) and compares a
/// per-fit scalar, per model and pooled.
pub fn compare_datasets(
    a: &[FitRecord],
    b: &[FitRecord],
    metric: impl Fn(&FitRecord) -> f64,
    alternative: Alternative,
) -> Result<Vec<Comparison>> {
    let index: BTreeMap<(VdmModel, &VersionId, usize), &FitRecord> = b
        .iter()
        .map(|r| ((r.model, &r.version, r.horizon), r))
        .collect();
    let pairs = a
        .iter()
        .filter_map(|r| {
            index.get(&(r.model, &r.version, r.horizon)).map(|o| {
                (
                    (r.model, (r.version.clone(), r.horizon)),
                    (metric(r), metric(o)),
                )
            })
        })
        .collect();
    per_model(pairs, alternative)
}

/// Pairs the quality curves of two datasets by (model, horizon) and compares
/// them, per model and pooled.
pub fn compare_quality(
    a: &[FitRecord],
    b: &[FitRecord],
    alternative: Alternative,
) -> Result<Vec<Comparison>> {
    let curve_b: BTreeMap<(VdmModel, usize), f64> = quality_curves(b)
        .into_iter()
        .map(|q| ((q.model, q.horizon), q.quality))
        .collect();
    let pairs = quality_curves(a)
        .into_iter()
        .filter_map(|q| {
            curve_b
                .get(&(q.model, q.horizon))
                .map(|&qb| ((q.model, q.horizon), (q.quality, qb)))
        })
        .collect();
    per_model(pairs, alternative)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_fits_csv(records: &[FitRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model",
        "version",
        "horizon",
        "params",
        "objective",
        "chi2",
        "df",
        "p_value",
        "converged",
    ])?;
    for r in records {
        let params = r
            .model
            .param_names()
            .iter()
            .zip(&r.params)
            .map(|(n, p)| format!("{n}={p}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.model.name().to_string(),
            r.version.to_string(),
            r.horizon.to_string(),
            params,
            r.objective.to_string(),
            opt(r.chi2),
            r.df.to_string(),
            opt(r.p_value),
            r.converged.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_quality_csv(points: &[QualityPoint], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "horizon", "fits", "well_fit", "quality"])?;
    for q in points {
        w.write_record([
            q.model.name().to_string(),
            q.horizon.to_string(),
            q.fits.to_string(),
            q.well_fit.to_string(),
            q.quality.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
