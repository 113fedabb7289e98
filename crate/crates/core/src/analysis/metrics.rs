use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::NaiveDate;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{classify, error_rates, error_taxonomy, index_results, ratio_to_f64, ErMode};
use crate::error::Result;
use crate::model::{CveRecord, VerificationResult, VersionCatalog, VersionId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionMetrics {
    pub version: VersionId,
    pub release_date: NaiveDate,
    pub n_verified: u64,
    pub n_erroneous: u64,
    pub n_unverifiable: u64,
    pub er: Option<Ratio<u64>>,
    pub er_prime: Option<Ratio<u64>>,
    pub p_error: u64,
    pub f_error: u64,
    pub b_error: u64,
    pub other_error: u64,
    /// CVEs claiming this version.
    pub reported_affected: u64,
    /// ... whose claims also include the first version.
    pub foundational_reported: u64,
    /// CVEs verified in this version.
    pub verified_affected: u64,
    /// ... whose verified set also includes the first version.
    pub foundational_verified: u64,
}

pub const METRICS_COLUMNS: [&str; 17] = [
    "version",
    "release_date",
    "n_verified",
    "n_erroneous",
    "n_unverifiable",
    "er",
    "er_prime",
    "p_error",
    "f_error",
    "b_error",
    "other_error",
    "reported_affected",
    "foundational_reported",
    "foundational_reported_fraction",
    "verified_affected",
    "foundational_verified",
    "foundational_verified_fraction",
];

fn fraction(num: u64, den: u64) -> Option<Ratio<u64>> {
    (den > 0).then(|| Ratio::new(num, den))
}

impl VersionMetrics {
    pub fn foundational_reported_fraction(&self) -> Option<Ratio<u64>> {
        fraction(self.foundational_reported, self.reported_affected)
    }

    pub fn foundational_verified_fraction(&self) -> Option<Ratio<u64>> {
        fraction(self.foundational_verified, self.verified_affected)
    }
}

/// One row per official version, ascending.
pub fn metrics_table(
    results: &[VerificationResult],
    dataset: &[CveRecord],
    catalog: &VersionCatalog,
    mode: ErMode,
) -> Result<Vec<VersionMetrics>> {
    let index = index_results(results, dataset)?;
    let first = catalog.first();
    catalog
        .official()
        .map(|entry| {
            let v = &entry.version;
            let sets = classify(results, dataset, catalog, v, mode)?;
            let tax = error_taxonomy(v, &sets.erroneous, results)?;
            let rates = error_rates(
                sets.verified.len() as u64,
                sets.erroneous.len() as u64,
                sets.unverifiable.len() as u64,
            );
            let mut m = VersionMetrics {
                version: v.clone(),
                release_date: entry.release_date,
                n_verified: sets.verified.len() as u64,
                n_erroneous: sets.erroneous.len() as u64,
                n_unverifiable: sets.unverifiable.len() as u64,
                er: rates.er,
                er_prime: rates.er_prime,
                p_error: tax.p.len() as u64,
                f_error: tax.f.len() as u64,
                b_error: tax.b.len() as u64,
                other_error: tax.other.len() as u64,
                reported_affected: 0,
                foundational_reported: 0,
                verified_affected: 0,
                foundational_verified: 0,
            };
            for cve in dataset {
                if cve.claimed_versions.contains(v) {
                    m.reported_affected += 1;
                    m.foundational_reported += u64::from(cve.claimed_versions.contains(first));
                }
                if let Some(verified) = index[cve.cve_id.as_str()].verified_versions() {
                    if verified.contains(v) {
                        m.verified_affected += 1;
                        m.foundational_verified += u64::from(verified.contains(first));
                    }
                }
            }
            Ok(m)
        })
        .collect()
}

pub(crate) fn render_ratio(r: Option<Ratio<u64>>) -> String {
    r.map(|r| format!("{:.6}", ratio_to_f64(r)))
        .unwrap_or_default()
}

pub fn write_metrics_csv(rows: &[VersionMetrics], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_COLUMNS)?;
    for m in rows {
        w.write_record([
            m.version.to_string(),
            m.release_date.to_string(),
            m.n_verified.to_string(),
            m.n_erroneous.to_string(),
            m.n_unverifiable.to_string(),
            render_ratio(m.er),
            render_ratio(m.er_prime),
            m.p_error.to_string(),
            m.f_error.to_string(),
            m.b_error.to_string(),
            m.other_error.to_string(),
            m.reported_affected.to_string(),
            m.foundational_reported.to_string(),
            render_ratio(m.foundational_reported_fraction()),
            m.verified_affected.to_string(),
            m.foundational_verified.to_string(),
            render_ratio(m.foundational_verified_fraction()),
        ])?;
    }
    w.flush().map_err(|e| crate::Error::io("<csv>", e))?;
    Ok(())
}

/// Which version set decides whether a CVE affects a version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoundationalView {
    /// Claimed versions of every CVE.
    Reported,
    /// Claimed versions of verifiable CVEs.
    Verifiable,
    /// Verified versions.
    Verified,
}

impl FoundationalView {
    pub const ALL: [FoundationalView; 3] = [
        FoundationalView::Reported,
        FoundationalView::Verifiable,
        FoundationalView::Verified,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FoundationalView::Reported => "reported",
            FoundationalView::Verifiable => "verifiable",
            FoundationalView::Verified => "verified",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoundationalRow {
    pub view: FoundationalView,
    pub version: VersionId,
    pub affected: u64,
    pub foundational: u64,
}

impl FoundationalRow {
    pub fn fraction(&self) -> Option<Ratio<u64>> {
        fraction(self.foundational, self.affected)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoundationalSummary {
    pub view: FoundationalView,
    /// Mean of the per-version fractions over versions where it is defined.
    pub mean_over_versions: Option<f64>,
    /// Foundational share among distinct CVEs affecting any official version.
    pub pooled_over_cves: Option<Ratio<u64>>,
}

fn view_sets<'a>(
    view: FoundationalView,
    dataset: &'a [CveRecord],
    index: &BTreeMap<&str, &'a VerificationResult>,
) -> Vec<(&'a CveRecord, &'a BTreeSet<VersionId>)> {
    dataset
        .iter()
        .filter_map(|cve| {
            let result = index[cve.cve_id.as_str()];
            let set = match view {
                FoundationalView::Reported => Some(&cve.claimed_versions),
                FoundationalView::Verifiable => {
                    result.is_verifiable().then_some(&cve.claimed_versions)
                }
                FoundationalView::Verified => result.verified_versions(),
            };
            set.map(|s| (cve, s))
        })
        .collect()
}

/// The CVEs a view counts, each with the versions it affects under that view.
pub fn affected_sets<'a>(
    view: FoundationalView,
    results: &'a [VerificationResult],
    dataset: &'a [CveRecord],
) -> Result<Vec<(&'a CveRecord, &'a BTreeSet<VersionId>)>> {
    Ok(view_sets(view, dataset, &index_results(results, dataset)?))
}

pub const FOUNDATIONAL_COLUMNS: [&str; 5] =
    ["view", "version", "affected", "foundational", "fraction"];

pub fn foundational_report(
    results: &[VerificationResult],
    dataset: &[CveRecord],
    catalog: &VersionCatalog,
) -> Result<(Vec<FoundationalRow>, Vec<FoundationalSummary>)> {
    let index = index_results(results, dataset)?;
    let first = catalog.first();
    let official: BTreeSet<VersionId> = catalog.official_versions().into_iter().collect();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for view in FoundationalView::ALL {
        let sets: Vec<&BTreeSet<VersionId>> = view_sets(view, dataset, &index)
            .into_iter()
            .map(|(_, s)| s)
            .collect();
        let mut fractions = Vec::new();
        for v in &official {
            let affecting: Vec<_> = sets.iter().filter(|s| s.contains(v)).collect();
            let row = FoundationalRow {
                view,
                version: v.clone(),
                affected: affecting.len() as u64,
                foundational: affecting.iter().filter(|s| s.contains(first)).count() as u64,
            };
            fractions.extend(row.fraction().map(ratio_to_f64));
            rows.push(row);
        }
        let touching: Vec<_> = sets.iter().filter(|s| !s.is_disjoint(&official)).collect();
        let pooled = fraction(
            touching.iter().filter(|s| s.contains(first)).count() as u64,
            touching.len() as u64,
        );
        summaries.push(FoundationalSummary {
            view,
            mean_over_versions: (!fractions.is_empty())
                .then(|| fractions.iter().sum::<f64>() / fractions.len() as f64),
            pooled_over_cves: pooled,
        });
    }
    Ok((rows, summaries))
}

pub fn write_foundational_csv(rows: &[FoundationalRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FOUNDATIONAL_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.view.name().to_string(),
            r.version.to_string(),
            r.affected.to_string(),
            r.foundational.to_string(),
            render_ratio(r.fraction()),
        ])?;
    }
    w.flush().map_err(|e| crate::Error::io("<csv>", e))?;
    Ok(())
}
