//! Per-version error sets, error rates, error taxonomy, foundational
//! fractions and monthly discovery series.

mod metrics;
mod series;

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CveRecord, VerificationResult, VersionCatalog, VersionId};

pub use metrics::{
    affected_sets, foundational_report, metrics_table, write_foundational_csv, write_metrics_csv,
    FoundationalRow, FoundationalSummary, FoundationalView, VersionMetrics, FOUNDATIONAL_COLUMNS,
    METRICS_COLUMNS,
};
pub use series::{discovery_series, monthly_series, MonthlySeries, MONTH_DAYS};

/// How `verified(v)` is built.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErMode {
    /// Every CVE whose verified set contains `v`, claimed or not.
    #[default]
    Paper,
    /// Only CVEs that also claim `v`.
    Strict,
}

/// The three per-version CVE sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VersionSets {
    pub verified: BTreeSet<String>,
    pub erroneous: BTreeSet<String>,
    pub unverifiable: BTreeSet<String>,
}

/// Looks up the verdict of every dataset CVE; fails when one is missing.
pub fn index_results<'a>(
    results: &'a [VerificationResult],
    dataset: &[CveRecord],
) -> Result<BTreeMap<&'a str, &'a VerificationResult>> {
    let map: BTreeMap<&str, &VerificationResult> =
        results.iter().map(|r| (r.cve_id.as_str(), r)).collect();
    if let Some(cve) = dataset
        .iter()
        .find(|c| !map.contains_key(c.cve_id.as_str()))
    {
        return Err(Error::Analysis(format!(
            "no verification result for {}",
            cve.cve_id
        )));
    }
    Ok(map)
}

pub fn classify(
    results: &[VerificationResult],
    dataset: &[CveRecord],
    catalog: &VersionCatalog,
    version: &VersionId,
    mode: ErMode,
) -> Result<VersionSets> {
    if catalog.get(version).is_none() {
        return Err(Error::Analysis(format!(
            "version {version} is not in the catalog"
        )));
    }
    let index = index_results(results, dataset)?;
    let mut sets = VersionSets::default();
    for cve in dataset {
        let claims = cve.claimed_versions.contains(version);
        match index[cve.cve_id.as_str()].verified_versions() {
            None if claims => {
                sets.unverifiable.insert(cve.cve_id.clone());
            }
            None => {}
            Some(verified) if verified.contains(version) => {
                if claims || mode == ErMode::Paper {
                    sets.verified.insert(cve.cve_id.clone());
                }
            }
            Some(_) if claims => {
                sets.erroneous.insert(cve.cve_id.clone());
            }
            Some(_) => {}
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErrorRates {
    pub er: Option<Ratio<u64>>,
    pub er_prime: Option<Ratio<u64>>,
}

/// `ER = err / (ver + err)` and `ER' = err / (ver + err + unverifiable)`.
pub fn error_rates(n_verified: u64, n_erroneous: u64, n_unverifiable: u64) -> ErrorRates {
    let ratio = |den: u64| (den > 0).then(|| Ratio::new(n_erroneous, den));
    ErrorRates {
        er: ratio(n_verified + n_erroneous),
        er_prime: ratio(n_verified + n_erroneous + n_unverifiable),
    }
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorCategory {
    /// The verified set is empty.
    B,
    /// The claimed version precedes every verified version.
    P,
    /// The claimed version follows every verified version.
    F,
    /// The claimed version falls in a gap inside the verified range.
    Other,
}

/// Category of an erroneous claim of `version` given the verified set.
pub fn categorize(version: &VersionId, verified: &BTreeSet<VersionId>) -> ErrorCategory {
    match (verified.first(), verified.last()) {
        (Some(min), Some(max)) => {
            if version < min {
                ErrorCategory::P
            } else if version > max {
                ErrorCategory::F
            } else {
                ErrorCategory::Other
            }
        }
        _ => ErrorCategory::B,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Taxonomy {
    pub p: BTreeSet<String>,
    pub f: BTreeSet<String>,
    pub b: BTreeSet<String>,
    pub other: BTreeSet<String>,
}

impl Taxonomy {
    pub fn get(&self, category: ErrorCategory) -> &BTreeSet<String> {
        match category {
            ErrorCategory::P => &self.p,
            ErrorCategory::F => &self.f,
            ErrorCategory::B => &self.b,
            ErrorCategory::Other => &self.other,
        }
    }

    fn get_mut(&mut self, category: ErrorCategory) -> &mut BTreeSet<String> {
        match category {
            ErrorCategory::P => &mut self.p,
            ErrorCategory::F => &mut self.f,
            ErrorCategory::B => &mut self.b,
            ErrorCategory::Other => &mut self.other,
        }
    }
}

pub fn error_taxonomy<'a>(
    version: &VersionId,
    erroneous: impl IntoIterator<Item = &'a String>,
    results: &[VerificationResult],
) -> Result<Taxonomy> {
    let index: BTreeMap<&str, &VerificationResult> =
        results.iter().map(|r| (r.cve_id.as_str(), r)).collect();
    let mut out = Taxonomy::default();
    for id in erroneous {
        let verified = index
            .get(id.as_str())
            .and_then(|r| r.verified_versions())
            .ok_or_else(|| Error::Analysis(format!("{id} is not verifiable")))?;
        out.get_mut(categorize(version, verified))
            .insert(id.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CatalogEntry, UnverifiableReason, VerificationStatus};
    use chrono::NaiveDate;

    fn v(i: u64) -> VersionId {
        VersionId::parse(&format!("{i}.0")).unwrap()
    }

    fn range(a: u64, b: u64) -> BTreeSet<VersionId> {
        (a..=b).map(v).collect()
    }

    fn catalog(n: u64) -> VersionCatalog {
        let d = NaiveDate::from_ymd_opt(2009, 1, 1).unwrap();
        VersionCatalog::new(
            (1..=n)
                .map(|i| CatalogEntry {
                    version: v(i),
                    release_date: d + chrono::Days::new(60 * i),
                    snapshot_rev: format!("r{}", i * 10),
                    official: true,
                })
                .collect(),
        )
        .unwrap()
    }

    fn cve(id: &str, claimed: BTreeSet<VersionId>) -> CveRecord {
        CveRecord {
            cve_id: id.into(),
            claimed_versions: claimed,
            bug_ids: [1].into(),
            published: None,
        }
    }

    fn verified(id: &str, versions: BTreeSet<VersionId>) -> VerificationResult {
        VerificationResult {
            cve_id: id.into(),
            status: VerificationStatus::Verified { versions },
            evidence: vec![],
            warnings: vec![],
        }
    }

    fn table1() -> (Vec<CveRecord>, Vec<VerificationResult>) {
        let dataset = vec![
            cve("CVE-2011-2822", range(1, 13)),
            cve("CVE-2011-4080", range(1, 8)),
            cve("CVE-2012-1521", range(1, 18)),
        ];
        let results = vec![
            verified("CVE-2011-2822", range(1, 13)),
            verified("CVE-2011-4080", range(3, 8)),
            VerificationResult {
                cve_id: "CVE-2012-1521".into(),
                status: VerificationStatus::Unverifiable {
                    reason: UnverifiableReason::NoCommit,
                },
                evidence: vec![],
                warnings: vec![],
            },
        ];
        (dataset, results)
    }

    #[test]
    fn table1_classification() {
        let (dataset, results) = table1();
        let cat = catalog(18);
        let at3 = classify(&results, &dataset, &cat, &v(3), ErMode::Paper).unwrap();
        assert!(at3.verified.contains("CVE-2011-4080"));
        let at1 = classify(&results, &dataset, &cat, &v(1), ErMode::Paper).unwrap();
        assert!(at1.erroneous.contains("CVE-2011-4080"));
        assert!(at1.unverifiable.contains("CVE-2012-1521"));
        let tax = error_taxonomy(&v(1), &at1.erroneous, &results).unwrap();
        assert!(tax.p.contains("CVE-2011-4080"));
        assert!(classify(&results, &dataset, &cat, &v(19), ErMode::Paper).is_err());
    }

    #[test]
    fn paper_mode_counts_unclaimed_verified_versions() {
        let dataset = vec![cve("A", range(1, 2))];
        let results = vec![verified("A", range(1, 4))];
        let cat = catalog(4);
        let paper = classify(&results, &dataset, &cat, &v(4), ErMode::Paper).unwrap();
        assert!(paper.verified.contains("A"));
        let strict = classify(&results, &dataset, &cat, &v(4), ErMode::Strict).unwrap();
        assert!(strict.verified.is_empty());
    }

    #[test]
    fn rates() {
        let r = error_rates(3, 1, 0);
        assert_eq!(r.er, Some(Ratio::new(1, 4)));
        assert_eq!(r.er_prime, Some(Ratio::new(1, 4)));
        assert_eq!(error_rates(5, 0, 2).er, Some(Ratio::new(0, 1)));
        let r = error_rates(6, 2, 12);
        assert_eq!(r.er, Some(Ratio::new(1, 4)));
        assert_eq!(r.er_prime, Some(Ratio::new(1, 10)));
        let r = error_rates(0, 0, 3);
        assert_eq!(r.er, None);
        assert_eq!(r.er_prime, Some(Ratio::new(0, 1)));
        assert_eq!(error_rates(0, 0, 0).er_prime, None);
    }

    #[test]
    fn categories() {
        assert_eq!(categorize(&v(1), &range(3, 8)), ErrorCategory::P);
        assert_eq!(categorize(&v(7), &range(1, 5)), ErrorCategory::F);
        assert_eq!(categorize(&v(2), &BTreeSet::new()), ErrorCategory::B);
        let gap: BTreeSet<_> = [v(1), v(4)].into();
        assert_eq!(categorize(&v(2), &gap), ErrorCategory::Other);
    }
}
