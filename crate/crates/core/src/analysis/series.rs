use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::model::{CveRecord, VersionId};

/// Mean Gregorian month length in days.
pub const MONTH_DAYS: f64 = 30.44;

/// Discoveries per month since a release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySeries {
    pub version: VersionId,
    pub t0: NaiveDate,
    pub counts: Vec<u64>,
    pub cumulative: Vec<u64>,
    pub warnings: Vec<String>,
}

fn month_index(t0: NaiveDate, date: NaiveDate) -> usize {
    let days = (date - t0).num_days();
    (days as f64 / MONTH_DAYS).floor() as usize
}

impl MonthlySeries {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.cumulative.last().copied().unwrap_or(0)
    }

    /// `(month, cumulative)` pairs from `month` on, months numbered from 1.
    pub fn slice_from(&self, month: usize) -> Vec<(usize, u64)> {
        self.cumulative
            .iter()
            .enumerate()
            .map(|(i, &c)| (i + 1, c))
            .filter(|&(m, _)| m >= month)
            .collect()
    }
}

/// Buckets discovery dates into months of [`MONTH_DAYS`] days after `t0`.
///
/// The series covers every month that starts before `horizon`. Dates before
/// `t0` are counted in month 0, dates after `horizon` are dropped; both are
/// reported as warnings.
pub fn monthly_series(
    version: VersionId,
    dates: &[NaiveDate],
    t0: NaiveDate,
    horizon: NaiveDate,
) -> MonthlySeries {
    let len = if horizon <= t0 {
        0
    } else {
        month_index(t0, horizon) + 1
    };
    let mut counts = vec![0u64; len];
    let mut warnings = Vec::new();
    for &date in dates {
        if date > horizon {
            warnings.push(format!(
                "{version}: discovery {date} after horizon {horizon} dropped"
            ));
            continue;
        }
        let idx = if date < t0 {
            warnings.push(format!("{version}: discovery {date} precedes release {t0}"));
            0
        } else {
            month_index(t0, date)
        };
        match counts.get_mut(idx) {
            Some(c) => *c += 1,
            None => warnings.push(format!("{version}: discovery {date} outside the series")),
        }
    }
    let cumulative = counts
        .iter()
        .scan(0u64, |acc, &c| {
            *acc += c;
            Some(*acc)
        })
        .collect();
    MonthlySeries {
        version,
        t0,
        counts,
        cumulative,
        warnings,
    }
}

/// Monthly series of the publication dates of `cves`; records without a
/// publication date are skipped with a warning.
pub fn discovery_series<'a>(
    version: VersionId,
    cves: impl IntoIterator<Item = &'a CveRecord>,
    t0: NaiveDate,
    horizon: NaiveDate,
) -> MonthlySeries {
    let mut missing = Vec::new();
    let mut dates = Vec::new();
    for cve in cves {
        match cve.published {
            Some(d) => dates.push(d),
            None => missing.push(format!("{}: no publication date", cve.cve_id)),
        }
    }
    let mut series = monthly_series(version, &dates, t0, horizon);
    series.warnings.extend(missing);
    series
}
