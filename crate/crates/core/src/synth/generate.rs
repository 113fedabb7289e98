use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plan::{shared_file, FixStyle, GroundTruthPlan, PlannedVulnerability, ScheduledEvent};
use super::repo::HistoryWriter;
use crate::error::{Error, Result};
use crate::model::{
    write_dataset, CatalogEntry, CveRecord, UnverifiableReason, VerificationStatus, VersionCatalog,
    VersionId,
};

/// Expected verdict for one CVE.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub cve_id: String,
    #[serde(flatten)]
    pub status: VerificationStatus,
}

#[derive(Debug, Clone)]
pub struct GeneratedRepo {
    pub repo: PathBuf,
    pub dataset: Vec<CveRecord>,
    pub catalog: VersionCatalog,
    pub truth: Vec<TruthRecord>,
}

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const CATALOG_FILE: &str = "catalog.json";
pub const TRUTH_FILE: &str = "truth.jsonl";
pub const PLAN_FILE: &str = "plan.json";
pub const REPO_DIR: &str = "repo";

const INITIAL_FUNCTIONS: usize = 8;

fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2008, 9, 2).expect("valid date")
}

fn date_of(rev: u64) -> NaiveDate {
    base_date() + Days::new(rev)
}

fn epoch_seconds(rev: u64) -> i64 {
    date_of(rev)
        .and_hms_opt(12, 0, 0)
        .expect("valid time")
        .and_utc()
        .timestamp()
}

fn vulnerable_call(k: usize) -> String {
    format!("    unchecked_copy_{k}(buffer, length);")
}

fn block(k: usize) -> [String; 3] {
    [
        format!("  if (feature_enabled_{k}) {{"),
        vulnerable_call(k),
        "  }".to_string(),
    ]
}

fn imported_file(i: usize) -> Vec<String> {
    let mut lines = vec![format!("// module {i}"), String::new()];
    for j in 0..INITIAL_FUNCTIONS {
        lines.push(format!(
            "int module_{i}_step_{j}(char* buffer, int length) {{"
        ));
        lines.push(format!("  int total_{i}_{j} = length * {j};"));
        lines.push(format!("  return total_{i}_{j} + {i};"));
        lines.push("}".into());
        lines.push(String::new());
    }
    lines
}

/// Builds the repository, dataset, catalog and truth ledger of `plan` in
/// `workdir`, which must be empty or absent.
pub fn generate(plan: &GroundTruthPlan, workdir: &Path) -> Result<GeneratedRepo> {
    plan.validate()?;
    if workdir.exists() {
        let mut entries = std::fs::read_dir(workdir).map_err(|e| Error::io(workdir, e))?;
        if entries.next().is_some() {
            return Err(Error::Config(format!("{} is not empty", workdir.display())));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ 0x005e_ed0f_c0de);
    let mut history = HistoryWriter::new();
    let decoys_base = 900_000u64;
    let mut fillers = 0usize;

    for (i, event) in plan.schedule.iter().enumerate() {
        let rev = i as u64 + 1;
        let message = match event {
            ScheduledEvent::Import => {
                for f in 0..plan.files {
                    history.write_file(&shared_file(f), imported_file(f));
                }
                "Initial import.".to_string()
            }
            ScheduledEvent::Filler { file } => {
                fillers += 1;
                let copy = if plan.collisions {
                    plan.vulnerabilities
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| v.file != shared_file(*file) && v.introduced_rev < rev)
                        .map(|(k, v)| match v.fix_style {
                            FixStyle::Modify => vulnerable_call(k),
                            FixStyle::AdditionOnly => addition_vulnerable_line(k),
                        })
                        .next_back()
                } else {
                    None
                };
                let lines = history.edit(&shared_file(*file));
                let count = rng.gen_range(1..=3);
                let at = rng.gen_range(0..=lines.len());
                let mut new: Vec<String> = (0..count)
                    .map(|n| format!("  int filler_{fillers}_{n} = {n};"))
                    .collect();
                new.extend(copy);
                lines.splice(at..at, new);
                if rng.gen_bool(0.2) {
                    format!(
                        "Tidy module {file}.\n\nBUG={}",
                        decoys_base + fillers as u64
                    )
                } else {
                    format!("Tidy module {file}.")
                }
            }
            ScheduledEvent::Introduce { vuln } => {
                introduce(&mut history, &mut rng, *vuln, &plan.vulnerabilities[*vuln]);
                format!("Add feature {vuln}.")
            }
            ScheduledEvent::Fix { vuln } => {
                let v = &plan.vulnerabilities[*vuln];
                fix(&mut history, *vuln, v)?;
                let link = if rng.gen_bool(0.5) {
                    format!("BUG={}", v.bug_id)
                } else {
                    format!("BUG=http://crbug.com/{}", v.bug_id)
                };
                format!("Fix handling in feature {vuln}.\n\n{link}\nTEST=none")
            }
            ScheduledEvent::Release { label, .. } => {
                history.write_file("VERSION", vec![label.clone()]);
                format!("Release {label}.")
            }
        };
        let mark = history.commit("builder", epoch_seconds(rev), &message);
        debug_assert_eq!(mark as u64, rev);
        if let ScheduledEvent::Release { label, .. } = event {
            history.tag(&format!("v{label}"));
        }
    }

    let repo = workdir.join(REPO_DIR);
    history.write(&repo)?;

    let catalog = VersionCatalog::new(
        plan.releases()
            .into_iter()
            .map(|(label, official, rev)| {
                Ok(CatalogEntry {
                    version: VersionId::parse(&label)?,
                    release_date: date_of(rev),
                    snapshot_rev: format!("v{label}"),
                    official,
                })
            })
            .collect::<Result<Vec<_>>>()?,
    )?;

    let mut dataset = Vec::new();
    let mut truth = Vec::new();
    for v in &plan.vulnerabilities {
        dataset.push(CveRecord {
            cve_id: v.cve_id.clone(),
            claimed_versions: v.claimed_versions.clone(),
            bug_ids: [v.bug_id].into(),
            published: Some(date_of(v.fixed_rev) + Days::new(3)),
        });
        truth.push(TruthRecord {
            cve_id: v.cve_id.clone(),
            status: VerificationStatus::Verified {
                versions: v.true_vulnerable_versions.clone(),
            },
        });
    }
    let last = plan.schedule.len() as u64;
    for u in &plan.unlinked {
        dataset.push(CveRecord {
            cve_id: u.cve_id.clone(),
            claimed_versions: u.claimed_versions.clone(),
            bug_ids: u.bug_ids.clone(),
            published: Some(date_of(last)),
        });
        truth.push(TruthRecord {
            cve_id: u.cve_id.clone(),
            status: VerificationStatus::Unverifiable { reason: u.reason },
        });
    }

    write(workdir.join(DATASET_FILE), write_dataset(&dataset)?)?;
    write(workdir.join(CATALOG_FILE), catalog.to_json()? + "\n")?;
    write(workdir.join(TRUTH_FILE), write_truth(&truth)?)?;
    write(
        workdir.join(PLAN_FILE),
        serde_json::to_string_pretty(plan)? + "\n",
    )?;
    Ok(GeneratedRepo {
        repo,
        dataset,
        catalog,
        truth,
    })
}

fn write(path: PathBuf, text: String) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

pub fn write_truth(truth: &[TruthRecord]) -> Result<String> {
    let mut out = String::new();
    for t in truth {
        out.push_str(&serde_json::to_string(t)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_truth(text: &str) -> Result<Vec<TruthRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::parse("truth ledger", format!("line {}: {e}", i + 1)))
        })
        .collect()
}

fn addition_vulnerable_line(k: usize) -> String {
    format!("  memcpy(storage_{k}, buffer, length);")
}

fn introduce(
    history: &mut HistoryWriter,
    rng: &mut ChaCha8Rng,
    k: usize,
    v: &PlannedVulnerability,
) {
    match v.fix_style {
        FixStyle::Modify => {
            let lines = history.edit(&v.file);
            let at = rng.gen_range(0..=lines.len());
            lines.splice(at..at, block(k));
        }
        FixStyle::AdditionOnly => history.write_file(
            &v.file,
            vec![
                format!("// feature {k}"),
                format!("static char storage_{k}[64];"),
                String::new(),
                format!("int feature_{k}(char* buffer, int length) {{"),
                addition_vulnerable_line(k),
                "  return length;".into(),
                "}".into(),
            ],
        ),
    }
}

fn fix(history: &mut HistoryWriter, k: usize, v: &PlannedVulnerability) -> Result<()> {
    let lines = history.edit(&v.file);
    let missing = || Error::Invalid(format!("{}: vulnerable code missing at the fix", v.cve_id));
    match v.fix_style {
        FixStyle::Modify => {
            let call = vulnerable_call(k);
            let at = lines.iter().position(|l| *l == call).ok_or_else(missing)?;
            if v.removes_block {
                // fillers may have landed inside the block
                let close = at
                    + lines[at..]
                        .iter()
                        .position(|l| l == "  }")
                        .ok_or_else(missing)?;
                lines.remove(close);
                lines.remove(at);
                let open = format!("  if (feature_enabled_{k}) {{");
                let at = lines.iter().position(|l| *l == open).ok_or_else(missing)?;
                lines.remove(at);
            } else {
                lines[at] = format!("    checked_copy_{k}(buffer, length, sizeof(storage_{k}));");
            }
        }
        FixStyle::AdditionOnly => {
            let header = format!("int feature_{k}(char* buffer, int length) {{");
            let at = lines
                .iter()
                .position(|l| *l == header)
                .ok_or_else(missing)?;
            lines.insert(
                at + 1,
                format!("  if (length > (int)sizeof(storage_{k})) return -1;"),
            );
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionScore {
    pub version: VersionId,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub cves: usize,
    pub exact_matches: usize,
    pub exact_match_rate: f64,
    /// Over (CVE, version) pairs; absent when nothing was predicted.
    pub precision: Option<f64>,
    /// Over (CVE, version) pairs; absent when the truth holds no pair.
    pub recall: Option<f64>,
    pub per_version: Vec<VersionScore>,
}

fn share(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Compares pipeline verdicts with the truth ledger.
pub fn score(results: &[crate::model::VerificationResult], truth: &[TruthRecord]) -> Result<Score> {
    let found: std::collections::BTreeMap<&str, &VerificationStatus> = results
        .iter()
        .map(|r| (r.cve_id.as_str(), &r.status))
        .collect();
    let expected: std::collections::BTreeMap<&str, &VerificationStatus> = truth
        .iter()
        .map(|t| (t.cve_id.as_str(), &t.status))
        .collect();
    if found.keys().ne(expected.keys())
        || found.len() != results.len()
        || expected.len() != truth.len()
    {
        return Err(Error::Analysis(
            "results and truth cover different CVE ids".into(),
        ));
    }
    let pairs = |s: &VerificationStatus| -> BTreeSet<VersionId> {
        match s {
            VerificationStatus::Verified { versions } => versions.clone(),
            VerificationStatus::Unverifiable { .. } => BTreeSet::new(),
        }
    };
    let mut exact = 0;
    let (mut tp, mut predicted, mut actual) = (0, 0, 0);
    let mut per: std::collections::BTreeMap<VersionId, (usize, usize, usize)> = Default::default();
    for (id, want) in &expected {
        let got = found[id];
        let same = match (got, want) {
            (
                VerificationStatus::Verified { versions: a },
                VerificationStatus::Verified { versions: b },
            ) => a == b,
            (
                VerificationStatus::Unverifiable { reason: a },
                VerificationStatus::Unverifiable { reason: b },
            ) => a == b,
            _ => false,
        };
        exact += usize::from(same);
        let (g, w) = (pairs(got), pairs(want));
        tp += g.intersection(&w).count();
        predicted += g.len();
        actual += w.len();
        for v in g.union(&w) {
            let e = per.entry(v.clone()).or_default();
            e.0 += usize::from(g.contains(v) && w.contains(v));
            e.1 += usize::from(g.contains(v));
            e.2 += usize::from(w.contains(v));
        }
    }
    Ok(Score {
        cves: expected.len(),
        exact_matches: exact,
        exact_match_rate: share(exact, expected.len()).unwrap_or(1.0),
        precision: share(tp, predicted),
        recall: share(tp, actual),
        per_version: per
            .into_iter()
            .map(|(version, (tp, p, a))| VersionScore {
                version,
                precision: share(tp, p),
                recall: share(tp, a),
            })
            .collect(),
    })
}

/// Reason recorded for unlinked CVEs of a truth ledger.
pub fn truth_reason(t: &TruthRecord) -> Option<UnverifiableReason> {
    match t.status {
        VerificationStatus::Unverifiable { reason } => Some(reason),
        VerificationStatus::Verified { .. } => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VerificationResult;

    fn vs(range: std::ops::RangeInclusive<u64>) -> BTreeSet<VersionId> {
        range
            .map(|i| VersionId::parse(&format!("{i}.0")).unwrap())
            .collect()
    }

    fn verified(id: &str, versions: BTreeSet<VersionId>) -> (VerificationResult, TruthRecord) {
        let status = VerificationStatus::Verified { versions };
        (
            VerificationResult {
                cve_id: id.into(),
                status: status.clone(),
                evidence: vec![],
                warnings: vec![],
            },
            TruthRecord {
                cve_id: id.into(),
                status,
            },
        )
    }

    #[test]
    fn precision_and_recall() {
        let (mut r, t) = verified("A", vs(1..=5));
        r.status = VerificationStatus::Verified {
            versions: vs(2..=5),
        };
        let s = score(&[r], &[t]).unwrap();
        assert_eq!(s.exact_match_rate, 0.0);
        assert_eq!(s.recall, Some(0.8));
        assert_eq!(s.precision, Some(1.0));
    }

    #[test]
    fn empty_prediction_has_zero_recall() {
        let (mut r, t) = verified("A", vs(1..=3));
        r.status = VerificationStatus::Verified {
            versions: BTreeSet::new(),
        };
        let s = score(&[r], &[t]).unwrap();
        assert_eq!(s.recall, Some(0.0));
        assert_eq!(s.precision, None);
    }

    #[test]
    fn identifiers_must_agree() {
        let (r, _) = verified("A", vs(1..=3));
        let (_, t) = verified("B", vs(1..=3));
        assert!(score(&[r], &[t]).is_err());
    }
}
