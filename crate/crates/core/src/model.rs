//! Domain types shared by every stage: versions, revisions, the release
//! catalog, vulnerability records and per-CVE verification verdicts.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::BufRead;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A dotted release version such as `3.0.195.24`.
///
/// Ordering is numeric per component with missing components read as zero,
/// so `3.0` and `3.0.0.0` compare (and hash) equal.
#[derive(Debug, Clone)]
pub struct VersionId {
    components: Vec<u64>,
    label: String,
}

impl VersionId {
    pub fn parse(text: &str) -> Result<Self> {
        if text.is_empty() {
            return Err(Error::parse("version", "empty version string"));
        }
        let components = text
            .split('.')
            .map(|part| {
                if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(Error::parse(
                        "version",
                        format!("component {part:?} of {text:?} is not a decimal integer"),
                    ));
                }
                part.parse::<u64>().map_err(|_| {
                    Error::parse(
                        "version",
                        format!("component {part:?} of {text:?} overflows"),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(VersionId {
            components,
            label: text.to_string(),
        })
    }

    pub fn components(&self) -> &[u64] {
        &self.components
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn significant(&self) -> &[u64] {
        let end = self
            .components
            .iter()
            .rposition(|&c| c != 0)
            .map_or(0, |i| i + 1);
        &self.components[..end]
    }
}

impl FromStr for VersionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VersionId::parse(s)
    }
}

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl Ord for VersionId {
    fn cmp(&self, other: &Self) -> Ordering {
        let n = self.components.len().max(other.components.len());
        (0..n)
            .map(|i| {
                let a = self.components.get(i).copied().unwrap_or(0);
                let b = other.components.get(i).copied().unwrap_or(0);
                a.cmp(&b)
            })
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

impl PartialOrd for VersionId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for VersionId {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for VersionId {}

impl Hash for VersionId {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.significant().hash(state);
    }
}

impl Serialize for VersionId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label)
    }
}

impl<'de> Deserialize<'de> for VersionId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        VersionId::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// A linearly numbered repository revision (`r95731`).
///
/// Identity is the ordinal; the label is kept for display only.
#[derive(Debug, Clone)]
pub struct RevisionId {
    ordinal: u64,
    label: String,
}

impl RevisionId {
    pub fn new(ordinal: u64) -> Self {
        RevisionId {
            ordinal,
            label: format!("r{ordinal}"),
        }
    }

    pub fn with_label(ordinal: u64, label: impl Into<String>) -> Self {
        RevisionId {
            ordinal,
            label: label.into(),
        }
    }

    /// Accepts `r123` or `123`.
    pub fn parse(text: &str) -> Result<Self> {
        let digits = text.strip_prefix('r').unwrap_or(text);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::parse(
                "revision",
                format!("{text:?} is not r<number>"),
            ));
        }
        let ordinal = digits
            .parse()
            .map_err(|_| Error::parse("revision", format!("{text:?} overflows")))?;
        Ok(RevisionId::with_label(ordinal, text))
    }

    pub fn ordinal(&self) -> u64 {
        self.ordinal
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The revision immediately preceding this one (`r_fixed - 1`).
    pub fn predecessor(&self) -> Option<RevisionId> {
        self.ordinal.checked_sub(1).map(RevisionId::new)
    }
}

impl fmt::Display for RevisionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl PartialEq for RevisionId {
    fn eq(&self, other: &Self) -> bool {
        self.ordinal == other.ordinal
    }
}

impl Eq for RevisionId {}

impl Hash for RevisionId {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.ordinal.hash(state);
    }
}

impl Ord for RevisionId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ordinal.cmp(&other.ordinal)
    }
}

impl PartialOrd for RevisionId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for RevisionId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label)
    }
}

impl<'de> Deserialize<'de> for RevisionId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        RevisionId::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub version: VersionId,
    pub release_date: NaiveDate,
    /// Revision reference understood by the repository adapter (`r6100`, a tag, a hash).
    pub snapshot_rev: String,
    pub official: bool,
}

/// Released versions in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionCatalog {
    entries: Vec<CatalogEntry>,
}

#[derive(Deserialize, Serialize)]
struct RawCatalogEntry {
    release_date: NaiveDate,
    snapshot_rev: String,
    #[serde(default = "default_official")]
    official: bool,
}

fn default_official() -> bool {
    true
}

impl VersionCatalog {
    pub fn new(mut entries: Vec<CatalogEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.version.cmp(&b.version));
        for pair in entries.windows(2) {
            if pair[0].version == pair[1].version {
                return Err(Error::Invalid(format!(
                    "catalog lists {} and {} which denote the same version",
                    pair[0].version, pair[1].version
                )));
            }
            if pair[1].release_date < pair[0].release_date {
                return Err(Error::Invalid(format!(
                    "release date of {} precedes that of {}",
                    pair[1].version, pair[0].version
                )));
            }
        }
        if !entries.iter().any(|e| e.official) {
            return Err(Error::Invalid("catalog has no official version".into()));
        }
        Ok(VersionCatalog { entries })
    }

    /// Reads the JSON form: `{"1.0": {"release_date": "...", "snapshot_rev": "...", "official": true}, ...}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, RawCatalogEntry> = serde_json::from_str(text)?;
        let entries = raw
            .into_iter()
            .map(|(version, e)| {
                Ok(CatalogEntry {
                    version: VersionId::parse(&version)?,
                    release_date: e.release_date,
                    snapshot_rev: e.snapshot_rev,
                    official: e.official,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        VersionCatalog::new(entries)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut map = serde_json::Map::new();
        for e in &self.entries {
            let raw = RawCatalogEntry {
                release_date: e.release_date,
                snapshot_rev: e.snapshot_rev.clone(),
                official: e.official,
            };
            map.insert(e.version.label().to_string(), serde_json::to_value(raw)?);
        }
        Ok(serde_json::to_string_pretty(&map)?)
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn official(&self) -> impl Iterator<Item = &CatalogEntry> + '_ {
        self.entries.iter().filter(|e| e.official)
    }

    pub fn official_versions(&self) -> Vec<VersionId> {
        self.official().map(|e| e.version.clone()).collect()
    }

    /// The first official release; the reference point for "foundational".
    pub fn first(&self) -> &VersionId {
        &self
            .official()
            .next()
            .expect("catalog has an official version")
            .version
    }

    pub fn get(&self, version: &VersionId) -> Option<&CatalogEntry> {
        self.entries
            .binary_search_by(|e| e.version.cmp(version))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn is_official(&self, version: &VersionId) -> bool {
        self.get(version).is_some_and(|e| e.official)
    }

    /// Maps a claimed version onto the official catalog: an exact match, or the
    /// greatest official version below it (sub-releases such as `3.0.195.24`
    /// belong to `3.0`). `None` when the claim names a non-official release or
    /// precedes every official version.
    pub fn resolve_claim(&self, claimed: &VersionId) -> Option<VersionId> {
        if let Some(e) = self.get(claimed) {
            return e.official.then(|| e.version.clone());
        }
        self.official()
            .take_while(|e| e.version < *claimed)
            .last()
            .map(|e| e.version.clone())
    }
}

/// True iff the catalog's first official version is among `versions`.
pub fn foundational(versions: &BTreeSet<VersionId>, catalog: &VersionCatalog) -> bool {
    versions.contains(catalog.first())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CveRecord {
    pub cve_id: String,
    /// Reported vulnerable versions, already resolved onto official catalog versions.
    pub claimed_versions: BTreeSet<VersionId>,
    pub bug_ids: BTreeSet<u64>,
    /// Publication date, used as the discovery date in time-series analyses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<NaiveDate>,
}

/// One entry of `claimed_versions` in the dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClaimSpec {
    Version(String),
    Before { before: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawCveRecord {
    pub cve_id: String,
    pub claimed_versions: Vec<ClaimSpec>,
    #[serde(default)]
    pub bug_ids: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<NaiveDate>,
}

impl RawCveRecord {
    pub fn resolve(&self, catalog: &VersionCatalog) -> Result<CveRecord> {
        if self.claimed_versions.is_empty() {
            return Err(Error::Invalid(format!("{} claims no version", self.cve_id)));
        }
        let mut claimed = BTreeSet::new();
        for spec in &self.claimed_versions {
            match spec {
                ClaimSpec::Version(text) => {
                    let v = VersionId::parse(text)?;
                    if let Some(resolved) = catalog.resolve_claim(&v) {
                        claimed.insert(resolved);
                    } else if catalog.get(&v).is_none() {
                        return Err(Error::Invalid(format!(
                            "{}: claimed version {v} precedes the catalog",
                            self.cve_id
                        )));
                    }
                }
                ClaimSpec::Before { before } => {
                    let bound = VersionId::parse(before)?;
                    claimed.extend(
                        catalog
                            .official()
                            .filter(|e| e.version < bound)
                            .map(|e| e.version.clone()),
                    );
                }
            }
        }
        if claimed.is_empty() {
            return Err(Error::Invalid(format!(
                "{} claims no official catalog version",
                self.cve_id
            )));
        }
        Ok(CveRecord {
            cve_id: self.cve_id.clone(),
            claimed_versions: claimed,
            bug_ids: self.bug_ids.iter().copied().collect(),
            published: self.published,
        })
    }
}

impl CveRecord {
    pub fn to_raw(&self) -> RawCveRecord {
        RawCveRecord {
            cve_id: self.cve_id.clone(),
            claimed_versions: self
                .claimed_versions
                .iter()
                .map(|v| ClaimSpec::Version(v.label().to_string()))
                .collect(),
            bug_ids: self.bug_ids.iter().copied().collect(),
            published: self.published,
        }
    }
}

/// Reads a JSON-lines dataset, resolving claims against `catalog`.
pub fn read_dataset(reader: impl BufRead, catalog: &VersionCatalog) -> Result<Vec<CveRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawCveRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse("dataset", format!("line {}: {e}", i + 1)))?;
        if !seen.insert(raw.cve_id.clone()) {
            return Err(Error::Invalid(format!("duplicate CVE id {}", raw.cve_id)));
        }
        out.push(raw.resolve(catalog)?);
    }
    Ok(out)
}

pub fn write_dataset(records: &[CveRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r.to_raw())?);
        out.push('\n');
    }
    Ok(out)
}

/// A non-trivial line removed by a fix, annotated with the revision that introduced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResponsibleLine {
    pub file: String,
    /// Line number in the pre-fix revision.
    pub line_no: usize,
    pub content: String,
    pub origin_rev: RevisionId,
    pub fix_rev: RevisionId,
}

/// A file whose fix only added code; every version still carrying the
/// pre-fix revision of the file is considered vulnerable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AdditionOnlyMarker {
    pub file: String,
    pub pre_fix_rev: RevisionId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fragment {
    Line(ResponsibleLine),
    Marker(AdditionOnlyMarker),
}

impl Fragment {
    pub fn file(&self) -> &str {
        match self {
            Fragment::Line(l) => &l.file,
            Fragment::Marker(m) => &m.file,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentEvidence {
    pub fragment: Fragment,
    pub matched_versions: BTreeSet<VersionId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnverifiableReason {
    /// The record links no bug.
    NoBug,
    /// Bugs are linked but no fix commit mentions any of them.
    NoCommit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum VerificationStatus {
    Verified { versions: BTreeSet<VersionId> },
    Unverifiable { reason: UnverifiableReason },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub cve_id: String,
    #[serde(flatten)]
    pub status: VerificationStatus,
    #[serde(default)]
    pub evidence: Vec<FragmentEvidence>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl VerificationResult {
    /// `V'(cve)`, or `None` for an unverifiable record.
    pub fn verified_versions(&self) -> Option<&BTreeSet<VersionId>> {
        match &self.status {
            VerificationStatus::Verified { versions } => Some(versions),
            VerificationStatus::Unverifiable { .. } => None,
        }
    }

    pub fn is_verifiable(&self) -> bool {
        self.verified_versions().is_some()
    }
}
