use std::collections::BTreeSet;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RevisionId;
use crate::vcs::CommitLogEntry;

/// Commit-message patterns linking commits to bug-tracker IDs. Capture group 1
/// of each pattern holds one ID or a comma-separated list of IDs.
#[derive(Debug, Clone)]
pub struct PatternSet {
    patterns: Vec<Regex>,
}

pub const CHROMIUM_PATTERNS: [&str; 2] = [r"BUG=(\d+(?:,\d+)*)", r"BUG=https?://crbug\.com/(\d+)"];

impl Default for PatternSet {
    fn default() -> Self {
        PatternSet::new(CHROMIUM_PATTERNS).expect("built-in patterns compile")
    }
}

impl PatternSet {
    pub fn new<I, S>(patterns: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let patterns = patterns
            .into_iter()
            .map(|p| {
                let re = Regex::new(p.as_ref())
                    .map_err(|e| Error::Config(format!("pattern {:?}: {e}", p.as_ref())))?;
                if re.captures_len() < 2 {
                    return Err(Error::Config(format!(
                        "pattern {:?} has no capture group for the bug id",
                        p.as_ref()
                    )));
                }
                Ok(re)
            })
            .collect::<Result<Vec<_>>>()?;
        if patterns.is_empty() {
            return Err(Error::Config("empty pattern set".into()));
        }
        Ok(PatternSet { patterns })
    }

    /// Reads one pattern per line; blank lines and `#` comments are skipped.
    pub fn from_lines(text: &str) -> Result<Self> {
        PatternSet::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn as_strs(&self) -> Vec<&str> {
        self.patterns.iter().map(Regex::as_str).collect()
    }

    /// Every bug ID mentioned through a pattern; `None` when no pattern matches.
    pub fn extract(&self, message: &str) -> Option<BTreeSet<u64>> {
        let mut ids = BTreeSet::new();
        let mut matched = false;
        for re in &self.patterns {
            for caps in re.captures_iter(message) {
                matched = true;
                if let Some(group) = caps.get(1) {
                    ids.extend(
                        group
                            .as_str()
                            .split(',')
                            .filter_map(|n| n.trim().parse::<u64>().ok()),
                    );
                }
            }
        }
        matched.then_some(ids)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixCommit {
    pub revision: RevisionId,
    pub commit_id: String,
    pub bug_ids: BTreeSet<u64>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningSummary {
    pub fixes: Vec<FixCommit>,
    pub commits_scanned: usize,
    /// Commits with no pattern match.
    pub unmatched: usize,
    /// Commits matching a pattern but naming only bugs outside the dataset.
    pub foreign_only: usize,
}

/// Step 1: commits whose messages name, through a pattern, a bug of the dataset.
pub fn mine_fix_commits(
    log: &[CommitLogEntry],
    bug_ids: &BTreeSet<u64>,
    patterns: &PatternSet,
) -> MiningSummary {
    let mut summary = MiningSummary {
        commits_scanned: log.len(),
        ..Default::default()
    };
    for entry in log {
        let Some(ids) = patterns.extract(&entry.message) else {
            summary.unmatched += 1;
            continue;
        };
        let ids: BTreeSet<u64> = ids.intersection(bug_ids).copied().collect();
        if ids.is_empty() {
            summary.foreign_only += 1;
            continue;
        }
        summary.fixes.push(FixCommit {
            revision: entry.revision.clone(),
            commit_id: entry.id.clone(),
            bug_ids: ids,
            files: entry.changed_files.clone(),
        });
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::DateTime;

    fn entry(rev: u64, message: &str) -> CommitLogEntry {
        CommitLogEntry {
            revision: RevisionId::new(rev),
            id: format!("{rev:040x}"),
            author: "dev".into(),
            timestamp: DateTime::parse_from_rfc3339("2011-08-05T00:00:00+00:00").unwrap(),
            message: message.into(),
            changed_files: vec!["chrome/browser/net/url_fixer_upper.cc".into()],
        }
    }

    #[test]
    fn extracts_chromium_forms() {
        let p = PatternSet::default();
        assert_eq!(
            p.extract("Fix.\nBUG=72492\nTEST=none"),
            Some([72492].into())
        );
        assert_eq!(p.extract("BUG=123,456"), Some([123, 456].into()));
        assert_eq!(
            p.extract("BUG=http://crbug.com/117110"),
            Some([117110].into())
        );
        assert_eq!(p.extract("Fixes the bug 789"), None);
    }

    #[test]
    fn keeps_only_dataset_bugs() {
        let log = vec![
            entry(95731, "Fix the fixer.\n\nBUG=72492"),
            entry(95732, "Unrelated.\nBUG=1,2"),
            entry(95733, "Fixes the bug 789"),
            entry(95734, "Two at once\nBUG=72492,68115,5"),
        ];
        let bugs: BTreeSet<u64> = [72492, 68115, 117110].into();
        let s = mine_fix_commits(&log, &bugs, &PatternSet::default());
        assert_eq!(s.fixes.len(), 2);
        assert_eq!(s.fixes[0].revision, RevisionId::new(95731));
        assert_eq!(s.fixes[0].bug_ids, [72492].into());
        assert_eq!(s.fixes[1].bug_ids, [68115, 72492].into());
        assert_eq!((s.unmatched, s.foreign_only, s.commits_scanned), (1, 1, 4));
        assert!(!s.fixes.iter().any(|f| f.bug_ids.contains(&117110)));
    }

    #[test]
    fn custom_patterns() {
        let p = PatternSet::from_lines("# mozilla\n[Bb]ug (\\d+)\n").unwrap();
        assert_eq!(p.extract("Bug 555 - crash"), Some([555].into()));
        assert!(PatternSet::new(["no group"]).is_err());
        assert!(PatternSet::new(["(unclosed"]).is_err());
        assert!(PatternSet::from_lines("").is_err());
    }
}
