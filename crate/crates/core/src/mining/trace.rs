use serde::{Deserialize, Serialize};

use super::patterns::FixCommit;
use crate::error::{Error, Result};
use crate::model::{AdditionOnlyMarker, ResponsibleLine, RevisionId};
use crate::vcs::{DiffOutcome, Vcs};

/// Empty lines and lines holding a lone brace carry no evidence.
pub fn is_trivial(line: &str) -> bool {
    matches!(line.trim(), "" | "{" | "}")
}

/// Responsible fragments recovered from one fix commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Backtrace {
    pub fix_rev: RevisionId,
    pub bug_ids: Vec<u64>,
    pub lines: Vec<ResponsibleLine>,
    pub markers: Vec<AdditionOnlyMarker>,
    /// Some file could not be traced (binary, unparseable, annotate failure).
    pub partial: bool,
    pub warnings: Vec<String>,
}

/// Step 2: diff every changed file between `r_fixed - 1` and `r_fixed`, and
/// annotate the removed non-trivial lines at `r_fixed - 1`.
pub fn backtrace(repo: &dyn Vcs, commit: &FixCommit) -> Result<Backtrace> {
    let fix_rev = commit.revision.clone();
    let pre_fix = fix_rev
        .predecessor()
        .ok_or_else(|| Error::Invalid(format!("fix revision {fix_rev} has no predecessor")))?;
    let mut out = Backtrace {
        fix_rev: fix_rev.clone(),
        bug_ids: commit.bug_ids.iter().copied().collect(),
        lines: Vec::new(),
        markers: Vec::new(),
        partial: false,
        warnings: Vec::new(),
    };
    for file in &commit.files {
        let hunks = match repo.diff(file, &pre_fix, &fix_rev) {
            Ok(DiffOutcome::Text(hunks)) => hunks,
            Ok(DiffOutcome::Binary) => {
                out.partial = true;
                out.warnings
                    .push(format!("{fix_rev}: {file} is binary, skipped"));
                continue;
            }
            Err(e @ Error::Parse { .. }) => {
                out.partial = true;
                out.warnings.push(format!("{fix_rev}: {file}: {e}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        let removed: Vec<(usize, String)> = hunks
            .iter()
            .flat_map(|h| h.removed_lines())
            .filter(|(_, text)| !is_trivial(text))
            .map(|(n, text)| (n, text.trim_end().to_string()))
            .collect();
        if removed.is_empty() {
            if repo.file_revision(file, &pre_fix)?.is_some() {
                out.markers.push(AdditionOnlyMarker {
                    file: file.clone(),
                    pre_fix_rev: pre_fix.clone(),
                });
            } else if !hunks.is_empty() {
                out.warnings.push(format!(
                    "{fix_rev}: {file} is created by the fix; nothing to trace"
                ));
            }
            continue;
        }
        let annotated = match repo.annotate(file, &pre_fix) {
            Ok(a) => a,
            Err(e @ (Error::Parse { .. } | Error::NotFound { .. } | Error::UnknownRevision(_))) => {
                out.partial = true;
                out.warnings
                    .push(format!("{fix_rev}: annotate {file}: {e}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        for (line_no, content) in removed {
            let Some(ann) = annotated.get(line_no - 1) else {
                out.partial = true;
                out.warnings.push(format!(
                    "{fix_rev}: {file}:{line_no} beyond annotated length {}",
                    annotated.len()
                ));
                continue;
            };
            if ann.text.trim_end() != content {
                out.warnings.push(format!(
                    "{fix_rev}: {file}:{line_no} differs between diff and annotate"
                ));
            }
            out.lines.push(ResponsibleLine {
                file: file.clone(),
                line_no,
                content,
                origin_rev: ann.origin_rev.clone(),
                fix_rev: fix_rev.clone(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_lines() {
        for t in ["", "   ", "{", "  }  ", "\t{"] {
            assert!(is_trivial(t), "{t:?}");
        }
        for t in ["{}", "};", "// }", "x"] {
            assert!(!is_trivial(t), "{t:?}");
        }
    }
}
