use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::model::{Fragment, RevisionId};
use crate::vcs::Vcs;

/// Step 3 for one snapshot: which fragments are present.
///
/// A responsible line is present when the snapshot's annotation holds a line
/// with the same origin revision and the same text (trailing whitespace
/// ignored). An addition-only marker is present when the file's last change
/// at the snapshot is no later than the pre-fix revision. Returns the indices
/// of present fragments, ascending.
pub fn scan_snapshot(
    repo: &dyn Vcs,
    snapshot: &RevisionId,
    fragments: &[&Fragment],
) -> Result<Vec<usize>> {
    let mut present = Vec::new();
    let mut by_file: Vec<&str> = fragments.iter().map(|f| f.file()).collect();
    by_file.sort_unstable();
    by_file.dedup();
    for file in by_file {
        let wanted: Vec<(usize, &Fragment)> = fragments
            .iter()
            .enumerate()
            .filter(|(_, f)| f.file() == file)
            .map(|(i, f)| (i, *f))
            .collect();
        if wanted.iter().any(|(_, f)| matches!(f, Fragment::Line(_))) {
            let annotated = match repo.annotate(file, snapshot) {
                Ok(a) => a,
                Err(Error::NotFound { .. }) => Vec::new(),
                Err(e) => return Err(e),
            };
            let lines: HashSet<(u64, &str)> = annotated
                .iter()
                .map(|a| (a.origin_rev.ordinal(), a.text.trim_end()))
                .collect();
            for (i, f) in &wanted {
                if let Fragment::Line(l) = f {
                    if lines.contains(&(l.origin_rev.ordinal(), l.content.as_str())) {
                        present.push(*i);
                    }
                }
            }
        }
        if wanted.iter().any(|(_, f)| matches!(f, Fragment::Marker(_))) {
            let last_change = repo.file_revision(file, snapshot)?;
            for (i, f) in &wanted {
                if let Fragment::Marker(m) = f {
                    if last_change.as_ref().is_some_and(|r| r <= &m.pre_fix_rev) {
                        present.push(*i);
                    }
                }
            }
        }
    }
    present.sort_unstable();
    Ok(present)
}
