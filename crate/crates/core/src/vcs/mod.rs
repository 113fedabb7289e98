//! Read-only access to a version-control repository.
//!
//! Four primitives are needed by the pipeline: the commit log, per-file diffs
//! between two revisions, line annotation (blame) and per-file snapshot
//! queries. [`GitRepository`] implements them by shelling out to `git`; the
//! textual outputs are handled by the parsers in [`diff`], [`annotate`] and
//! [`log`].

pub mod annotate;
pub mod cache;
pub mod diff;
pub mod git;
pub mod log;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::RevisionId;

pub use annotate::AnnotatedLine;
pub use diff::{DiffHunk, DiffOutcome, FileDiff, HunkLine, LineTag};
pub use git::{CommandTemplates, GitRepository, RevisionNumbering};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitLogEntry {
    pub revision: RevisionId,
    /// Native commit identifier (a hash for git).
    pub id: String,
    pub author: String,
    pub timestamp: DateTime<FixedOffset>,
    pub message: String,
    pub changed_files: Vec<String>,
}

/// The operations the mining pipeline needs from a repository.
///
/// Revision arguments are ordinals; a revision that names no commit (sparse
/// numbering) resolves to the latest commit at or before it.
pub trait Vcs: Sync {
    /// All commits in ascending revision order.
    fn log(&self) -> Result<Vec<CommitLogEntry>>;

    /// Resolves a catalog reference (`r1234`, a tag, a commit id).
    fn resolve(&self, reference: &str) -> Result<RevisionId>;

    fn diff(&self, file: &str, from: &RevisionId, to: &RevisionId) -> Result<DiffOutcome>;

    /// Fails with [`crate::Error::NotFound`] when `file` is absent at `rev`.
    fn annotate(&self, file: &str, rev: &RevisionId) -> Result<Vec<AnnotatedLine>>;

    /// Last revision at or before `rev` that modified `file`, `None` if the file
    /// does not exist at `rev`.
    fn file_revision(&self, file: &str, rev: &RevisionId) -> Result<Option<RevisionId>>;

    /// File content at `rev`, `None` if absent.
    fn snapshot(&self, file: &str, rev: &RevisionId) -> Result<Option<String>>;
}
