use std::sync::OnceLock;

use chrono::{DateTime, FixedOffset};
use regex::Regex;

use crate::error::{Error, Result};

pub const RECORD_SEP: char = '\x1e';
pub const FIELD_SEP: char = '\x1f';

/// `--format` argument matching [`parse_git_log`].
pub const GIT_LOG_FORMAT: &str = "--format=%x1e%H%x1f%an%x1f%aI%x1f%B%x1f";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCommit {
    pub id: String,
    pub author: String,
    pub timestamp: DateTime<FixedOffset>,
    pub message: String,
    pub files: Vec<String>,
}

/// Parses `git log --name-only` output produced with [`GIT_LOG_FORMAT`].
pub fn parse_git_log(text: &str) -> Result<Vec<RawCommit>> {
    let mut chunks = text.split(RECORD_SEP);
    let preamble = chunks.next().unwrap_or_default();
    if !preamble.trim().is_empty() {
        return Err(Error::parse(
            "git log",
            format!("unexpected preamble {preamble:?}"),
        ));
    }
    chunks
        .map(|chunk| {
            let fields: Vec<&str> = chunk.splitn(5, FIELD_SEP).collect();
            let [id, author, date, body, rest] = fields[..] else {
                return Err(Error::parse(
                    "git log",
                    format!("truncated record {chunk:?}"),
                ));
            };
            let timestamp = DateTime::parse_from_rfc3339(date)
                .map_err(|e| Error::parse("git log", format!("date {date:?}: {e}")))?;
            let files = rest
                .split('\n')
                .map(str::trim_end)
                .filter(|l| !l.is_empty())
                .map(|l| l.replace('\\', "/"))
                .collect();
            Ok(RawCommit {
                id: id.to_string(),
                author: author.to_string(),
                timestamp,
                message: body.trim_end_matches('\n').to_string(),
                files,
            })
        })
        .collect()
}

/// Extracts the Subversion revision from a `git-svn-id:` trailer.
pub fn svn_revision(message: &str) -> Option<u64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?m)^git-svn-id: \S+@(\d+)(?:\s|$)").unwrap());
    re.captures(message).and_then(|c| c[1].parse().ok())
}
