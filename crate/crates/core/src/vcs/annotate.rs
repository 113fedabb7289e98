//! Line annotation (blame) formats.
//!
//! The adapter normalizes every backend to one line per source line:
//! `<rev> <author> <text>`, with `<text>` kept verbatim. Git's porcelain blame
//! output is parsed by [`parse_git_porcelain`] and then mapped onto revisions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RevisionId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedLine {
    pub line_no: usize,
    pub origin_rev: RevisionId,
    pub author: String,
    pub text: String,
}

fn author_column(author: &str) -> String {
    if author.is_empty() {
        return "-".to_string();
    }
    author
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect()
}

/// Renders the normalized annotate format. Whitespace inside author names is
/// replaced by `_` so the columns stay unambiguous.
pub fn render_annotate(lines: &[AnnotatedLine]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(l.origin_rev.label());
        out.push(' ');
        out.push_str(&author_column(&l.author));
        out.push(' ');
        out.push_str(&l.text);
        out.push('\n');
    }
    out
}

pub fn parse_annotate(text: &str) -> Result<Vec<AnnotatedLine>> {
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    lines
        .into_iter()
        .enumerate()
        .map(|(i, line)| {
            let mut parts = line.splitn(3, ' ');
            let rev = parts.next().unwrap_or_default();
            let (Some(author), Some(text)) = (parts.next(), parts.next()) else {
                return Err(Error::parse(
                    "annotate",
                    format!(
                        "line {}: expected `<rev> <author> <text>`, got {line:?}",
                        i + 1
                    ),
                ));
            };
            let origin_rev = RevisionId::parse(rev).map_err(|_| {
                Error::parse("annotate", format!("line {}: bad revision {rev:?}", i + 1))
            })?;
            Ok(AnnotatedLine {
                line_no: i + 1,
                origin_rev,
                author: author.to_string(),
                text: text.to_string(),
            })
        })
        .collect()
}

/// One line of `git blame --porcelain` output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlameLine {
    pub commit: String,
    pub final_line: usize,
    pub author: String,
    pub text: String,
}

fn is_hash(s: &str) -> bool {
    (s.len() == 40 || s.len() == 64) && s.bytes().all(|b| b.is_ascii_hexdigit())
}

pub fn parse_git_porcelain(text: &str) -> Result<Vec<BlameLine>> {
    let mut authors: HashMap<String, String> = HashMap::new();
    let mut out = Vec::new();
    let mut current: Option<(String, usize)> = None;
    for (i, line) in text.split('\n').enumerate() {
        if let Some(content) = line.strip_prefix('\t') {
            let Some((commit, final_line)) = current.take() else {
                return Err(Error::parse(
                    "git blame",
                    format!("line {}: content without header", i + 1),
                ));
            };
            let author = authors.get(&commit).cloned().unwrap_or_default();
            out.push(BlameLine {
                commit,
                final_line,
                author,
                text: content.to_string(),
            });
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let first = fields.next().unwrap_or_default();
        if current.is_none() && is_hash(first) {
            let nums: Vec<&str> = fields.collect();
            let final_line = nums
                .get(1)
                .and_then(|n| n.parse().ok())
                .filter(|_| nums.len() == 2 || nums.len() == 3)
                .ok_or_else(|| {
                    Error::parse("git blame", format!("line {}: bad header {line:?}", i + 1))
                })?;
            current = Some((first.to_string(), final_line));
        } else if let Some((commit, _)) = &current {
            if let Some(name) = line.strip_prefix("author ") {
                authors.insert(commit.clone(), name.to_string());
            }
        } else {
            return Err(Error::parse(
                "git blame",
                format!("line {}: unexpected {line:?}", i + 1),
            ));
        }
    }
    if current.is_some() {
        return Err(Error::parse("git blame", "truncated output"));
    }
    for (i, l) in out.iter().enumerate() {
        if l.final_line != i + 1 {
            return Err(Error::parse(
                "git blame",
                format!("line numbers not contiguous at {}", l.final_line),
            ));
        }
    }
    Ok(out)
}
