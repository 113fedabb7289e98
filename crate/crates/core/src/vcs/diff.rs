//! Unified diff parsing, rendering and application.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineTag {
    Context,
    Removed,
    Added,
}

impl LineTag {
    fn prefix(self) -> char {
        match self {
            LineTag::Context => ' ',
            LineTag::Removed => '-',
            LineTag::Added => '+',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HunkLine {
    pub tag: LineTag,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffHunk {
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    pub lines: Vec<HunkLine>,
}

impl DiffHunk {
    /// Removed lines with their line numbers in the old file.
    pub fn removed_lines(&self) -> impl Iterator<Item = (usize, &str)> + '_ {
        let mut old_no = self.old_start;
        self.lines.iter().filter_map(move |l| match l.tag {
            LineTag::Context => {
                old_no += 1;
                None
            }
            LineTag::Removed => {
                old_no += 1;
                Some((old_no - 1, l.text.as_str()))
            }
            LineTag::Added => None,
        })
    }

    fn counts(&self) -> (usize, usize) {
        self.lines.iter().fold((0, 0), |(old, new), l| match l.tag {
            LineTag::Context => (old + 1, new + 1),
            LineTag::Removed => (old + 1, new),
            LineTag::Added => (old, new + 1),
        })
    }

    pub fn is_consistent(&self) -> bool {
        self.counts() == (self.old_len, self.new_len)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    pub old_path: Option<String>,
    pub new_path: Option<String>,
    pub binary: bool,
    pub hunks: Vec<DiffHunk>,
}

/// Result of diffing one file between two revisions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "hunks", rename_all = "snake_case")]
pub enum DiffOutcome {
    Text(Vec<DiffHunk>),
    Binary,
}

impl DiffOutcome {
    pub fn hunks(&self) -> &[DiffHunk] {
        match self {
            DiffOutcome::Text(h) => h,
            DiffOutcome::Binary => &[],
        }
    }
}

fn parse_header(line: &str, line_no: usize) -> Result<(usize, usize, usize, usize)> {
    let bad = || {
        Error::parse(
            "unified diff",
            format!("line {line_no}: bad hunk header {line:?}"),
        )
    };
    let rest = line.strip_prefix("@@ -").ok_or_else(bad)?;
    let end = rest.find(" @@").ok_or_else(bad)?;
    let (old, new) = rest[..end].split_once(" +").ok_or_else(bad)?;
    let range = |s: &str| -> Result<(usize, usize)> {
        let (start, len) = match s.split_once(',') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let start = start.parse().map_err(|_| bad())?;
        let len = match len {
            Some(l) => l.parse().map_err(|_| bad())?,
            None => 1,
        };
        Ok((start, len))
    };
    let (old_start, old_len) = range(old)?;
    let (new_start, new_len) = range(new)?;
    Ok((old_start, old_len, new_start, new_len))
}

fn strip_path(raw: &str) -> Option<String> {
    let path = raw.split('\t').next().unwrap_or(raw).trim_end();
    if path == "/dev/null" {
        return None;
    }
    let path = path
        .strip_prefix("a/")
        .or_else(|| path.strip_prefix("b/"))
        .unwrap_or(path);
    Some(path.to_string())
}

/// Parses a (possibly multi-file) unified diff.
///
/// Hunk bodies are consumed by the counts in their headers, so body lines
/// whose text happens to start with `---` or `@@` are handled correctly.
pub fn parse_patch(text: &str) -> Result<Vec<FileDiff>> {
    let lines: Vec<&str> = text.split('\n').collect();
    let lines = match lines.last() {
        Some(&"") => &lines[..lines.len() - 1],
        _ => &lines[..],
    };
    let mut files: Vec<FileDiff> = Vec::new();
    let mut i = 0;
    // set between a `diff --git` line and the `---` that belongs to it
    let mut git_header_open = false;
    let new_file = |files: &mut Vec<FileDiff>| {
        files.push(FileDiff {
            old_path: None,
            new_path: None,
            binary: false,
            hunks: Vec::new(),
        })
    };
    while i < lines.len() {
        let line = lines[i];
        if let Some(rest) = line.strip_prefix("diff --git ") {
            new_file(&mut files);
            let f = files.last_mut().unwrap();
            if let Some((a, b)) = rest.split_once(" b/") {
                f.old_path = strip_path(a);
                f.new_path = Some(b.to_string());
            }
            git_header_open = true;
            i += 1;
        } else if let Some(rest) = line.strip_prefix("--- ") {
            if !git_header_open {
                new_file(&mut files);
            }
            git_header_open = false;
            files.last_mut().unwrap().old_path = strip_path(rest);
            i += 1;
        } else if let Some(rest) = line.strip_prefix("+++ ") {
            let f = files.last_mut().ok_or_else(|| {
                Error::parse(
                    "unified diff",
                    format!("line {}: `+++` without `---`", i + 1),
                )
            })?;
            f.new_path = strip_path(rest);
            i += 1;
        } else if line.starts_with("Binary files ") || line == "GIT binary patch" {
            if files.is_empty() {
                new_file(&mut files);
            }
            files.last_mut().unwrap().binary = true;
            i += 1;
        } else if line.starts_with("@@ ") {
            if files.is_empty() {
                new_file(&mut files);
            }
            git_header_open = false;
            let (old_start, old_len, new_start, new_len) = parse_header(line, i + 1)?;
            i += 1;
            let mut hunk = DiffHunk {
                old_start,
                old_len,
                new_start,
                new_len,
                lines: Vec::new(),
            };
            let (mut old_left, mut new_left) = (old_len, new_len);
            while old_left > 0 || new_left > 0 {
                let Some(&body) = lines.get(i) else {
                    return Err(Error::parse(
                        "unified diff",
                        format!("hunk {line:?} ends early at end of input"),
                    ));
                };
                i += 1;
                if body.starts_with('\\') {
                    continue;
                }
                let (tag, text) = match body.chars().next() {
                    Some(' ') => (LineTag::Context, &body[1..]),
                    // some tools strip the lone space of an empty context line
                    None => (LineTag::Context, ""),
                    Some('-') => (LineTag::Removed, &body[1..]),
                    Some('+') => (LineTag::Added, &body[1..]),
                    _ => {
                        return Err(Error::parse(
                            "unified diff",
                            format!("line {i}: unexpected hunk line {body:?}"),
                        ))
                    }
                };
                let fits = match tag {
                    LineTag::Context => old_left > 0 && new_left > 0,
                    LineTag::Removed => old_left > 0,
                    LineTag::Added => new_left > 0,
                };
                if !fits {
                    return Err(Error::parse(
                        "unified diff",
                        format!("line {i}: hunk longer than its header: {body:?}"),
                    ));
                }
                if tag != LineTag::Added {
                    old_left -= 1;
                }
                if tag != LineTag::Removed {
                    new_left -= 1;
                }
                hunk.lines.push(HunkLine {
                    tag,
                    text: text.to_string(),
                });
            }
            while lines.get(i).is_some_and(|l| l.starts_with('\\')) {
                i += 1;
            }
            files.last_mut().unwrap().hunks.push(hunk);
        } else if files.last().is_some_and(|f| !f.hunks.is_empty())
            && (line.starts_with(' ') || line.starts_with('+') || line.starts_with('-'))
        {
            return Err(Error::parse(
                "unified diff",
                format!("line {}: hunk longer than its header: {line:?}", i + 1),
            ));
        } else {
            // extended headers: index, mode, similarity, plain text preamble
            i += 1;
        }
    }
    Ok(files)
}

/// Parses the diff of a single file; an empty diff yields no hunks.
pub fn parse_file_diff(text: &str) -> Result<DiffOutcome> {
    let files = parse_patch(text)?;
    match files.len() {
        0 => Ok(DiffOutcome::Text(Vec::new())),
        1 => {
            let f = files.into_iter().next().unwrap();
            Ok(if f.binary {
                DiffOutcome::Binary
            } else {
                DiffOutcome::Text(f.hunks)
            })
        }
        n => Err(Error::parse(
            "unified diff",
            format!("expected one file, found {n}"),
        )),
    }
}

fn render_range(start: usize, len: usize) -> String {
    if len == 1 {
        start.to_string()
    } else {
        format!("{start},{len}")
    }
}

pub fn render_hunk(hunk: &DiffHunk, out: &mut String) {
    let _ = writeln!(
        out,
        "@@ -{} +{} @@",
        render_range(hunk.old_start, hunk.old_len),
        render_range(hunk.new_start, hunk.new_len)
    );
    for l in &hunk.lines {
        out.push(l.tag.prefix());
        out.push_str(&l.text);
        out.push('\n');
    }
}

pub fn render_file_diff(diff: &FileDiff) -> String {
    let mut out = String::new();
    let path = |p: &Option<String>, side: &str| match p {
        Some(p) => format!("{side}/{p}"),
        None => "/dev/null".to_string(),
    };
    let _ = writeln!(out, "--- {}", path(&diff.old_path, "a"));
    let _ = writeln!(out, "+++ {}", path(&diff.new_path, "b"));
    if diff.binary {
        out.push_str("Binary files differ\n");
    }
    for h in &diff.hunks {
        render_hunk(h, &mut out);
    }
    out
}

fn split_lines(text: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    lines
}

/// Applies `hunks` to `old`, checking every context and removed line.
pub fn apply_hunks(old: &str, hunks: &[DiffHunk]) -> Result<String> {
    let old_lines = split_lines(old);
    let mut out: Vec<&str> = Vec::with_capacity(old_lines.len());
    let mut cursor = 0usize;
    for h in hunks {
        let start = if h.old_len == 0 {
            h.old_start
        } else {
            h.old_start.saturating_sub(1)
        };
        if start < cursor || start > old_lines.len() {
            return Err(Error::Analysis(format!(
                "hunk at old line {} does not fit the file",
                h.old_start
            )));
        }
        out.extend_from_slice(&old_lines[cursor..start]);
        cursor = start;
        for l in &h.lines {
            match l.tag {
                LineTag::Context | LineTag::Removed => {
                    if old_lines.get(cursor) != Some(&l.text.as_str()) {
                        return Err(Error::Analysis(format!(
                            "old line {} does not match {:?}",
                            cursor + 1,
                            l.text
                        )));
                    }
                    if l.tag == LineTag::Context {
                        out.push(old_lines[cursor]);
                    }
                    cursor += 1;
                }
                LineTag::Added => out.push(&l.text),
            }
        }
    }
    out.extend_from_slice(&old_lines[cursor..]);
    Ok(out.iter().flat_map(|l| [*l, "\n"]).collect())
}
