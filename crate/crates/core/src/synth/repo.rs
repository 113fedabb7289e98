//! Builds linear git histories in one `git fast-import` pass.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::process::{Command, Stdio};

use crate::error::{Error, Result};

/// An in-memory working tree whose commits are streamed to `git fast-import`.
#[derive(Debug, Default)]
pub struct HistoryWriter {
    files: BTreeMap<String, Vec<String>>,
    dirty: BTreeSet<String>,
    deleted: BTreeSet<String>,
    stream: String,
    commits: usize,
    tags: Vec<(String, usize)>,
}

impl HistoryWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn commits(&self) -> usize {
        self.commits
    }

    pub fn file(&self, path: &str) -> Option<&[String]> {
        self.files.get(path).map(Vec::as_slice)
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    /// Mutable access to a file's lines; creates the file when missing.
    pub fn edit(&mut self, path: &str) -> &mut Vec<String> {
        self.deleted.remove(path);
        self.dirty.insert(path.to_string());
        self.files.entry(path.to_string()).or_default()
    }

    pub fn write_file(&mut self, path: &str, lines: Vec<String>) {
        *self.edit(path) = lines;
    }

    pub fn delete(&mut self, path: &str) {
        if self.files.remove(path).is_some() {
            self.dirty.remove(path);
            self.deleted.insert(path.to_string());
        }
    }

    /// Records a commit of every pending change; returns its 1-based position.
    pub fn commit(&mut self, author: &str, epoch_seconds: i64, message: &str) -> usize {
        self.commits += 1;
        let mark = self.commits;
        let ident = format!(
            "{author} <{}@example.org> {epoch_seconds} +0000",
            author.replace(' ', ".")
        );
        let _ = writeln!(self.stream, "commit refs/heads/main");
        let _ = writeln!(self.stream, "mark :{mark}");
        let _ = writeln!(self.stream, "author {ident}");
        let _ = writeln!(self.stream, "committer {ident}");
        let _ = writeln!(self.stream, "data {}", message.len());
        self.stream.push_str(message);
        self.stream.push('\n');
        for path in std::mem::take(&mut self.deleted) {
            let _ = writeln!(self.stream, "D {path}");
        }
        for path in std::mem::take(&mut self.dirty) {
            let lines = &self.files[&path];
            let mut body = lines.join("\n");
            if !lines.is_empty() {
                body.push('\n');
            }
            let _ = writeln!(self.stream, "M 100644 inline {path}");
            let _ = writeln!(self.stream, "data {}", body.len());
            self.stream.push_str(&body);
            self.stream.push('\n');
        }
        self.stream.push('\n');
        mark
    }

    /// Tags the most recent commit.
    pub fn tag(&mut self, name: &str) {
        self.tags.push((name.to_string(), self.commits));
    }

    /// Initializes a repository at `dir` and imports the history.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        run_git(dir, &["init", "--quiet"], None)?;
        run_git(dir, &["symbolic-ref", "HEAD", "refs/heads/main"], None)?;
        let mut stream = self.stream.clone();
        for (name, mark) in &self.tags {
            let _ = writeln!(stream, "reset refs/tags/{name}\nfrom :{mark}\n");
        }
        run_git(
            dir,
            &["fast-import", "--quiet", "--done"],
            Some(stream + "done\n"),
        )?;
        Ok(())
    }
}

fn run_git(dir: &Path, args: &[&str], stdin: Option<String>) -> Result<()> {
    let command = format!("git {}", args.join(" "));
    let mut child = Command::new("git")
        .arg("-C")
        .arg(dir)
        .args(args)
        .env("LC_ALL", "C")
        .stdin(if stdin.is_some() {
            Stdio::piped()
        } else {
            Stdio::null()
        })
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Vcs {
            command: command.clone(),
            diagnostic: format!("could not start: {e}"),
        })?;
    if let Some(input) = stdin {
        let mut pipe = child.stdin.take().expect("piped stdin");
        pipe.write_all(input.as_bytes())
            .map_err(|e| Error::io(dir, e))?;
    }
    let out = child.wait_with_output().map_err(|e| Error::io(dir, e))?;
    if !out.status.success() {
        return Err(Error::Vcs {
            command,
            diagnostic: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        });
    }
    Ok(())
}
