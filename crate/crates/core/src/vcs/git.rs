//! Git backend driven through the `git` command-line tool.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::annotate::{parse_git_porcelain, AnnotatedLine};
use super::cache::OutputCache;
use super::diff::{parse_file_diff, DiffOutcome};
use super::log::{parse_git_log, svn_revision, GIT_LOG_FORMAT};
use super::{CommitLogEntry, Vcs};
use crate::error::{Error, Result};
use crate::model::RevisionId;

/// Object id of the empty tree in SHA-1 repositories.
const EMPTY_TREE: &str = "4b825dc642cb6eb9a060e54bf8d69288fbee4904";

/// How commits are mapped onto linear revision ordinals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RevisionNumbering {
    /// 1-based position along the first-parent history.
    #[default]
    Topological,
    /// The Subversion revision recorded in each commit's `git-svn-id:` trailer.
    SvnTrailer,
}

/// Argument templates for each primitive. Placeholders: `{repo}`, `{rev}`,
/// `{from}`, `{to}`, `{file}`, `{ref}`. Output formats must stay those of git.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommandTemplates {
    pub binary: String,
    pub global: Vec<String>,
    pub head: Vec<String>,
    pub log: Vec<String>,
    pub resolve: Vec<String>,
    pub diff: Vec<String>,
    pub annotate: Vec<String>,
    pub list: Vec<String>,
    pub show: Vec<String>,
    pub last_change: Vec<String>,
}

fn args(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for CommandTemplates {
    fn default() -> Self {
        CommandTemplates {
            binary: "git".into(),
            global: args(&["-C", "{repo}", "-c", "core.quotepath=off"]),
            head: args(&["rev-parse", "--verify", "--quiet", "HEAD^{commit}"]),
            log: args(&[
                "log",
                "--reverse",
                "--first-parent",
                "--no-renames",
                "--name-only",
                GIT_LOG_FORMAT,
                "{rev}",
            ]),
            resolve: args(&["rev-parse", "--verify", "--quiet", "{ref}^{commit}"]),
            diff: args(&[
                "diff",
                "--no-color",
                "--no-ext-diff",
                "--no-renames",
                "--src-prefix=a/",
                "--dst-prefix=b/",
                "{from}",
                "{to}",
                "--",
                "{file}",
            ]),
            annotate: args(&["blame", "--porcelain", "{rev}", "--", "{file}"]),
            list: args(&["ls-tree", "-r", "--name-only", "-z", "{rev}"]),
            show: args(&["cat-file", "-p", "{rev}:{file}"]),
            last_change: args(&[
                "log",
                "-1",
                "--first-parent",
                "--format=%H",
                "{rev}",
                "--",
                "{file}",
            ]),
        }
    }
}

struct History {
    entries: Vec<CommitLogEntry>,
    /// (ordinal, commit id), ascending.
    ordinals: Vec<(u64, String)>,
    by_id: HashMap<String, RevisionId>,
}

impl History {
    fn commit_at(&self, rev: &RevisionId) -> Option<&str> {
        let idx = self.ordinals.partition_point(|(o, _)| *o <= rev.ordinal());
        idx.checked_sub(1).map(|i| self.ordinals[i].1.as_str())
    }
}

type Annotation = Arc<Vec<AnnotatedLine>>;

pub struct GitRepository {
    path: PathBuf,
    templates: CommandTemplates,
    numbering: RevisionNumbering,
    cache: OutputCache,
    history: Mutex<Option<Arc<History>>>,
    annotations: Mutex<HashMap<(String, String), Annotation>>,
    trees: Mutex<HashMap<String, Arc<HashSet<String>>>>,
}

impl GitRepository {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let path = path.canonicalize().map_err(|e| Error::io(path, e))?;
        Ok(GitRepository {
            path,
            templates: CommandTemplates::default(),
            numbering: RevisionNumbering::default(),
            cache: OutputCache::disabled(),
            history: Mutex::new(None),
            annotations: Mutex::new(HashMap::new()),
            trees: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_templates(mut self, templates: CommandTemplates) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_numbering(mut self, numbering: RevisionNumbering) -> Self {
        self.numbering = numbering;
        self
    }

    pub fn with_cache(mut self, cache: OutputCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn expand(&self, template: &[String], vars: &[(&str, &str)]) -> Vec<String> {
        let repo = self.path.to_string_lossy();
        self.templates
            .global
            .iter()
            .chain(template)
            .map(|arg| {
                let mut arg = arg.replace("{repo}", &repo);
                for (name, value) in vars {
                    arg = arg.replace(&format!("{{{name}}}"), value);
                }
                arg
            })
            .collect()
    }

    fn command_line(&self, args: &[String]) -> String {
        std::iter::once(self.templates.binary.as_str())
            .chain(args.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn spawn(&self, args: &[String]) -> Result<Output> {
        Command::new(&self.templates.binary)
            .args(args)
            .env("LC_ALL", "C")
            .env("GIT_PAGER", "cat")
            .output()
            .map_err(|e| Error::Vcs {
                command: self.command_line(args),
                diagnostic: format!("could not start: {e}"),
            })
    }

    fn run(&self, args: &[String]) -> Result<Vec<u8>> {
        let out = self.spawn(args)?;
        if !out.status.success() {
            return Err(Error::Vcs {
                command: self.command_line(args),
                diagnostic: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(out.stdout)
    }

    /// Runs a command whose arguments pin immutable objects, through the cache.
    fn run_cached(&self, args: &[String]) -> Result<Vec<u8>> {
        let mut parts = vec![
            self.path.to_string_lossy().into_owned(),
            self.templates.binary.clone(),
        ];
        parts.extend(args.iter().cloned());
        let key = OutputCache::key(&parts);
        self.cache.get_or_insert_with(&key, || self.run(args))
    }

    fn history(&self) -> Result<Arc<History>> {
        let mut guard = self.history.lock().expect("history lock");
        if let Some(h) = guard.as_ref() {
            return Ok(h.clone());
        }
        let head = self.spawn(&self.expand(&self.templates.head, &[]))?;
        let history = if head.status.success() {
            let head = String::from_utf8_lossy(&head.stdout).trim().to_string();
            let out = self.run_cached(&self.expand(&self.templates.log, &[("rev", &head)]))?;
            self.number(parse_git_log(&String::from_utf8_lossy(&out))?)?
        } else if head.stderr.iter().all(u8::is_ascii_whitespace) {
            // no commits yet
            History {
                entries: Vec::new(),
                ordinals: Vec::new(),
                by_id: HashMap::new(),
            }
        } else {
            return Err(Error::Vcs {
                command: self.command_line(&self.expand(&self.templates.head, &[])),
                diagnostic: String::from_utf8_lossy(&head.stderr).trim().to_string(),
            });
        };
        let history = Arc::new(history);
        *guard = Some(history.clone());
        Ok(history)
    }

    fn number(&self, commits: Vec<super::log::RawCommit>) -> Result<History> {
        let mut entries = Vec::with_capacity(commits.len());
        let mut ordinals = Vec::with_capacity(commits.len());
        let mut by_id = HashMap::with_capacity(commits.len());
        let mut last = 0u64;
        for (i, c) in commits.into_iter().enumerate() {
            let ordinal = match self.numbering {
                RevisionNumbering::Topological => i as u64 + 1,
                RevisionNumbering::SvnTrailer => svn_revision(&c.message).ok_or_else(|| {
                    Error::parse(
                        "git log",
                        format!("commit {} has no git-svn-id trailer", c.id),
                    )
                })?,
            };
            if ordinal <= last {
                return Err(Error::parse(
                    "git log",
                    format!("revision numbers not increasing at commit {}", c.id),
                ));
            }
            last = ordinal;
            let revision = RevisionId::new(ordinal);
            ordinals.push((ordinal, c.id.clone()));
            by_id.insert(c.id.clone(), revision.clone());
            entries.push(CommitLogEntry {
                revision,
                id: c.id,
                author: c.author,
                timestamp: c.timestamp,
                message: c.message,
                changed_files: c.files,
            });
        }
        Ok(History {
            entries,
            ordinals,
            by_id,
        })
    }

    fn revision_of(&self, history: &History, id: &str) -> Result<RevisionId> {
        history
            .by_id
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownRevision(id.to_string()))
    }

    /// Native commit id for a revision ordinal, at or before it.
    pub fn commit_id(&self, rev: &RevisionId) -> Result<Option<String>> {
        Ok(self.history()?.commit_at(rev).map(str::to_string))
    }

    /// Whether `file` is in the tree of `commit`; one tree listing per commit.
    fn exists(&self, file: &str, commit: &str) -> Result<bool> {
        if let Some(tree) = self.trees.lock().expect("tree lock").get(commit) {
            return Ok(tree.contains(file));
        }
        let args = self.expand(&self.templates.list, &[("rev", commit)]);
        let out = self.run_cached(&args)?;
        let tree: HashSet<String> = out
            .split(|b| *b == 0)
            .filter(|p| !p.is_empty())
            .map(|p| String::from_utf8_lossy(p).into_owned())
            .collect();
        let found = tree.contains(file);
        self.trees
            .lock()
            .expect("tree lock")
            .insert(commit.to_string(), Arc::new(tree));
        Ok(found)
    }
}

impl Vcs for GitRepository {
    fn log(&self) -> Result<Vec<CommitLogEntry>> {
        Ok(self.history()?.entries.clone())
    }

    fn resolve(&self, reference: &str) -> Result<RevisionId> {
        let history = self.history()?;
        if let Ok(rev) = RevisionId::parse(reference) {
            return match history.commit_at(&rev) {
                Some(_) => Ok(rev),
                None => Err(Error::UnknownRevision(reference.to_string())),
            };
        }
        let args = self.expand(&self.templates.resolve, &[("ref", reference)]);
        let out = self.spawn(&args)?;
        if !out.status.success() {
            return Err(Error::UnknownRevision(reference.to_string()));
        }
        let id = String::from_utf8_lossy(&out.stdout).trim().to_string();
        self.revision_of(&history, &id)
    }

    fn diff(&self, file: &str, from: &RevisionId, to: &RevisionId) -> Result<DiffOutcome> {
        let history = self.history()?;
        let from = history.commit_at(from).unwrap_or(EMPTY_TREE);
        let to = history.commit_at(to).unwrap_or(EMPTY_TREE);
        if from == to {
            return Ok(DiffOutcome::Text(Vec::new()));
        }
        let args = self.expand(
            &self.templates.diff,
            &[("from", from), ("to", to), ("file", file)],
        );
        let out = self.run_cached(&args)?;
        parse_file_diff(&String::from_utf8_lossy(&out))
    }

    fn annotate(&self, file: &str, rev: &RevisionId) -> Result<Vec<AnnotatedLine>> {
        let history = self.history()?;
        let not_found = || Error::NotFound {
            path: file.to_string(),
            rev: rev.to_string(),
        };
        let commit = history.commit_at(rev).ok_or_else(not_found)?;
        let memo_key = (file.to_string(), commit.to_string());
        if let Some(hit) = self.annotations.lock().expect("memo lock").get(&memo_key) {
            return Ok(hit.as_ref().clone());
        }
        if !self.exists(file, commit)? {
            return Err(not_found());
        }
        let args = self.expand(&self.templates.annotate, &[("rev", commit), ("file", file)]);
        let out = self.run_cached(&args)?;
        let lines = parse_git_porcelain(&String::from_utf8_lossy(&out))?
            .into_iter()
            .map(|b| {
                Ok(AnnotatedLine {
                    line_no: b.final_line,
                    origin_rev: self.revision_of(&history, &b.commit)?,
                    author: b.author,
                    text: b.text,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let lines = Arc::new(lines);
        self.annotations
            .lock()
            .expect("memo lock")
            .insert(memo_key, lines.clone());
        Ok(lines.as_ref().clone())
    }

    fn file_revision(&self, file: &str, rev: &RevisionId) -> Result<Option<RevisionId>> {
        let history = self.history()?;
        let Some(commit) = history.commit_at(rev) else {
            return Ok(None);
        };
        if !self.exists(file, commit)? {
            return Ok(None);
        }
        let args = self.expand(
            &self.templates.last_change,
            &[("rev", commit), ("file", file)],
        );
        let out = self.run_cached(&args)?;
        let id = String::from_utf8_lossy(&out).trim().to_string();
        self.revision_of(&history, &id).map(Some)
    }

    fn snapshot(&self, file: &str, rev: &RevisionId) -> Result<Option<String>> {
        let history = self.history()?;
        let Some(commit) = history.commit_at(rev) else {
            return Ok(None);
        };
        if !self.exists(file, commit)? {
            return Ok(None);
        }
        let args = self.expand(&self.templates.show, &[("rev", commit), ("file", file)]);
        let out = self.run_cached(&args)?;
        Ok(Some(String::from_utf8_lossy(&out).into_owned()))
    }
}

impl std::fmt::Debug for GitRepository {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GitRepository")
            .field("path", &self.path)
            .field("numbering", &self.numbering)
            .finish()
    }
}
