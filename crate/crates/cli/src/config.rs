use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use vulnver::mining::PatternSet;
use vulnver::vcs::{CommandTemplates, RevisionNumbering};
use vulnver::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Numbering {
    /// Commits numbered 1, 2, ... along the first-parent history.
    Topological,
    /// Revision numbers read from `git-svn-id` trailers.
    SvnTrailer,
}

impl From<Numbering> for RevisionNumbering {
    fn from(n: Numbering) -> Self {
        match n {
            Numbering::Topological => RevisionNumbering::Topological,
            Numbering::SvnTrailer => RevisionNumbering::SvnTrailer,
        }
    }
}

/// Options shared by the pipeline subcommands.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Repository to mine.
    #[arg(long, global = true)]
    pub repo: Option<PathBuf>,

    /// CVE records, one JSON object per line.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,

    /// Version catalog (JSON).
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,

    /// Bug-id patterns, one regular expression per line.
    #[arg(long, global = true)]
    pub patterns: Option<PathBuf>,

    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Cache for raw version-control output.
    #[arg(long, global = true, env = "VULNVER_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,

    /// Version-control executable.
    #[arg(long, global = true, env = "VULNVER_VCS_BIN")]
    pub vcs_bin: Option<String>,

    /// JSON file overriding the version-control command templates.
    #[arg(long, global = true)]
    pub vcs_templates: Option<PathBuf>,

    /// How commits are mapped to revision numbers.
    #[arg(long, global = true, value_enum, default_value = "topological")]
    pub numbering: Numbering,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "vulnver-out")]
    pub out: PathBuf,

    /// First month after release at which VDM fits start.
    #[arg(long, global = true, default_value_t = 6)]
    pub from_month: usize,

    /// Count only CVEs that claim a version in its verified set.
    #[arg(long, global = true)]
    pub strict_er: bool,

    /// Last day of the discovery series; defaults to the latest publication date.
    #[arg(long, global = true)]
    pub horizon_date: Option<NaiveDate>,

    /// Median error rate under the null hypothesis.
    #[arg(long, global = true, default_value_t = 0.05)]
    pub mu0: f64,

    /// Family-wise significance level.
    #[arg(long, global = true, default_value_t = 0.05)]
    pub alpha: f64,
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub repo: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub patterns: PatternSet,
    pub jobs: usize,
    pub cache_dir: Option<PathBuf>,
    pub templates: CommandTemplates,
    pub numbering: Numbering,
    pub out: PathBuf,
    pub from_month: usize,
    pub strict_er: bool,
    pub horizon_date: Option<NaiveDate>,
    pub mu0: f64,
    pub alpha: f64,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?)
        .map_err(|_| Error::parse("input", format!("{} is not UTF-8", path.display())))
}

pub fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256(&read(path)?))
}

impl RunConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self> {
        let jobs = match args.jobs {
            Some(0) => return Err(Error::Config("--jobs must be at least 1".into())),
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        if args.from_month == 0 {
            return Err(Error::Config("--from-month counts from 1".into()));
        }
        if !(args.alpha > 0.0 && args.alpha < 1.0) {
            return Err(Error::Config(format!(
                "--alpha {} is not in (0, 1)",
                args.alpha
            )));
        }
        for (flag, path) in [
            ("--repo", &args.repo),
            ("--dataset", &args.dataset),
            ("--catalog", &args.catalog),
            ("--patterns", &args.patterns),
            ("--vcs-templates", &args.vcs_templates),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "{flag} {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        let patterns = match &args.patterns {
            Some(p) => PatternSet::from_lines(&read_text(p)?)?,
            None => PatternSet::default(),
        };
        let mut templates = match &args.vcs_templates {
            Some(p) => serde_json::from_str(&read_text(p)?)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => CommandTemplates::default(),
        };
        if let Some(bin) = &args.vcs_bin {
            templates.binary = bin.clone();
        }
        Ok(RunConfig {
            repo: args.repo.clone(),
            dataset: args.dataset.clone(),
            catalog: args.catalog.clone(),
            patterns,
            jobs,
            cache_dir: args.cache_dir.clone(),
            templates,
            numbering: args.numbering,
            out: args.out.clone(),
            from_month: args.from_month,
            strict_er: args.strict_er,
            horizon_date: args.horizon_date,
            mu0: args.mu0,
            alpha: args.alpha,
        })
    }

    /// Settings that change what the repository stages produce. The
    /// executable path is left out: it locates the tool, it does not change
    /// its output.
    pub fn repository_settings(&self) -> serde_json::Value {
        let mut templates = self.templates.clone();
        templates.binary = String::new();
        json!({
            "patterns": self.patterns.as_strs(),
            "numbering": self.numbering,
            "templates": templates,
        })
    }

    pub fn analysis_settings(&self) -> serde_json::Value {
        json!({
            "strict_er": self.strict_er,
            "horizon_date": self.horizon_date,
            "mu0": self.mu0,
            "alpha": self.alpha,
            "from_month": self.from_month,
        })
    }

    /// Digest of every setting that can change an artifact.
    pub fn hash(&self) -> String {
        let all = json!({
            "repository": self.repository_settings(),
            "analysis": self.analysis_settings(),
        });
        sha256(all.to_string().as_bytes())
    }

    pub fn require<'a>(&self, flag: &str, value: &'a Option<PathBuf>) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("{flag} is required for this command")))
    }
}
