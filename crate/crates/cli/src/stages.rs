use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use vulnver::analysis::{
    foundational_report, metrics_table, write_foundational_csv, write_metrics_csv, ErMode,
};
use vulnver::mining::{self, Backtrace, FixCommit, MiningSummary, ThreadPool};
use vulnver::model::{
    read_dataset, CveRecord, VerificationResult, VerificationStatus, VersionCatalog,
};
use vulnver::vcs::cache::OutputCache;
use vulnver::vcs::{GitRepository, Vcs};
use vulnver::{Error, Result};

use crate::config::{file_hash, read_text, sha256, RunConfig};
use crate::manifest::{write_atomic, Manifest, StageRecord};
use crate::study;

pub const FIX_COMMITS: &str = "fix_commits.jsonl";
pub const RESPONSIBLE_LINES: &str = "responsible_lines.jsonl";
pub const VERIFICATION: &str = "verification.jsonl";
pub const VERSION_METRICS: &str = "version_metrics.csv";
pub const FOUNDATIONAL: &str = "foundational.csv";
pub const FOUNDATIONAL_SUMMARY: &str = "foundational_summary.csv";
pub const STATS: &str = "stats.json";
pub const MONTHLY: &str = "monthly_foundational.csv";
pub const LAPLACE: &str = "laplace.csv";
pub const SUMMARY: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Mine,
    Trace,
    Scan,
    Analyze,
    Stats,
    Vdm,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Mine,
        Stage::Trace,
        Stage::Scan,
        Stage::Analyze,
        Stage::Stats,
        Stage::Vdm,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Mine => "mine",
            Stage::Trace => "trace",
            Stage::Scan => "scan",
            Stage::Analyze => "analyze",
            Stage::Stats => "stats",
            Stage::Vdm => "vdm",
            Stage::Report => "report",
        }
    }

    fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Mine => &[],
            Stage::Trace => &[Stage::Mine],
            Stage::Scan => &[Stage::Mine, Stage::Trace],
            Stage::Analyze | Stage::Stats | Stage::Vdm => &[Stage::Scan],
            Stage::Report => &[Stage::Analyze, Stage::Stats, Stage::Vdm],
        }
    }

    fn uses_repository(self) -> bool {
        matches!(self, Stage::Mine | Stage::Trace | Stage::Scan)
    }

    fn uses_dataset(self) -> bool {
        !matches!(self, Stage::Trace | Stage::Report)
    }
}

struct Produced {
    artifacts: Vec<(String, Vec<u8>)>,
    warnings: Vec<String>,
}

fn jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::parse("artifact", format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Runs stages in dependency order, skipping those whose recorded inputs and
/// artifacts are unchanged, and keeps the manifest in step.
pub struct Driver {
    cfg: RunConfig,
    manifest: Manifest,
    pool: ThreadPool,
    repo: Option<GitRepository>,
    repo_head: Option<String>,
    catalog: Option<VersionCatalog>,
    dataset: Option<Vec<CveRecord>>,
    checked: Vec<Stage>,
}

impl Driver {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
        let mut manifest = Manifest::load(&cfg.out).unwrap_or_else(|| Manifest::new(cfg.hash()));
        manifest.config_hash = cfg.hash();
        Ok(Driver {
            pool: mining::thread_pool(cfg.jobs)?,
            cfg,
            manifest,
            repo: None,
            repo_head: None,
            catalog: None,
            dataset: None,
            checked: Vec::new(),
        })
    }

    fn has_record(&self, stage: Stage) -> bool {
        self.manifest
            .stages
            .get(stage.name())
            .is_some_and(|r| r.complete)
    }

    fn repo(&mut self) -> Result<&GitRepository> {
        if self.repo.is_none() {
            let path = self.cfg.require("--repo", &self.cfg.repo)?;
            let cache = match &self.cfg.cache_dir {
                Some(d) => OutputCache::at(d)?,
                None => OutputCache::disabled(),
            };
            let repo = GitRepository::open(path)?
                .with_templates(self.cfg.templates.clone())
                .with_numbering(self.cfg.numbering.into())
                .with_cache(cache);
            let head = repo.log()?.last().map(|e| e.id.clone()).unwrap_or_default();
            self.manifest
                .inputs
                .insert("repository_head".into(), head.clone());
            self.repo_head = Some(head);
            self.repo = Some(repo);
        }
        Ok(self.repo.as_ref().expect("repository opened above"))
    }

    fn catalog(&mut self) -> Result<&VersionCatalog> {
        if self.catalog.is_none() {
            let path = self.cfg.require("--catalog", &self.cfg.catalog)?;
            let catalog = VersionCatalog::from_json(&read_text(path)?)?;
            self.manifest
                .inputs
                .insert("catalog".into(), file_hash(path)?);
            self.catalog = Some(catalog);
        }
        Ok(self.catalog.as_ref().expect("catalog loaded above"))
    }

    fn dataset(&mut self) -> Result<&[CveRecord]> {
        if self.dataset.is_none() {
            self.catalog()?;
            let path = self
                .cfg
                .require("--dataset", &self.cfg.dataset)?
                .to_path_buf();
            let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            let records = read_dataset(
                BufReader::new(file),
                self.catalog.as_ref().expect("catalog loaded"),
            )?;
            self.manifest
                .inputs
                .insert("dataset".into(), file_hash(&path)?);
            self.dataset = Some(records);
        }
        Ok(self.dataset.as_deref().expect("dataset loaded above"))
    }

    fn input_hash(&mut self, stage: Stage) -> Result<String> {
        let mut inputs = BTreeMap::new();
        if stage.uses_repository() {
            self.repo()?;
            inputs.insert(
                "repository_head",
                self.repo_head.clone().unwrap_or_default(),
            );
        }
        if stage.uses_dataset() {
            self.dataset()?;
            inputs.insert("dataset", self.manifest.inputs["dataset"].clone());
            inputs.insert("catalog", self.manifest.inputs["catalog"].clone());
        }
        let upstream: BTreeMap<&str, &BTreeMap<String, String>> = stage
            .upstream()
            .iter()
            .filter_map(|s| {
                self.manifest
                    .stages
                    .get(s.name())
                    .map(|r| (s.name(), &r.artifacts))
            })
            .collect();
        let settings = if stage.uses_repository() {
            self.cfg.repository_settings()
        } else {
            self.cfg.analysis_settings()
        };
        let all = json!({
            "stage": stage.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "settings": settings,
            "inputs": inputs,
            "upstream": upstream,
        });
        Ok(sha256(all.to_string().as_bytes()))
    }

    fn is_fresh(&self, stage: Stage, input_hash: &str) -> bool {
        let Some(record) = self.manifest.stages.get(stage.name()) else {
            return false;
        };
        record.complete
            && record.input_hash == input_hash
            && record
                .artifacts
                .iter()
                .all(|(name, hash)| file_hash(&self.cfg.out.join(name)).is_ok_and(|h| &h == hash))
    }

    /// Brings `stage` up to date, running it when `force` is set or its
    /// inputs changed.
    pub fn ensure(&mut self, stage: Stage, force: bool) -> Result<()> {
        if self.checked.contains(&stage) && !force {
            return Ok(());
        }
        for &up in stage.upstream() {
            self.ensure(up, false)?;
        }
        if !force && stage.uses_repository() && self.cfg.repo.is_none() {
            let recorded = self
                .manifest
                .stages
                .get(stage.name())
                .map(|r| r.input_hash.clone());
            if recorded.is_some_and(|h| self.is_fresh(stage, &h)) {
                eprintln!("{}: reusing artifacts (no --repo given)", stage.name());
                self.checked.push(stage);
                return Ok(());
            }
        }
        let input_hash = match self.input_hash(stage) {
            Ok(h) => h,
            Err(e) => return self.fail(stage, String::new(), e),
        };
        if !force && self.is_fresh(stage, &input_hash) {
            eprintln!("{}: up to date", stage.name());
            self.checked.push(stage);
            return Ok(());
        }
        match self.run(stage) {
            Ok(produced) => {
                let mut artifacts = BTreeMap::new();
                for (name, bytes) in &produced.artifacts {
                    write_atomic(&self.cfg.out.join(name), bytes)?;
                    artifacts.insert(name.clone(), sha256(bytes));
                }
                for w in &produced.warnings {
                    eprintln!("{}: warning: {w}", stage.name());
                }
                let previous = self
                    .manifest
                    .stages
                    .get(stage.name())
                    .map(|r| r.artifacts.clone());
                if previous.as_ref() != Some(&artifacts) {
                    self.invalidate_downstream(stage);
                }
                self.manifest.stages.insert(
                    stage.name().into(),
                    StageRecord {
                        input_hash,
                        complete: true,
                        error: None,
                        artifacts,
                        warnings: produced.warnings,
                    },
                );
                self.save()?;
                self.checked.push(stage);
                Ok(())
            }
            Err(e) => self.fail(stage, input_hash, e),
        }
    }

    fn fail(&mut self, stage: Stage, input_hash: String, e: Error) -> Result<()> {
        self.manifest.stages.insert(
            stage.name().into(),
            StageRecord {
                input_hash,
                complete: false,
                error: Some(e.to_string()),
                artifacts: BTreeMap::new(),
                warnings: Vec::new(),
            },
        );
        self.save()?;
        Err(e)
    }

    /// Drops the records of every stage that consumed the artifacts of `stage`.
    fn invalidate_downstream(&mut self, stage: Stage) {
        for s in Stage::ALL {
            if s != stage && depends_on(s, stage) {
                self.manifest.stages.remove(s.name());
                self.checked.retain(|c| *c != s);
            }
        }
    }

    fn save(&mut self) -> Result<()> {
        self.manifest.complete = Stage::ALL.iter().all(|s| self.has_record(*s));
        self.manifest.save(&self.cfg.out)
    }

    fn artifact<T: DeserializeOwned>(&self, name: &str) -> Result<Vec<T>> {
        read_jsonl(&self.cfg.out.join(name))
    }

    fn run(&mut self, stage: Stage) -> Result<Produced> {
        eprintln!("{}: running", stage.name());
        match stage {
            Stage::Mine => self.mine(),
            Stage::Trace => self.trace(),
            Stage::Scan => self.scan(),
            Stage::Analyze => self.analyze(),
            Stage::Stats => self.stats(),
            Stage::Vdm => self.vdm(),
            Stage::Report => self.report(),
        }
    }

    fn mine(&mut self) -> Result<Produced> {
        self.dataset()?;
        self.repo()?;
        let repo = self.repo.as_ref().expect("repository opened");
        let dataset = self.dataset.as_deref().expect("dataset loaded");
        let summary = mining::mine(repo, dataset, &self.cfg.patterns)?;
        eprintln!(
            "mine: {} fix commits among {} commits ({} mention only bugs outside the dataset, {} mention none)",
            summary.fixes.len(),
            summary.commits_scanned,
            summary.foreign_only,
            summary.unmatched
        );
        Ok(Produced {
            artifacts: vec![(FIX_COMMITS.into(), jsonl(&summary.fixes)?)],
            warnings: Vec::new(),
        })
    }

    fn trace(&mut self) -> Result<Produced> {
        let fixes: Vec<FixCommit> = self.artifact(FIX_COMMITS)?;
        self.repo()?;
        let repo = self.repo.as_ref().expect("repository opened");
        let traces = mining::trace_all(repo, &fixes, &self.pool)?;
        let warnings = traces
            .iter()
            .flat_map(|t| {
                t.warnings
                    .iter()
                    .map(move |w| format!("{}: {w}", t.fix_rev))
            })
            .collect();
        let lines: usize = traces.iter().map(|t| t.lines.len()).sum();
        let markers: usize = traces.iter().map(|t| t.markers.len()).sum();
        eprintln!("trace: {lines} responsible lines, {markers} addition-only markers");
        Ok(Produced {
            artifacts: vec![(RESPONSIBLE_LINES.into(), jsonl(&traces)?)],
            warnings,
        })
    }

    fn scan(&mut self) -> Result<Produced> {
        let fixes: Vec<FixCommit> = self.artifact(FIX_COMMITS)?;
        let traces: Vec<Backtrace> = self.artifact(RESPONSIBLE_LINES)?;
        self.dataset()?;
        self.repo()?;
        let summary = MiningSummary {
            fixes,
            ..MiningSummary::default()
        };
        let results = mining::scan_all(
            self.repo.as_ref().expect("repository opened"),
            self.dataset.as_deref().expect("dataset loaded"),
            self.catalog.as_ref().expect("catalog loaded"),
            &summary,
            &traces,
            &self.pool,
        )?;
        for r in &results {
            println!("{}", verdict_row(r));
        }
        let warnings = results
            .iter()
            .flat_map(|r| r.warnings.iter().map(move |w| format!("{}: {w}", r.cve_id)))
            .collect();
        Ok(Produced {
            artifacts: vec![(VERIFICATION.into(), jsonl(&results)?)],
            warnings,
        })
    }

    fn mode(&self) -> ErMode {
        if self.cfg.strict_er {
            ErMode::Strict
        } else {
            ErMode::Paper
        }
    }

    fn analysis_inputs(&mut self) -> Result<Vec<VerificationResult>> {
        self.dataset()?;
        self.artifact(VERIFICATION)
    }

    fn analyze(&mut self) -> Result<Produced> {
        let results = self.analysis_inputs()?;
        let dataset = self.dataset.as_deref().expect("dataset loaded");
        let catalog = self.catalog.as_ref().expect("catalog loaded");
        let rows = metrics_table(&results, dataset, catalog, self.mode())?;
        let mut metrics = Vec::new();
        write_metrics_csv(&rows, &mut metrics)?;
        let (frows, summaries) = foundational_report(&results, dataset, catalog)?;
        let mut foundational = Vec::new();
        write_foundational_csv(&frows, &mut foundational)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["view", "mean_over_versions", "pooled_over_cves"])?;
        for s in &summaries {
            w.write_record([
                s.view.name().to_string(),
                s.mean_over_versions
                    .map(|m| format!("{m:.6}"))
                    .unwrap_or_default(),
                s.pooled_over_cves
                    .map(|r| format!("{:.6}", vulnver::analysis::ratio_to_f64(r)))
                    .unwrap_or_default(),
            ])?;
        }
        let summary = w
            .into_inner()
            .map_err(|e| Error::io("<csv>", e.into_error()))?;
        Ok(Produced {
            artifacts: vec![
                (VERSION_METRICS.into(), metrics),
                (FOUNDATIONAL.into(), foundational),
                (FOUNDATIONAL_SUMMARY.into(), summary),
            ],
            warnings: Vec::new(),
        })
    }

    fn stats(&mut self) -> Result<Produced> {
        let results = self.analysis_inputs()?;
        let inputs = study::Inputs {
            results: &results,
            dataset: self.dataset.as_deref().expect("dataset loaded"),
            catalog: self.catalog.as_ref().expect("catalog loaded"),
        };
        let out = study::stats(
            &inputs,
            self.mode(),
            self.cfg.mu0,
            self.cfg.alpha,
            self.cfg.horizon_date,
        )?;
        let mut report = serde_json::to_vec_pretty(&out.report)?;
        report.push(b'\n');
        Ok(Produced {
            artifacts: vec![
                (STATS.into(), report),
                (MONTHLY.into(), out.monthly_csv),
                (LAPLACE.into(), out.laplace_csv),
            ],
            warnings: out.warnings,
        })
    }

    fn vdm(&mut self) -> Result<Produced> {
        let results = self.analysis_inputs()?;
        let inputs = study::Inputs {
            results: &results,
            dataset: self.dataset.as_deref().expect("dataset loaded"),
            catalog: self.catalog.as_ref().expect("catalog loaded"),
        };
        let out = study::vdm(
            &inputs,
            self.cfg.from_month,
            self.cfg.horizon_date,
            &self.pool,
        )?;
        Ok(Produced {
            artifacts: out.files,
            warnings: out.warnings,
        })
    }

    fn report(&mut self) -> Result<Produced> {
        let results: Vec<VerificationResult> = self.artifact(VERIFICATION)?;
        let fixes: Vec<FixCommit> = self.artifact(FIX_COMMITS)?;
        let mut unverifiable: BTreeMap<String, usize> = BTreeMap::new();
        let (mut verified, mut empty) = (0, 0);
        for r in &results {
            match &r.status {
                VerificationStatus::Verified { versions } => {
                    verified += 1;
                    empty += usize::from(versions.is_empty());
                }
                VerificationStatus::Unverifiable { reason } => {
                    let key = serde_json::to_value(reason)?
                        .as_str()
                        .unwrap_or_default()
                        .to_string();
                    *unverifiable.entry(key).or_default() += 1;
                }
            }
        }
        let artifacts: BTreeMap<&str, Vec<&String>> = Stage::ALL
            .iter()
            .filter(|s| **s != Stage::Report)
            .filter_map(|s| {
                self.manifest
                    .stages
                    .get(s.name())
                    .map(|r| (s.name(), r.artifacts.keys().collect()))
            })
            .collect();
        let summary = json!({
            "cves": results.len(),
            "verifiable": verified,
            "verified_without_official_version": empty,
            "unverifiable": unverifiable,
            "fix_commits": fixes.len(),
            "artifacts": artifacts,
        });
        let mut bytes = serde_json::to_vec_pretty(&summary)?;
        bytes.push(b'\n');
        Ok(Produced {
            artifacts: vec![(SUMMARY.into(), bytes)],
            warnings: Vec::new(),
        })
    }
}

fn depends_on(stage: Stage, on: Stage) -> bool {
    stage
        .upstream()
        .iter()
        .any(|&u| u == on || depends_on(u, on))
}

/// `CVE <tab> verdict <tab> versions`, as printed by `scan`.
pub fn verdict_row(r: &VerificationResult) -> String {
    match &r.status {
        VerificationStatus::Verified { versions } => {
            let list: Vec<String> = versions.iter().map(|v| v.to_string()).collect();
            let list = if list.is_empty() {
                "-".to_string()
            } else {
                list.join(",")
            };
            format!("{}\tverified\t{list}", r.cve_id)
        }
        VerificationStatus::Unverifiable { reason } => {
            let reason = serde_json::to_value(reason)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            format!("{}\tunverifiable\t{reason}", r.cve_id)
        }
    }
}
