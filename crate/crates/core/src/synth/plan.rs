use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{UnverifiableReason, VersionId};

/// Probabilities of the three kinds of planted claim errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Claims stretched back to the first version.
    pub p_stretch_past: f64,
    /// Claims extended to versions released after the fix.
    pub p_future: f64,
    /// Vulnerabilities living only in a beta release.
    pub p_beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixStyle {
    /// The fix rewrites or removes the vulnerable lines.
    Modify,
    /// The fix only inserts a check.
    AdditionOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedError {
    StretchPast,
    Future,
    Beta,
}

/// One commit of the generated history; revision = position + 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ScheduledEvent {
    /// Creates the shared source files.
    Import,
    /// Inserts unrelated lines into shared file `file`.
    Filler {
        file: usize,
    },
    Introduce {
        vuln: usize,
    },
    Fix {
        vuln: usize,
    },
    Release {
        label: String,
        official: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedVulnerability {
    pub cve_id: String,
    pub bug_id: u64,
    /// Repository path of the vulnerable file.
    pub file: String,
    pub introduced_rev: u64,
    pub fixed_rev: u64,
    pub fix_style: FixStyle,
    /// The fix deletes the whole vulnerable block instead of rewriting one line.
    #[serde(default)]
    pub removes_block: bool,
    pub true_vulnerable_versions: BTreeSet<VersionId>,
    pub claimed_versions: BTreeSet<VersionId>,
    #[serde(default)]
    pub planted: BTreeSet<PlantedError>,
}

/// A CVE that cannot be linked to any fix commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlinkedCve {
    pub cve_id: String,
    pub bug_ids: BTreeSet<u64>,
    pub claimed_versions: BTreeSet<VersionId>,
    pub reason: UnverifiableReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPlan {
    pub seed: u64,
    /// Number of official versions.
    pub versions: usize,
    /// Number of shared source files.
    pub files: usize,
    /// Fillers copy vulnerable lines into other files.
    #[serde(default)]
    pub collisions: bool,
    pub noise: NoiseSpec,
    pub schedule: Vec<ScheduledEvent>,
    pub vulnerabilities: Vec<PlannedVulnerability>,
    #[serde(default)]
    pub unlinked: Vec<UnlinkedCve>,
}

/// Parameters for [`GroundTruthPlan::random`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub seed: u64,
    pub min_versions: usize,
    pub max_versions: usize,
    pub files: usize,
    pub cves: usize,
    pub noise: NoiseSpec,
    pub p_addition_only: f64,
    pub p_remove_block: f64,
    pub max_fillers_per_epoch: usize,
    pub collisions: bool,
    pub no_bug: usize,
    pub no_commit: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            seed: 0,
            min_versions: 6,
            max_versions: 10,
            files: 4,
            cves: 10,
            noise: NoiseSpec::default(),
            p_addition_only: 0.3,
            p_remove_block: 0.3,
            max_fillers_per_epoch: 3,
            collisions: false,
            no_bug: 0,
            no_commit: 0,
        }
    }
}

pub fn official_label(j: usize) -> String {
    format!("{j}.0")
}

pub fn shared_file(i: usize) -> String {
    format!("src/module_{i}.cc")
}

pub fn feature_file(k: usize) -> String {
    format!("src/feature_{k}.cc")
}

fn version(j: usize) -> VersionId {
    VersionId::parse(&official_label(j)).expect("generated label parses")
}

fn versions(range: impl IntoIterator<Item = usize>) -> BTreeSet<VersionId> {
    range.into_iter().map(version).collect()
}

impl GroundTruthPlan {
    /// Draws a plan. Official versions are `1.0 .. V.0`; epoch `e` holds the
    /// commits between releases `e - 1` and `e`, epoch `V + 1` those after the
    /// last release. A vulnerability introduced in epoch `a` and fixed in
    /// epoch `b` is truly present in versions `a .. b - 1`.
    pub fn random(config: &PlanConfig) -> Result<GroundTruthPlan> {
        if config.min_versions < 3 || config.max_versions < config.min_versions {
            return Err(Error::Config("plans need at least 3 versions".into()));
        }
        if config.files == 0 {
            return Err(Error::Config("plans need at least one shared file".into()));
        }
        let n = config.noise;
        for p in [
            n.p_stretch_past,
            n.p_future,
            n.p_beta,
            config.p_addition_only,
            config.p_remove_block,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("probability {p} outside [0, 1]")));
            }
        }
        if n.p_beta >= 1.0 && (n.p_stretch_past > 0.0 || n.p_future > 0.0) {
            return Err(Error::Config(
                "beta probability 1 leaves no room for other errors".into(),
            ));
        }
        if n.p_stretch_past > 1.0 - n.p_beta || n.p_future > 1.0 - n.p_beta {
            return Err(Error::Config(
                "error probabilities exceed the non-beta share".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let v = rng.gen_range(config.min_versions..=config.max_versions);

        struct Draft {
            a: usize,
            b: usize,
            planted: BTreeSet<PlantedError>,
            style: FixStyle,
            removes_block: bool,
            file: usize,
            future_extra: usize,
        }
        let mut drafts = Vec::new();
        for _ in 0..config.cves {
            let mut planted = BTreeSet::new();
            let (a, b) = if rng.gen_bool(n.p_beta) {
                planted.insert(PlantedError::Beta);
                let a = rng.gen_range(1..=v);
                (a, a)
            } else {
                let rest = 1.0 - n.p_beta;
                let past = rest > 0.0 && rng.gen_bool((n.p_stretch_past / rest).min(1.0));
                let future = rest > 0.0 && rng.gen_bool((n.p_future / rest).min(1.0));
                let lo = if past { 2 } else { 1 };
                let hi = if future { v - 1 } else { v };
                let a = rng.gen_range(lo..=hi);
                let b = rng.gen_range(a + 1..=if future { v } else { v + 1 });
                if past {
                    planted.insert(PlantedError::StretchPast);
                }
                if future {
                    planted.insert(PlantedError::Future);
                }
                (a, b)
            };
            let style = if rng.gen_bool(config.p_addition_only) {
                FixStyle::AdditionOnly
            } else {
                FixStyle::Modify
            };
            drafts.push(Draft {
                a,
                b,
                planted,
                style,
                removes_block: style == FixStyle::Modify && rng.gen_bool(config.p_remove_block),
                file: rng.gen_range(0..config.files),
                future_extra: rng.gen_range(1..=2),
            });
        }

        let mut schedule = vec![ScheduledEvent::Import];
        for epoch in 1..=v + 1 {
            let mut events: Vec<ScheduledEvent> = (0..rng
                .gen_range(1..=config.max_fillers_per_epoch.max(1)))
                .map(|_| ScheduledEvent::Filler {
                    file: rng.gen_range(0..config.files),
                })
                .collect();
            for (k, d) in drafts.iter().enumerate() {
                if d.a == epoch && d.a < d.b {
                    events.push(ScheduledEvent::Introduce { vuln: k });
                }
                if d.b == epoch && d.a < d.b {
                    events.push(ScheduledEvent::Fix { vuln: k });
                }
            }
            events.shuffle(&mut rng);
            let mut betas: Vec<(usize, usize)> = drafts
                .iter()
                .enumerate()
                .filter(|(_, d)| d.a == epoch && d.a == d.b)
                .map(|(k, _)| (rng.gen_range(0..=events.len()), k))
                .collect();
            betas.sort();
            // back to front, so earlier insertion points stay valid
            for (i, &(at, k)) in betas.iter().enumerate().rev() {
                events.splice(
                    at..at,
                    [
                        ScheduledEvent::Introduce { vuln: k },
                        ScheduledEvent::Release {
                            label: format!("{}.5.{i}", epoch - 1),
                            official: false,
                        },
                        ScheduledEvent::Fix { vuln: k },
                    ],
                );
            }
            schedule.extend(events);
            if epoch <= v {
                schedule.push(ScheduledEvent::Release {
                    label: official_label(epoch),
                    official: true,
                });
            }
        }
        let position = |want: &ScheduledEvent| {
            schedule.iter().position(|e| e == want).expect("scheduled") as u64 + 1
        };

        let vulnerabilities = drafts
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let truth = versions(d.a..d.b);
                let mut claimed = truth.clone();
                if d.planted.contains(&PlantedError::Beta) {
                    claimed.insert(version(d.a));
                }
                if d.planted.contains(&PlantedError::StretchPast) {
                    claimed.extend(versions(1..d.a));
                }
                if d.planted.contains(&PlantedError::Future) {
                    claimed.extend(versions(d.b..=(d.b - 1 + d.future_extra).min(v)));
                }
                PlannedVulnerability {
                    cve_id: format!("CVE-S{}-{:04}", config.seed, k + 1),
                    bug_id: 1000 + k as u64,
                    file: match d.style {
                        FixStyle::Modify => shared_file(d.file),
                        FixStyle::AdditionOnly => feature_file(k),
                    },
                    introduced_rev: position(&ScheduledEvent::Introduce { vuln: k }),
                    fixed_rev: position(&ScheduledEvent::Fix { vuln: k }),
                    fix_style: d.style,
                    removes_block: d.removes_block,
                    true_vulnerable_versions: truth,
                    claimed_versions: claimed,
                    planted: d.planted.clone(),
                }
            })
            .collect();

        let mut unlinked = Vec::new();
        for (i, reason) in std::iter::repeat_n(UnverifiableReason::NoBug, config.no_bug)
            .chain(std::iter::repeat_n(
                UnverifiableReason::NoCommit,
                config.no_commit,
            ))
            .enumerate()
        {
            let a = rng.gen_range(1..=v);
            let b = rng.gen_range(a..=v);
            unlinked.push(UnlinkedCve {
                cve_id: format!("CVE-S{}-U{:03}", config.seed, i + 1),
                bug_ids: match reason {
                    UnverifiableReason::NoBug => BTreeSet::new(),
                    UnverifiableReason::NoCommit => [500_000 + i as u64].into(),
                },
                claimed_versions: versions(a..=b),
                reason,
            });
        }

        let plan = GroundTruthPlan {
            seed: config.seed,
            versions: v,
            files: config.files,
            collisions: config.collisions,
            noise: n,
            schedule,
            vulnerabilities,
            unlinked,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// `(label, official, revision)` of every release, in history order.
    pub fn releases(&self) -> Vec<(String, bool, u64)> {
        self.schedule
            .iter()
            .enumerate()
            .filter_map(|(i, e)| match e {
                ScheduledEvent::Release { label, official } => {
                    Some((label.clone(), *official, i as u64 + 1))
                }
                _ => None,
            })
            .collect()
    }

    /// Checks that the schedule and the vulnerability table agree.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(format!("plan {}: {msg}", self.seed)));
        if self.schedule.first() != Some(&ScheduledEvent::Import) {
            return bad("schedule must start with the import".into());
        }
        let releases = self.releases();
        let official: Vec<&(String, bool, u64)> = releases.iter().filter(|r| r.1).collect();
        if official.len() != self.versions {
            return bad(format!(
                "{} official releases for {} versions",
                official.len(),
                self.versions
            ));
        }
        let mut labels = BTreeSet::new();
        for (label, _, _) in &releases {
            let parsed = VersionId::parse(label)?;
            if labels.last().is_some_and(|prev| *prev >= parsed) {
                return bad(format!("release label {label} out of order"));
            }
            labels.insert(parsed);
        }
        let mut ids = BTreeSet::new();
        let mut bugs = BTreeSet::new();
        let mut files = BTreeSet::new();
        for (k, vuln) in self.vulnerabilities.iter().enumerate() {
            if !ids.insert(vuln.cve_id.clone()) || !bugs.insert(vuln.bug_id) {
                return bad(format!("{} reuses a CVE or bug id", vuln.cve_id));
            }
            let at = |rev: u64| self.schedule.get(rev as usize - 1);
            if vuln.introduced_rev == 0
                || at(vuln.introduced_rev) != Some(&ScheduledEvent::Introduce { vuln: k })
            {
                return bad(format!(
                    "{}: introduction not at r{}",
                    vuln.cve_id, vuln.introduced_rev
                ));
            }
            if vuln.fixed_rev == 0 || at(vuln.fixed_rev) != Some(&ScheduledEvent::Fix { vuln: k }) {
                return bad(format!("{}: fix not at r{}", vuln.cve_id, vuln.fixed_rev));
            }
            if vuln.introduced_rev >= vuln.fixed_rev {
                return bad(format!("{}: fixed before introduced", vuln.cve_id));
            }
            if vuln.fix_style == FixStyle::AdditionOnly && !files.insert(vuln.file.clone()) {
                return bad(format!(
                    "{}: addition-only file {} shared",
                    vuln.cve_id, vuln.file
                ));
            }
            let truth: BTreeSet<VersionId> = official
                .iter()
                .filter(|r| vuln.introduced_rev < r.2 && r.2 < vuln.fixed_rev)
                .map(|r| VersionId::parse(&r.0))
                .collect::<Result<_>>()?;
            if truth != vuln.true_vulnerable_versions {
                return bad(format!(
                    "{}: truth disagrees with the schedule",
                    vuln.cve_id
                ));
            }
            if vuln.claimed_versions.is_empty() {
                return bad(format!("{}: no claimed version", vuln.cve_id));
            }
        }
        for u in &self.unlinked {
            if !ids.insert(u.cve_id.clone()) {
                return bad(format!("{} repeated", u.cve_id));
            }
            let consistent = match u.reason {
                UnverifiableReason::NoBug => u.bug_ids.is_empty(),
                UnverifiableReason::NoCommit => {
                    !u.bug_ids.is_empty() && u.bug_ids.is_disjoint(&bugs)
                }
            };
            if !consistent || u.claimed_versions.is_empty() {
                return bad(format!("{}: inconsistent unlinked record", u.cve_id));
            }
        }
        for (i, e) in self.schedule.iter().enumerate() {
            match e {
                ScheduledEvent::Import if i > 0 => return bad("second import".into()),
                ScheduledEvent::Filler { file } if *file >= self.files => {
                    return bad(format!("filler on missing file {file}"))
                }
                ScheduledEvent::Introduce { vuln } | ScheduledEvent::Fix { vuln }
                    if *vuln >= self.vulnerabilities.len() =>
                {
                    return bad(format!("event for missing vulnerability {vuln}"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}
