//! The three-step verification pipeline: mine fix commits from the log,
//! back-trace them to responsible lines, and scan every official release
//! snapshot for those lines.

pub mod patterns;
pub mod scan;
pub mod trace;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    CveRecord, Fragment, FragmentEvidence, RevisionId, UnverifiableReason, VerificationResult,
    VerificationStatus, VersionCatalog, VersionId,
};
use crate::vcs::Vcs;

pub use patterns::{mine_fix_commits, FixCommit, MiningSummary, PatternSet};
pub use rayon::ThreadPool;
pub use trace::{backtrace, is_trivial, Backtrace};

pub fn thread_pool(jobs: usize) -> Result<ThreadPool> {
    if jobs == 0 {
        return Err(Error::Config("worker count must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Step 1 over a dataset.
pub fn mine(repo: &dyn Vcs, dataset: &[CveRecord], patterns: &PatternSet) -> Result<MiningSummary> {
    let log = repo.log()?;
    let bugs: BTreeSet<u64> = dataset
        .iter()
        .flat_map(|c| c.bug_ids.iter().copied())
        .collect();
    Ok(mine_fix_commits(&log, &bugs, patterns))
}

/// Step 2 over every mined commit, in commit order.
pub fn trace_all(repo: &dyn Vcs, fixes: &[FixCommit], pool: &ThreadPool) -> Result<Vec<Backtrace>> {
    pool.install(|| fixes.par_iter().map(|f| backtrace(repo, f)).collect())
}

/// Step 3 for one release: the fragments present in its snapshot.
pub fn scan_version(
    repo: &dyn Vcs,
    snapshot: &RevisionId,
    fragments: &[Fragment],
) -> Result<Vec<Fragment>> {
    let refs: Vec<&Fragment> = fragments.iter().collect();
    Ok(scan::scan_snapshot(repo, snapshot, &refs)?
        .into_iter()
        .map(|i| fragments[i].clone())
        .collect())
}

/// Step 3 over all official releases, producing one verdict per CVE.
pub fn scan_all(
    repo: &dyn Vcs,
    dataset: &[CveRecord],
    catalog: &VersionCatalog,
    mining: &MiningSummary,
    traces: &[Backtrace],
    pool: &ThreadPool,
) -> Result<Vec<VerificationResult>> {
    let snapshots: Vec<(VersionId, RevisionId)> = catalog
        .official()
        .map(|e| Ok((e.version.clone(), repo.resolve(&e.snapshot_rev)?)))
        .collect::<Result<_>>()?;
    let by_rev: BTreeMap<u64, &Backtrace> =
        traces.iter().map(|t| (t.fix_rev.ordinal(), t)).collect();

    let per_cve: Vec<Option<Vec<&Backtrace>>> = dataset
        .iter()
        .map(|cve| {
            let found: Vec<&Backtrace> = mining
                .fixes
                .iter()
                .filter(|f| !f.bug_ids.is_disjoint(&cve.bug_ids))
                .filter_map(|f| by_rev.get(&f.revision.ordinal()).copied())
                .collect();
            (!found.is_empty()).then_some(found)
        })
        .collect();

    let mut all: BTreeSet<Fragment> = BTreeSet::new();
    for traces in per_cve.iter().flatten() {
        for t in traces {
            all.extend(t.lines.iter().cloned().map(Fragment::Line));
            all.extend(t.markers.iter().cloned().map(Fragment::Marker));
        }
    }
    let fragments: Vec<Fragment> = all.into_iter().collect();
    let files: BTreeSet<&str> = fragments.iter().map(Fragment::file).collect();

    let units: Vec<(usize, &str)> = (0..snapshots.len())
        .flat_map(|v| files.iter().map(move |f| (v, *f)))
        .collect();
    let found: Vec<Vec<(usize, usize)>> = pool.install(|| {
        units
            .par_iter()
            .map(|&(v, file)| {
                let (idx, refs): (Vec<usize>, Vec<&Fragment>) = fragments
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| f.file() == file)
                    .unzip();
                let present = scan::scan_snapshot(repo, &snapshots[v].1, &refs)?;
                Ok(present.into_iter().map(|i| (idx[i], v)).collect())
            })
            .collect::<Result<_>>()
    })?;
    let mut matched: Vec<BTreeSet<VersionId>> = vec![BTreeSet::new(); fragments.len()];
    for (frag, v) in found.into_iter().flatten() {
        matched[frag].insert(snapshots[v].0.clone());
    }
    let position: BTreeMap<&Fragment, usize> =
        fragments.iter().enumerate().map(|(i, f)| (f, i)).collect();

    Ok(dataset
        .iter()
        .zip(per_cve)
        .map(|(cve, traces)| {
            if cve.bug_ids.is_empty() {
                return unverifiable(cve, UnverifiableReason::NoBug);
            }
            let Some(traces) = traces else {
                return unverifiable(cve, UnverifiableReason::NoCommit);
            };
            let mut warnings = Vec::new();
            let mut own: BTreeSet<&Fragment> = BTreeSet::new();
            for t in &traces {
                warnings.extend(t.warnings.iter().cloned());
                if t.partial {
                    warnings.push(format!("fix {} only partially traced", t.fix_rev));
                }
            }
            for f in &fragments {
                let from_cve = traces.iter().any(|t| match f {
                    Fragment::Line(l) => t.fix_rev == l.fix_rev && t.lines.contains(l),
                    Fragment::Marker(m) => t.markers.contains(m),
                });
                if from_cve {
                    own.insert(f);
                }
            }
            if own.is_empty() {
                warnings.push("fix commits yield no responsible fragment".to_string());
            }
            let evidence: Vec<FragmentEvidence> = own
                .iter()
                .map(|f| FragmentEvidence {
                    fragment: (*f).clone(),
                    matched_versions: matched[position[f]].clone(),
                })
                .collect();
            let versions = evidence
                .iter()
                .flat_map(|e| e.matched_versions.iter().cloned())
                .collect();
            VerificationResult {
                cve_id: cve.cve_id.clone(),
                status: VerificationStatus::Verified { versions },
                evidence,
                warnings,
            }
        })
        .collect())
}

fn unverifiable(cve: &CveRecord, reason: UnverifiableReason) -> VerificationResult {
    VerificationResult {
        cve_id: cve.cve_id.clone(),
        status: VerificationStatus::Unverifiable { reason },
        evidence: Vec::new(),
        warnings: Vec::new(),
    }
}

#[derive(Debug, Clone)]
pub struct Verification {
    pub mining: MiningSummary,
    pub traces: Vec<Backtrace>,
    pub results: Vec<VerificationResult>,
}

/// Runs the three steps end to end.
pub fn verify(
    repo: &dyn Vcs,
    dataset: &[CveRecord],
    catalog: &VersionCatalog,
    patterns: &PatternSet,
    jobs: usize,
) -> Result<Verification> {
    let pool = thread_pool(jobs)?;
    let mining = mine(repo, dataset, patterns)?;
    let traces = trace_all(repo, &mining.fixes, &pool)?;
    let results = scan_all(repo, dataset, catalog, &mining, &traces, &pool)?;
    Ok(Verification {
        mining,
        traces,
        results,
    })
}
