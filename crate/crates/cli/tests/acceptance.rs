use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use chrono::NaiveDate;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use vulnver::analysis::{
    classify, error_taxonomy, foundational_report, metrics_table, ErMode, FoundationalView,
};
use vulnver::mining::{verify, PatternSet};
use vulnver::model::{
    CatalogEntry, CveRecord, Fragment, RevisionId, UnverifiableReason, VerificationResult,
    VerificationStatus, VersionCatalog, VersionId,
};
use vulnver::stats::{
    bonferroni, chi2_sf, laplace_factor, midranks, wilcoxon_rank_sum, wilcoxon_signed_rank,
    Alternative, Method,
};
use vulnver::synth::table1::{self, MEDIA_BENCH, URL_FIXER};
use vulnver::synth::{generate, score, GroundTruthPlan, NoiseSpec, PlanConfig};
use vulnver::vcs::annotate::{parse_annotate, render_annotate};
use vulnver::vcs::diff::{apply_hunks, parse_file_diff, parse_patch, render_file_diff};
use vulnver::vcs::{
    AnnotatedLine, DiffHunk, DiffOutcome, FileDiff, GitRepository, HunkLine, LineTag, Vcs,
};
use vulnver::vdm::{compare_datasets, fit, quality, FitRecord, VdmModel};

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn v(i: u64) -> VersionId {
    VersionId::parse(&format!("{i}.0")).unwrap()
}

fn range(a: u64, b: u64) -> BTreeSet<VersionId> {
    (a..=b).map(v).collect()
}

fn table1_fixture() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = table1::build(dir.path()).map_err(|e| e.to_string())?;
    let repo = fixture.open_repository().map_err(|e| e.to_string())?;
    let out = verify(
        &repo,
        &fixture.dataset,
        &fixture.catalog,
        &PatternSet::default(),
        2,
    )
    .map_err(|e| e.to_string())?;
    let by_id = |id: &str| {
        out.results
            .iter()
            .find(|r| r.cve_id == id)
            .ok_or(format!("{id} missing"))
    };

    let url = by_id("CVE-2011-2822")?;
    ensure!(
        url.verified_versions() == Some(&range(1, 13)),
        "CVE-2011-2822: {:?}",
        url.status
    );
    let lines: Vec<_> = url
        .evidence
        .iter()
        .filter_map(|e| match &e.fragment {
            Fragment::Line(l) => Some((l.file.as_str(), l.line_no, l.origin_rev.ordinal())),
            Fragment::Marker(_) => None,
        })
        .collect();
    ensure!(
        lines == [(URL_FIXER, 542, 15)],
        "CVE-2011-2822 evidence {lines:?}"
    );

    let bench = by_id("CVE-2011-4080")?;
    ensure!(
        bench.verified_versions() == Some(&range(3, 8)),
        "CVE-2011-4080: {:?}",
        bench.status
    );
    let mut matched: Vec<_> = bench
        .evidence
        .iter()
        .filter(|e| e.fragment.file() == MEDIA_BENCH)
        .map(|e| e.matched_versions.clone())
        .collect();
    matched.sort_by_key(|m| m.len());
    ensure!(
        matched == [range(5, 8), range(3, 8)],
        "CVE-2011-4080 lines match {matched:?}"
    );

    let missing = by_id("CVE-2012-1521")?;
    let want = VerificationStatus::Unverifiable {
        reason: UnverifiableReason::NoCommit,
    };
    ensure!(
        missing.status == want,
        "CVE-2012-1521: {:?}",
        missing.status
    );
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.1}s");
    Ok(format!("3/3 verdicts exact in {secs:.2}s"))
}

/// Whether the claim for `cve` reaches before, after, or entirely outside
/// its verified versions.
fn planted_kinds(cve: &CveRecord, result: &VerificationResult) -> Option<[bool; 3]> {
    let verified = result.verified_versions()?;
    if verified.is_empty() {
        return Some([false, false, true]);
    }
    let (lo, hi) = (verified.first()?, verified.last()?);
    Some([
        cve.claimed_versions.iter().any(|c| c < lo),
        cve.claimed_versions.iter().any(|c| c > hi),
        false,
    ])
}

fn ground_truth_oracle() -> Check {
    let start = Instant::now();
    let (mut cves, mut exact) = (0usize, 0usize);
    let mut counts = [0usize; 3];
    for seed in 0..100 {
        let plan = GroundTruthPlan::random(&PlanConfig {
            seed,
            cves: 10,
            noise: NoiseSpec {
                p_stretch_past: 0.3,
                p_future: 0.2,
                p_beta: 0.1,
            },
            ..PlanConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let generated = generate(&plan, dir.path()).map_err(|e| e.to_string())?;
        let repo = GitRepository::open(&generated.repo).map_err(|e| e.to_string())?;
        let out = verify(
            &repo,
            &generated.dataset,
            &generated.catalog,
            &PatternSet::default(),
            1,
        )
        .map_err(|e| e.to_string())?;
        let s = score(&out.results, &generated.truth).map_err(|e| e.to_string())?;
        cves += s.cves;
        exact += s.exact_matches;
        for (cve, result) in generated.dataset.iter().zip(&out.results) {
            ensure!(
                cve.cve_id == result.cve_id,
                "result order differs from the dataset"
            );
            let kinds = planted_kinds(cve, result).ok_or(format!("{} unverifiable", cve.cve_id))?;
            for (c, k) in counts.iter_mut().zip(kinds) {
                *c += usize::from(k);
            }
        }
    }
    let rate = exact as f64 / cves as f64;
    ensure!(cves == 1000, "{cves} CVEs generated");
    ensure!(rate == 1.0, "exact-match rate {rate}");
    let freq = counts.map(|c| c as f64 / cves as f64);
    for (got, want) in freq.iter().zip([0.3, 0.2, 0.1]) {
        ensure!((got - want).abs() <= 0.05, "frequencies {freq:?}");
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 180.0, "took {secs:.0}s");
    Ok(format!(
        "exact match {exact}/{cves}; P/F/B = {:.3}/{:.3}/{:.3}; {secs:.1}s",
        freq[0], freq[1], freq[2]
    ))
}

type Row = (&'static [u64], Option<&'static [u64]>);

const TABLE: [Row; 20] = [
    (&[1, 2, 3], Some(&[1, 2, 3])),
    (&[1, 2, 3, 4, 5], Some(&[3, 4, 5])),
    (&[1, 2], Some(&[1, 2, 3, 4])),
    (&[2, 3, 4, 5], Some(&[2, 3])),
    (&[1, 2, 3], Some(&[])),
    (&[1, 2, 3, 4, 5], None),
    (&[1, 2, 3, 4, 5], Some(&[1, 2, 4, 5])),
    (&[3], Some(&[3])),
    (&[4, 5], Some(&[5])),
    (&[1], None),
    (&[2, 3], Some(&[2, 3])),
    (&[1, 2, 3, 4], Some(&[])),
    (&[5], Some(&[5])),
    (&[1, 2, 3, 4, 5], Some(&[1, 2, 3, 4, 5])),
    (&[2, 3, 4], None),
    (&[1, 3, 5], Some(&[1, 2, 3, 4, 5])),
    (&[1, 2, 3, 4, 5], Some(&[2, 3])),
    (&[4], Some(&[4])),
    (&[1, 2, 3, 4, 5], Some(&[1])),
    (&[3, 4, 5], None),
];

fn catalog(n: u64) -> VersionCatalog {
    let base = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    VersionCatalog::new(
        (1..=n)
            .map(|i| CatalogEntry {
                version: v(i),
                release_date: base + chrono::Days::new(90 * i),
                snapshot_rev: format!("r{}", 100 * i),
                official: true,
            })
            .collect(),
    )
    .unwrap()
}

fn build(rows: &[(Vec<u64>, Option<Vec<u64>>)]) -> (Vec<CveRecord>, Vec<VerificationResult>) {
    rows.iter()
        .enumerate()
        .map(|(i, (claimed, verified))| {
            let id = format!("CVE-T-{:02}", i + 1);
            let cve = CveRecord {
                cve_id: id.clone(),
                claimed_versions: claimed.iter().copied().map(v).collect(),
                bug_ids: [i as u64 + 1].into(),
                published: None,
            };
            let status = match verified {
                Some(vs) => VerificationStatus::Verified {
                    versions: vs.iter().copied().map(v).collect(),
                },
                None => VerificationStatus::Unverifiable {
                    reason: UnverifiableReason::NoCommit,
                },
            };
            let result = VerificationResult {
                cve_id: id,
                status,
                evidence: Vec::new(),
                warnings: Vec::new(),
            };
            (cve, result)
        })
        .unzip()
}

fn formula_exactness() -> Check {
    let r = |a, b| Some(Ratio::new(a, b));
    let rows: Vec<_> = TABLE
        .iter()
        .map(|(c, vs)| (c.to_vec(), vs.map(|s| s.to_vec())))
        .collect();
    let (dataset, results) = build(&rows);
    let cat = catalog(5);
    let metrics =
        metrics_table(&results, &dataset, &cat, ErMode::Paper).map_err(|e| e.to_string())?;
    let er: Vec<_> = metrics.iter().map(|m| m.er).collect();
    ensure!(
        er == [r(2, 5), r(1, 3), r(4, 13), r(5, 11), r(1, 3)],
        "ER {er:?}"
    );
    let erp: Vec<_> = metrics.iter().map(|m| m.er_prime).collect();
    ensure!(
        erp == [r(1, 3), r(2, 7), r(1, 4), r(5, 14), r(3, 11)],
        "ER' {erp:?}"
    );
    let tax: Vec<_> = metrics
        .iter()
        .map(|m| (m.p_error, m.f_error, m.b_error, m.other_error))
        .collect();
    ensure!(
        tax == [
            (2, 0, 2, 0),
            (1, 1, 2, 0),
            (0, 1, 2, 1),
            (1, 3, 1, 0),
            (0, 3, 0, 0)
        ],
        "taxonomy {tax:?}"
    );
    let (found, _) = foundational_report(&results, &dataset, &cat).map_err(|e| e.to_string())?;
    let view = |w| -> Vec<_> {
        found
            .iter()
            .filter(|f| f.view == w)
            .map(|f| f.fraction())
            .collect()
    };
    ensure!(
        view(FoundationalView::Reported) == [r(1, 1), r(10, 13), r(2, 3), r(7, 12), r(7, 11)],
        "reported fractions"
    );
    ensure!(
        view(FoundationalView::Verifiable) == [r(1, 1), r(9, 11), r(3, 4), r(2, 3), r(2, 3)],
        "verifiable fractions"
    );
    ensure!(
        view(FoundationalView::Verified) == [r(1, 1), r(5, 8), r(4, 9), r(2, 3), r(1, 2)],
        "verified fractions"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cases = 0;
    for _ in 0..500 {
        let pick =
            |rng: &mut ChaCha8Rng| (1..=6u64).filter(|_| rng.gen_bool(0.5)).collect::<Vec<_>>();
        let rows: Vec<_> = (0..rng.gen_range(1..30))
            .map(|_| {
                let claimed = pick(&mut rng);
                let verified = rng.gen_bool(0.7).then(|| pick(&mut rng));
                (claimed, verified)
            })
            .collect();
        let (dataset, results) = build(&rows);
        let cat = catalog(6);
        for m in
            metrics_table(&results, &dataset, &cat, ErMode::Paper).map_err(|e| e.to_string())?
        {
            if let (Some(er), Some(erp)) = (m.er, m.er_prime) {
                ensure!(erp <= er, "ER' {erp} > ER {er}");
                cases += 1;
            }
            ensure!(
                m.p_error + m.f_error + m.b_error + m.other_error == m.n_erroneous,
                "partition"
            );
        }
        for k in 1..=6 {
            let sets = classify(&results, &dataset, &cat, &v(k), ErMode::Strict)
                .map_err(|e| e.to_string())?;
            let t = error_taxonomy(&v(k), &sets.erroneous, &results).map_err(|e| e.to_string())?;
            ensure!(
                t.p.len() + t.f.len() + t.b.len() + t.other.len() == sets.erroneous.len(),
                "taxonomy partition"
            );
        }
    }
    Ok(format!(
        "20-CVE table exact; ER' <= ER on {cases} generated cases"
    ))
}

/// Tail probabilities by walking all sign patterns.
fn signed_rank_oracle(d: &[f64]) -> f64 {
    let ranks = midranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let observed: f64 = ranks
        .iter()
        .zip(d)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let n = d.len();
    let ge = (0u64..1 << n)
        .filter(|mask| {
            (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum::<f64>()
                >= observed - 1e-9
        })
        .count();
    ge as f64 / (1u64 << n) as f64
}

/// Tail probabilities by walking all assignments of pooled ranks.
fn rank_sum_oracle(x: &[f64], y: &[f64]) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let (n, big) = (x.len(), pooled.len());
    let observed: f64 = ranks[..n].iter().sum();
    let (mut ge, mut total) = (0usize, 0usize);
    for mask in (0u64..1 << big).filter(|m| m.count_ones() as usize == n) {
        total += 1;
        let w: f64 = (0..big)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        ge += usize::from(w >= observed - 1e-9);
    }
    ge as f64 / total as f64
}

/// Simpson's rule on the chi-square(1) density after substituting x = u^2.
fn chi2_one_oracle(x: f64) -> f64 {
    let n = 20_000;
    let h = x.sqrt() / n as f64;
    let f = |u: f64| 2.0 * (-u * u / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = f(0.0) + f(x.sqrt());
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - s * h / 3.0
}

fn statistical_kernel() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut compared = 0;
    for n in 1..=10usize {
        for _ in 0..20 {
            let d: Vec<f64> = (0..n)
                .map(|_| rng.gen_range(-3i32..=4) as f64)
                .filter(|x| *x != 0.0)
                .collect();
            if d.is_empty() {
                continue;
            }
            let got =
                wilcoxon_signed_rank(&d, 0.0, Alternative::Greater).map_err(|e| e.to_string())?;
            let want = signed_rank_oracle(&d);
            ensure!(got.method == Method::Exact, "n={n} not exact");
            ensure!(
                (got.p_value - want).abs() <= 1e-12,
                "signed-rank {d:?}: {} vs {want}",
                got.p_value
            );
            compared += 1;
        }
        for m in 1..=10 - n.min(9) {
            if n + m > 10 {
                continue;
            }
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
            let y: Vec<f64> = (0..m).map(|_| rng.gen_range(0..6) as f64).collect();
            let got = wilcoxon_rank_sum(&x, &y, Alternative::Greater).map_err(|e| e.to_string())?;
            let want = rank_sum_oracle(&x, &y);
            ensure!(
                (got.p_value - want).abs() <= 1e-12,
                "rank-sum {x:?} {y:?}: {} vs {want}",
                got.p_value
            );
            compared += 1;
        }
    }
    let six = wilcoxon_signed_rank(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 0.0, Alternative::Greater)
        .map_err(|e| e.to_string())?
        .p_value;
    ensure!(six == 0.015625, "all-positive n=6 gives {six}");
    let sep = wilcoxon_rank_sum(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0], Alternative::Greater)
        .map_err(|e| e.to_string())?
        .p_value;
    ensure!((sep - 0.05).abs() < 1e-15, "separated 3v3 gives {sep}");
    let bonf = bonferroni(0.05, 2).map_err(|e| e.to_string())?;
    ensure!(bonf == 0.025, "bonferroni {bonf}");
    let chi = chi2_sf(3.84, 1.0);
    let oracle = chi2_one_oracle(3.84);
    ensure!(
        (chi - oracle).abs() < 1e-9 && (chi - 0.05).abs() <= 5e-4,
        "chi2 {chi} vs {oracle}"
    );
    Ok(format!(
        "{compared} enumeration checks; chi2(3.84, 1) = {chi:.5}"
    ))
}

fn laplace_trend() -> Check {
    let uniform = laplace_factor(&[5; 12]).map_err(|e| e.to_string())?;
    ensure!(uniform == 0.0, "uniform gives {uniform}");
    let mut late = [0u64; 12];
    late[11] = 20;
    let l = laplace_factor(&late).map_err(|e| e.to_string())?;
    ensure!((l - 7.1).abs() <= 0.01, "all-last-month gives {l}");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let mut counts: Vec<u64> = (0..rng.gen_range(2..40))
            .map(|_| rng.gen_range(0..20))
            .collect();
        counts[0] += 1;
        let forward = laplace_factor(&counts).map_err(|e| e.to_string())?;
        counts.reverse();
        let backward = laplace_factor(&counts).map_err(|e| e.to_string())?;
        ensure!(
            forward == -backward,
            "{forward} vs {backward} on {counts:?}"
        );
    }
    Ok(format!(
        "uniform 0, all-last-month {l:.4}, 200 reversals exact"
    ))
}

fn vdm_self_consistency() -> Check {
    let start = Instant::now();
    let version = v(1);
    let curve = |model: VdmModel, params: &[f64], months: usize| -> Vec<f64> {
        (1..=months).map(|t| model.eval(params, t as f64)).collect()
    };
    for (model, truth, months) in [
        (VdmModel::Re, &[80.0, 0.15][..], 36),
        (VdmModel::Ln, &[2.0, 1.0][..], 24),
        (VdmModel::Rq, &[0.05, 1.5][..], 30),
    ] {
        let rec = fit(model, &version, &curve(model, truth, months), months)
            .map_err(|e| e.to_string())?;
        for (got, want) in rec.params.iter().zip(truth) {
            ensure!(
                ((got - want) / want).abs() < 1e-4,
                "{model:?} recovered {:?}",
                rec.params
            );
        }
        ensure!(
            rec.p_value.is_some_and(|p| p > 0.99),
            "{model:?} p = {:?}",
            rec.p_value
        );
    }

    let noise = Normal::new(0.0, 0.05).unwrap();
    let (mut re, mut ln): (Vec<FitRecord>, Vec<FitRecord>) = (Vec::new(), Vec::new());
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys: Vec<f64> = curve(VdmModel::Re, &[80.0, 0.15], 48)
            .into_iter()
            .map(|y| y * (1.0 + noise.sample(&mut rng)))
            .collect();
        re.push(fit(VdmModel::Re, &version, &ys, 48).map_err(|e| e.to_string())?);
        ln.push(fit(VdmModel::Ln, &version, &ys, 48).map_err(|e| e.to_string())?);
    }
    let q_re = quality(&re).map_err(|e| e.to_string())?;
    let q_ln = quality(&ln).map_err(|e| e.to_string())?;
    ensure!(
        q_re >= 0.95 && q_ln <= 0.5,
        "RE quality {q_re}, LN quality {q_ln}"
    );

    let same = compare_datasets(
        &re,
        &re,
        |r| r.p_value.unwrap_or(0.0),
        Alternative::TwoSided,
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        same.iter().all(|c| c.outcome.result.p_value == 1.0),
        "identical datasets"
    );
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.0}s");
    Ok(format!(
        "RE quality {q_re:.2}, LN quality {q_ln:.2}; {secs:.1}s"
    ))
}

/// A random file and a random edit of it as hunks with one line of context.
fn random_edit(rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<DiffHunk>, Vec<String>) {
    const ODD: [&str; 6] = [
        "",
        "--- a/x",
        "+++ b/x",
        "@@ -1 +1 @@",
        "}",
        "  \t trailing  ",
    ];
    let text = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.2) {
            ODD[rng.gen_range(0..ODD.len())].to_string()
        } else {
            (0..rng.gen_range(0..30))
                .map(|_| rng.gen_range(' '..='~'))
                .collect()
        }
    };
    let old: Vec<String> = (0..rng.gen_range(0..40)).map(|_| text(rng)).collect();
    let mut tagged = Vec::new();
    let mut cursor = 0;
    while cursor < old.len() || rng.gen_bool(0.1) {
        let roll = rng.gen_range(0..6);
        if roll == 5 || cursor >= old.len() {
            tagged.push(HunkLine {
                tag: LineTag::Added,
                text: text(rng),
            });
            if cursor >= old.len() {
                break;
            }
        } else {
            let tag = if roll == 4 {
                LineTag::Removed
            } else {
                LineTag::Context
            };
            tagged.push(HunkLine {
                tag,
                text: old[cursor].clone(),
            });
            cursor += 1;
        }
    }
    let new: Vec<String> = tagged
        .iter()
        .filter(|l| l.tag != LineTag::Removed)
        .map(|l| l.text.clone())
        .collect();

    let changed: Vec<usize> = (0..tagged.len())
        .filter(|&i| tagged[i].tag != LineTag::Context)
        .collect();
    let mut hunks = Vec::new();
    let mut i = 0;
    while i < changed.len() {
        let first = changed[i].saturating_sub(1);
        let mut last = changed[i];
        while i + 1 < changed.len() && changed[i + 1] <= last + 3 {
            i += 1;
            last = changed[i];
        }
        i += 1;
        let end = (last + 1).min(tagged.len() - 1);
        let before = &tagged[..first];
        let lines = tagged[first..=end].to_vec();
        let old_no = 1 + before.iter().filter(|l| l.tag != LineTag::Added).count();
        let new_no = 1 + before.iter().filter(|l| l.tag != LineTag::Removed).count();
        let old_len = lines.iter().filter(|l| l.tag != LineTag::Added).count();
        let new_len = lines.iter().filter(|l| l.tag != LineTag::Removed).count();
        hunks.push(DiffHunk {
            old_start: if old_len == 0 { old_no - 1 } else { old_no },
            old_len,
            new_start: if new_len == 0 { new_no - 1 } else { new_no },
            new_len,
            lines,
        });
    }
    (old, hunks, new)
}

fn joined(lines: &[String]) -> String {
    lines.iter().map(|l| format!("{l}\n")).collect()
}

fn parser_robustness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..1000 {
        let (old, hunks, new) = random_edit(&mut rng);
        let diff = FileDiff {
            old_path: Some("src/file.cc".into()),
            new_path: Some("src/file.cc".into()),
            binary: false,
            hunks: hunks.clone(),
        };
        let text = render_file_diff(&diff);
        let parsed = parse_patch(&text).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(parsed == [diff], "case {case}: diff did not round-trip");
        let outcome = parse_file_diff(&text).map_err(|e| e.to_string())?;
        ensure!(
            outcome == DiffOutcome::Text(hunks.clone()),
            "case {case}: file diff"
        );
        ensure!(
            hunks.iter().all(DiffHunk::is_consistent),
            "case {case}: inconsistent hunk"
        );
        let applied =
            apply_hunks(&joined(&old), &hunks).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(applied == joined(&new), "case {case}: apply");

        let lines: Vec<AnnotatedLine> = old
            .iter()
            .enumerate()
            .map(|(i, text)| AnnotatedLine {
                line_no: i + 1,
                origin_rev: RevisionId::new(rng.gen_range(1..200_000)),
                author: format!("dev{}@example.org", rng.gen_range(0..50)),
                text: text.clone(),
            })
            .collect();
        let parsed =
            parse_annotate(&render_annotate(&lines)).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(parsed == lines, "case {case}: annotate did not round-trip");
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = table1::build(dir.path()).map_err(|e| e.to_string())?;
    let repo = fixture.open_repository().map_err(|e| e.to_string())?;
    let mut checked = 0;
    for entry in repo.log().map_err(|e| e.to_string())?.windows(2) {
        let (pre, post) = (&entry[0].revision, &entry[1].revision);
        for file in &entry[1].changed_files {
            let outcome = repo.diff(file, pre, post).map_err(|e| e.to_string())?;
            ensure!(
                outcome.hunks().iter().all(DiffHunk::is_consistent),
                "{file} at {post}"
            );
            let old = repo
                .snapshot(file, pre)
                .map_err(|e| e.to_string())?
                .unwrap_or_default();
            let new = repo
                .snapshot(file, post)
                .map_err(|e| e.to_string())?
                .unwrap_or_default();
            let applied = apply_hunks(&old, outcome.hunks()).map_err(|e| e.to_string())?;
            ensure!(applied == new, "{file} at {post} does not apply");
            checked += 1;
        }
    }
    Ok(format!(
        "1000 diff and annotate round-trips; {checked} fixture diffs consistent"
    ))
}

fn vulnver(args: &[&str], cwd: &Path) -> std::result::Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vulnver"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "vulnver {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

/// Every file under `dir`, with the manifest's timestamp blanked.
fn artifact_set(dir: &Path) -> std::result::Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        if name == "manifest.json" {
            let mut m: serde_json::Value =
                serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
            m["generated_at"] = serde_json::Value::Null;
            bytes = serde_json::to_vec(&m).map_err(|e| e.to_string())?;
        }
        files.push((name, bytes));
    }
    files.sort();
    Ok(files)
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    vulnver(&["synth", "--table1", "--out", "fixture"], root)?;
    let report = |out: &str| {
        vulnver(
            &[
                "report",
                "--repo",
                "fixture/repo",
                "--dataset",
                "fixture/dataset.jsonl",
                "--catalog",
                "fixture/catalog.json",
                "--numbering",
                "svn-trailer",
                "--out",
                out,
            ],
            root,
        )
    };
    report("a")?;
    let first = artifact_set(&root.join("a"))?;
    report("a")?;
    let again = artifact_set(&root.join("a"))?;
    report("b")?;
    let fresh = artifact_set(&root.join("b"))?;
    ensure!(first == again, "second run in place changed artifacts");
    ensure!(first == fresh, "run into a new directory differs");
    ensure!(first.len() >= 10, "only {} artifacts", first.len());
    Ok(format!("{} artifacts identical across runs", first.len()))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("table-1 fixture", table1_fixture),
        ("ground-truth oracle", ground_truth_oracle),
        ("formula exactness", formula_exactness),
        ("statistical kernel", statistical_kernel),
        ("laplace trend", laplace_trend),
        ("vdm self-consistency", vdm_self_consistency),
        ("parser robustness", parser_robustness),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(why) => {
                println!("criterion {}: FAIL {name}: {why}", i + 1);
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
