use std::collections::BTreeSet;

use vulnver::analysis::{classify, error_taxonomy, ErMode};
use vulnver::mining::{verify, PatternSet};
use vulnver::model::{Fragment, VerificationStatus};
use vulnver::synth::{
    generate, read_truth, score, FixStyle, GroundTruthPlan, NoiseSpec, PlanConfig, TRUTH_FILE,
};
use vulnver::vcs::GitRepository;

fn config(seed: u64) -> PlanConfig {
    PlanConfig {
        seed,
        noise: NoiseSpec {
            p_stretch_past: 0.3,
            p_future: 0.2,
            p_beta: 0.1,
        },
        no_bug: 1,
        no_commit: 1,
        ..PlanConfig::default()
    }
}

fn run(
    plan: &GroundTruthPlan,
) -> (
    vulnver::synth::Score,
    Vec<vulnver::model::VerificationResult>,
    vulnver::synth::GeneratedRepo,
) {
    let dir = tempfile::tempdir().unwrap();
    let generated = generate(plan, &dir.path().join("w")).unwrap();
    let repo = GitRepository::open(&generated.repo).unwrap();
    let out = verify(
        &repo,
        &generated.dataset,
        &generated.catalog,
        &PatternSet::default(),
        1,
    )
    .unwrap();
    let s = score(&out.results, &generated.truth).unwrap();
    let on_disk = std::fs::read_to_string(dir.path().join("w").join(TRUTH_FILE)).unwrap();
    assert_eq!(read_truth(&on_disk).unwrap(), generated.truth);
    (s, out.results, generated)
}

#[test]
fn recovers_planted_versions() {
    for seed in 0..8 {
        let plan = GroundTruthPlan::random(&config(seed)).unwrap();
        let (s, _, _) = run(&plan);
        assert_eq!(s.exact_match_rate, 1.0, "seed {seed}: {s:?}");
    }
}

#[test]
fn addition_only_fixes_use_markers() {
    let plan = GroundTruthPlan::random(&PlanConfig {
        seed: 3,
        p_addition_only: 1.0,
        ..PlanConfig::default()
    })
    .unwrap();
    assert!(plan
        .vulnerabilities
        .iter()
        .all(|v| v.fix_style == FixStyle::AdditionOnly));
    let (s, results, _) = run(&plan);
    assert_eq!(s.exact_match_rate, 1.0);
    for r in results {
        assert!(r
            .evidence
            .iter()
            .all(|e| matches!(e.fragment, Fragment::Marker(_))));
        assert!(!r.evidence.is_empty());
    }
}

#[test]
fn collisions_do_not_confuse_the_matcher() {
    for seed in 0..3 {
        let plan = GroundTruthPlan::random(&PlanConfig {
            collisions: true,
            ..config(seed)
        })
        .unwrap();
        let (s, _, _) = run(&plan);
        assert_eq!(s.exact_match_rate, 1.0, "seed {seed}");
    }
}

#[test]
fn stretch_past_noise_yields_only_p_errors() {
    let plan = GroundTruthPlan::random(&PlanConfig {
        seed: 11,
        noise: NoiseSpec {
            p_stretch_past: 1.0,
            ..NoiseSpec::default()
        },
        ..PlanConfig::default()
    })
    .unwrap();
    let (s, results, generated) = run(&plan);
    assert_eq!(s.exact_match_rate, 1.0);
    let mut erroneous = 0;
    for v in generated.catalog.official_versions() {
        let sets = classify(
            &results,
            &generated.dataset,
            &generated.catalog,
            &v,
            ErMode::Paper,
        )
        .unwrap();
        let tax = error_taxonomy(&v, &sets.erroneous, &results).unwrap();
        erroneous += sets.erroneous.len();
        assert_eq!(tax.p.len(), sets.erroneous.len());
    }
    assert!(erroneous > 0);
}

#[test]
fn generation_is_deterministic() {
    let plan = GroundTruthPlan::random(&config(5)).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate(&plan, a.path()).unwrap();
    generate(&plan, b.path()).unwrap();
    for name in ["dataset.jsonl", "catalog.json", "truth.jsonl", "plan.json"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap()
        );
    }
    let head = |d: &std::path::Path| {
        std::process::Command::new("git")
            .arg("-C")
            .arg(d.join("repo"))
            .args(["rev-parse", "HEAD"])
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(head(a.path()), head(b.path()));
    assert!(generate(&plan, a.path()).is_err());
}

#[test]
fn beta_only_vulnerabilities_verify_empty() {
    let plan = GroundTruthPlan::random(&PlanConfig {
        seed: 2,
        noise: NoiseSpec {
            p_beta: 1.0,
            ..NoiseSpec::default()
        },
        ..PlanConfig::default()
    })
    .unwrap();
    let (s, results, _) = run(&plan);
    assert_eq!(s.exact_match_rate, 1.0);
    for r in results {
        assert_eq!(
            r.status,
            VerificationStatus::Verified {
                versions: BTreeSet::new()
            }
        );
    }
}
