use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vulnver::stats::{
    bonferroni, chi2_sf, chi_square_gof, laplace_factor, midranks, wilcoxon_rank_sum,
    wilcoxon_rank_sum_normal, wilcoxon_signed_rank, wilcoxon_signed_rank_normal, Alternative,
    Method,
};

const ALTERNATIVES: [Alternative; 3] = [
    Alternative::Greater,
    Alternative::Less,
    Alternative::TwoSided,
];

fn combine(alt: Alternative, upper: f64, lower: f64) -> f64 {
    match alt {
        Alternative::Greater => upper,
        Alternative::Less => lower,
        Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
    }
}

/// Walks all 2^n sign patterns over the midranks of |d|.
fn signed_rank_oracle(values: &[f64], mu0: f64, alt: Alternative) -> f64 {
    let d: Vec<f64> = values
        .iter()
        .map(|v| v - mu0)
        .filter(|d| *d != 0.0)
        .collect();
    let ranks = midranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let observed: f64 = ranks
        .iter()
        .zip(&d)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();
    let n = d.len();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        ge += u64::from(w >= observed - 1e-9);
        le += u64::from(w <= observed + 1e-9);
    }
    let total = (1u64 << n) as f64;
    combine(alt, ge as f64 / total, le as f64 / total)
}

/// Walks all C(n+m, n) ways to assign the pooled midranks to the first sample.
fn rank_sum_oracle(x: &[f64], y: &[f64], alt: Alternative) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let n = x.len();
    let big = pooled.len();
    let observed: f64 = ranks[..n].iter().sum();
    let (mut ge, mut le, mut total) = (0u64, 0u64, 0u64);
    for mask in 0u64..(1 << big) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let w: f64 = (0..big)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        total += 1;
        ge += u64::from(w >= observed - 1e-9);
        le += u64::from(w <= observed + 1e-9);
    }
    combine(alt, ge as f64 / total as f64, le as f64 / total as f64)
}

fn sample(rng: &mut ChaCha8Rng, n: usize, ties: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if ties {
                rng.gen_range(-3i32..=4) as f64
            } else {
                rng.gen_range(-1.0..1.5)
            }
        })
        .collect()
}

#[test]
fn signed_rank_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 1..=10 {
        for trial in 0..20 {
            let values = sample(&mut rng, n, trial % 2 == 0);
            if values.iter().all(|v| *v == 0.0) {
                continue;
            }
            for alt in ALTERNATIVES {
                let got = wilcoxon_signed_rank(&values, 0.0, alt).unwrap();
                assert_eq!(got.method, Method::Exact);
                let want = signed_rank_oracle(&values, 0.0, alt);
                assert!(
                    (got.p_value - want).abs() <= 1e-12,
                    "{values:?} {alt:?}: {} vs {want}",
                    got.p_value
                );
            }
        }
    }
}

#[test]
fn rank_sum_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=9 {
        for m in 1..=(10 - n) {
            for trial in 0..6 {
                let x = sample(&mut rng, n, trial % 2 == 0);
                let y = sample(&mut rng, m, trial % 2 == 0);
                for alt in ALTERNATIVES {
                    let got = wilcoxon_rank_sum(&x, &y, alt).unwrap();
                    assert_eq!(got.method, Method::Exact);
                    let want = rank_sum_oracle(&x, &y, alt);
                    assert!((got.p_value - want).abs() <= 1e-12, "{x:?} {y:?} {alt:?}");
                }
            }
        }
    }
}

#[test]
fn five_by_five_rank_sum_uses_all_252_assignments() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = sample(&mut rng, 5, false);
    let y = sample(&mut rng, 5, false);
    let got = wilcoxon_rank_sum(&x, &y, Alternative::TwoSided).unwrap();
    assert!((got.p_value - rank_sum_oracle(&x, &y, Alternative::TwoSided)).abs() <= 1e-12);
    let p = wilcoxon_rank_sum(&x, &y, Alternative::Greater)
        .unwrap()
        .p_value;
    assert!((p * 252.0 - (p * 252.0).round()).abs() < 1e-9);
}

#[test]
fn headline_values() {
    let r =
        wilcoxon_signed_rank(&[0.3, 0.5, 0.2, 0.9, 0.4, 0.6], 0.05, Alternative::Greater).unwrap();
    assert_eq!(r.p_value, 0.015625);
    let twelve: Vec<f64> = (0..12).map(|i| 0.1 + 0.05 * i as f64).collect();
    let r = wilcoxon_signed_rank(&twelve, 0.05, Alternative::Greater).unwrap();
    assert_eq!(r.p_value, 1.0 / 4096.0);
    assert_eq!(r.method, Method::Exact);
    let r = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], Alternative::Less).unwrap();
    assert!((r.p_value - 0.05).abs() < 1e-15);
    assert_eq!(bonferroni(0.05, 2).unwrap(), 0.025);
}

/// One-sided tails agree within 0.01; a two-sided p doubles the smaller tail
/// and with it the approximation error.
fn agreement_bound(alt: Alternative) -> f64 {
    match alt {
        Alternative::TwoSided => 0.02,
        _ => 0.01,
    }
}

#[test]
fn exact_and_normal_agree_at_twelve() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..300 {
        let values = sample(&mut rng, 12, false);
        for alt in ALTERNATIVES {
            let exact = wilcoxon_signed_rank(&values, 0.0, alt).unwrap();
            let normal = wilcoxon_signed_rank_normal(&values, 0.0, alt).unwrap();
            let gap = (exact.p_value - normal.p_value).abs();
            assert!(gap < agreement_bound(alt), "{values:?} {alt:?}: {gap}");
        }
        let (x, y) = values.split_at(6);
        for alt in ALTERNATIVES {
            let exact = wilcoxon_rank_sum(x, y, alt).unwrap();
            let normal = wilcoxon_rank_sum_normal(x, y, alt).unwrap();
            let gap = (exact.p_value - normal.p_value).abs();
            assert!(gap < agreement_bound(alt), "{x:?} {y:?} {alt:?}: {gap}");
        }
    }
}

/// Gamma(k/2) for a positive integer k.
fn half_gamma(k: u32) -> f64 {
    let mut g = if k.is_multiple_of(2) {
        1.0
    } else {
        std::f64::consts::PI.sqrt()
    };
    let mut a = if k.is_multiple_of(2) { 1.0 } else { 0.5 };
    while a < k as f64 / 2.0 - 1e-9 {
        g *= a;
        a += 1.0;
    }
    g
}

/// P(X > x) as 1 - integral of the density over [0, x], with x = u^2 so the
/// integrand stays smooth at zero; composite Simpson rule.
fn chi2_sf_by_integration(x: f64, k: u32) -> f64 {
    let norm = 2f64.powf(k as f64 / 2.0) * half_gamma(k);
    let f = |u: f64| 2.0 * u.powi(k as i32 - 1) * (-u * u / 2.0).exp() / norm;
    let b = x.sqrt();
    let steps = 20_000;
    let h = b / steps as f64;
    let mut sum = f(0.0) + f(b);
    for i in 1..steps {
        sum += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - sum * h / 3.0
}

#[test]
fn chi_square_tail_matches_integration() {
    let oracle = chi2_sf_by_integration(3.84, 1);
    let p = chi2_sf(3.84, 1.0);
    assert!((p - oracle).abs() < 1e-10, "{p} vs {oracle}");
    assert!((p - 0.0500).abs() < 5e-4);
    for k in 1..=12 {
        for x in [0.5, 1.0, 2.5, 3.84, 7.0, 12.0, 20.0] {
            let want = chi2_sf_by_integration(x, k);
            let got = chi2_sf(x, k as f64);
            assert!((got - want).abs() < 1e-10, "x={x} k={k}: {got} vs {want}");
        }
    }
    let r = chi_square_gof(
        &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        0,
    )
    .unwrap();
    assert_eq!(r.p_value, 1.0);
}

proptest! {
    #[test]
    fn p_values_are_probabilities(values in prop::collection::vec(-5.0f64..5.0, 1..30),
                                  other in prop::collection::vec(-5.0f64..5.0, 1..30)) {
        for alt in ALTERNATIVES {
            if let Ok(r) = wilcoxon_signed_rank(&values, 0.3, alt) {
                prop_assert!((0.0..=1.0).contains(&r.p_value));
            }
            let r = wilcoxon_rank_sum(&values, &other, alt).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }

    #[test]
    fn signed_rank_ignores_sign_preserving_monotone_maps(values in prop::collection::vec(-5.0f64..5.0, 1..20)) {
        let mapped: Vec<f64> = values.iter().map(|d| d.signum() * d.abs().powi(3) * 7.0).collect();
        for alt in ALTERNATIVES {
            let a = wilcoxon_signed_rank(&values, 0.0, alt);
            let b = wilcoxon_signed_rank(&mapped, 0.0, alt);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.p_value, b.p_value),
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }
    }

    #[test]
    fn rank_sum_ignores_common_increasing_maps(x in prop::collection::vec(-3.0f64..3.0, 1..15),
                                               y in prop::collection::vec(-3.0f64..3.0, 1..15)) {
        let map = |v: &[f64]| v.iter().map(|t| t.exp() * 2.0 + 1.0).collect::<Vec<_>>();
        for alt in ALTERNATIVES {
            let a = wilcoxon_rank_sum(&x, &y, alt).unwrap();
            let b = wilcoxon_rank_sum(&map(&x), &map(&y), alt).unwrap();
            prop_assert_eq!(a.p_value, b.p_value);
        }
    }

    #[test]
    fn laplace_is_antisymmetric(counts in prop::collection::vec(0u64..30, 2..60)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let mut reversed = counts.clone();
        reversed.reverse();
        prop_assert_eq!(laplace_factor(&reversed).unwrap(), -laplace_factor(&counts).unwrap());
    }
}
