use consensus_core::stats::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Deserialize)]
struct Welch {
    a: Vec<f64>,
    b: Vec<f64>,
    t: f64,
    df: f64,
    p: f64,
}

#[derive(Deserialize)]
struct Exact {
    table: [[u64; 2]; 2],
    fisher: f64,
    boschloo: f64,
}

#[derive(Deserialize)]
struct Oracles {
    welch: Vec<Welch>,
    exact: Vec<Exact>,
}

fn oracles() -> Oracles {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/stats_oracles.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn welch_matches_frozen_values() {
    let o = oracles();
    assert_eq!(o.welch.len(), 10);
    for w in &o.welch {
        let r = welch_t_test(&w.a, &w.b).unwrap();
        assert!((r.p - w.p).abs() < 1e-9, "p {} vs {}", r.p, w.p);
        assert!((r.t - w.t).abs() < 1e-9 && (r.df - w.df).abs() < 1e-9);
        let s = welch_t_test(&w.b, &w.a).unwrap();
        assert!((s.t + r.t).abs() < 1e-12 && (s.p - r.p).abs() < 1e-12);
    }
}

#[test]
fn welch_affine_invariance() {
    let o = oracles();
    for w in &o.welch {
        let f = |x: &f64| 3.7 * x - 12.0;
        let r = welch_t_test(&w.a.iter().map(f).collect::<Vec<_>>(), &w.b.iter().map(f).collect::<Vec<_>>()).unwrap();
        assert!((r.p - w.p).abs() < 1e-9);
    }
}

#[test]
fn exact_tests_match_frozen_values() {
    let o = oracles();
    assert_eq!(o.exact.len(), 10);
    for e in &o.exact {
        let t = Table2x2::new(e.table);
        let f = fisher_exact(&t).unwrap();
        let b = boschloo_exact(&t, DEFAULT_GRID, DEFAULT_CAP).unwrap();
        assert!((f - e.fisher).abs() < 1e-6, "{:?}: fisher {f} vs {}", e.table, e.fisher);
        assert!((b - e.boschloo).abs() < 1e-6, "{:?}: boschloo {b} vs {}", e.table, e.boschloo);
    }
}

/// Brute force: every table with the observed margins, probabilities from
/// plain factorial products.
fn fisher_brute(t: [[u64; 2]; 2]) -> f64 {
    let fact = |n: u64| (1..=n).map(|k| k as f64).product::<f64>();
    let (r1, r2, c1) = (t[0][0] + t[0][1], t[1][0] + t[1][1], t[0][0] + t[1][0]);
    let n = r1 + r2;
    let prob = |a: u64| {
        let (b, c) = (r1 - a, c1 - a);
        let d = r2 - c;
        fact(r1) * fact(r2) * fact(c1) * fact(n - c1) / (fact(n) * fact(a) * fact(b) * fact(c) * fact(d))
    };
    let obs = prob(t[0][0]);
    (c1.saturating_sub(r2)..=r1.min(c1)).map(prob).filter(|p| *p <= obs * (1.0 + 1e-7)).sum::<f64>().min(1.0)
}

#[test]
fn fisher_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..500 {
        let t = [[rng.random_range(0..20), rng.random_range(0..20)], [rng.random_range(0..20), rng.random_range(0..20)]];
        if t.iter().flatten().sum::<u64>() == 0 {
            continue;
        }
        let f = fisher_exact(&Table2x2::new(t)).unwrap();
        assert!((f - fisher_brute(t)).abs() < 1e-6, "{t:?}");
    }
}

#[test]
fn boschloo_below_fisher_on_random_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut n = 0;
    while n < 200 {
        let t = [[rng.random_range(0..25), rng.random_range(0..25)], [rng.random_range(0..25), rng.random_range(0..25)]];
        let tab = Table2x2::new(t);
        let (r1, r2) = tab.row_totals();
        if r1 == 0 || r2 == 0 {
            continue;
        }
        let f = fisher_exact(&tab).unwrap();
        let b = boschloo_exact(&tab, DEFAULT_GRID, DEFAULT_CAP).unwrap();
        assert!(b <= f + 1e-12, "{t:?}: {b} > {f}");
        n += 1;
    }
}

#[test]
fn boschloo_null_rejection_rate() {
    let (n1, n2, pi) = (20u64, 25u64, 0.35);
    let test = Boschloo::new(n1, n2, DEFAULT_GRID, DEFAULT_CAP).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2000);
    let draw = |rng: &mut ChaCha8Rng, n: u64| (0..n).filter(|_| rng.random::<f64>() < pi).count() as u64;
    let reps = 2000;
    let rejected = (0..reps).filter(|_| test.p_value(draw(&mut rng, n1), draw(&mut rng, n2)) <= 0.05).count();
    let rate = rejected as f64 / reps as f64;
    assert!(rate <= 0.06, "rejection rate {rate}");
}
