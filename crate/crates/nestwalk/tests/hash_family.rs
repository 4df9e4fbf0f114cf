use nestwalk::hash_family::{is_prime, next_prime, verify_family, verify_kwise, PolyHash};
use proptest::prelude::*;
use std::collections::HashMap;

/// Independent enumeration: count the value tuples of every degree-(k−1) polynomial over
/// GF(p) at the given points.
fn tuple_counts(k: u32, p: u64, points: &[u64]) -> HashMap<Vec<u64>, u64> {
    let mut counts = HashMap::new();
    for code in 0..p.pow(k) {
        let coeffs: Vec<u64> = (0..k).map(|i| code / p.pow(i) % p).collect();
        let values: Vec<u64> = points.iter().map(|&x| coeffs.iter().rev().fold(0, |acc, &c| (acc * x + c) % p)).collect();
        *counts.entry(values).or_insert(0) += 1;
    }
    counts
}

#[test]
fn cubic_family_over_gf5_is_uniform_on_every_triple() {
    let p = 5;
    for a in 0..p {
        for b in a + 1..p {
            for c in b + 1..p {
                let counts = tuple_counts(3, p, &[a, b, c]);
                assert_eq!(counts.len(), 125, "every triple of values occurs");
                assert!(counts.values().all(|&n| n == 1));
            }
        }
    }
    assert!(verify_kwise(3, 5).pass);
}

#[test]
fn constant_family_is_one_wise_uniform() {
    for p in [2u64, 3, 7] {
        for x in 0..p {
            let counts = tuple_counts(1, p, &[x]);
            assert!(counts.values().all(|&n| n == 1) && counts.len() == p as usize);
        }
        assert!(verify_kwise(1, p).pass);
    }
    let f = PolyHash::sample(1, 50, 50, 9);
    let v = f.eval(0);
    assert!((0..50).all(|x| f.eval(x) == v));
}

#[test]
fn kwise_examples_and_negative_control() {
    let r = verify_kwise(2, 5);
    assert!(r.pass && r.polynomials == 25 && r.tuples_checked == 10);
    let r = verify_kwise(3, 7);
    assert!(r.pass && r.tuples_checked == 35);
    // two coefficients cannot make three points independent
    let bad = verify_family(2, 3, 5);
    assert!(!bad.pass && bad.max_scaled_deviation > 0);
    let counts = tuple_counts(2, 5, &[0, 1, 2]);
    assert!(counts.len() < 125);
}

#[test]
fn exact_kwise_for_small_primes() {
    for p in [2u64, 3, 5, 7, 11, 13] {
        for k in 1..=3usize.min(p as usize) {
            if p.pow(2 * k as u32) > 5_000_000 {
                continue;
            }
            assert!(verify_kwise(k, p).pass, "k={k} p={p}");
        }
    }
}

#[test]
fn prime_selection() {
    let brute = |n: u64| (n.max(2)..).find(|&q| (2..q).take_while(|d| d * d <= q).all(|d| q % d != 0)).unwrap();
    for n in 0..500 {
        assert_eq!(next_prime(n), brute(n), "n={n}");
        assert_eq!(is_prime(n), n >= 2 && brute(n) == n);
    }
}

#[test]
fn marginals_are_close_to_uniform() {
    // Monte Carlo spot check over random 3-wise functions; range 10 over domain 24
    let (range, draws) = (10u64, 40_000u64);
    let mut counts = vec![0u64; range as usize];
    for seed in 0..draws {
        let f = PolyHash::sample(3, 24, range, seed);
        counts[f.eval(7) as usize] += 1;
    }
    let expect = draws as f64 / range as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    // 9 degrees of freedom, 0.999 quantile 27.88
    assert!(chi2 < 27.88, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn coefficients_round_trip_through_json() {
    let f = PolyHash::sample(3, 30, 30, 4);
    let g: PolyHash = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
    assert_eq!(f, g);
    assert!((0..30).all(|x| f.eval(x) == g.eval(x)));
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn evaluation_stays_in_range_and_is_deterministic(k in 1usize..5, domain in 1u64..500, range in 1u64..500, seed: u64) {
        let f = PolyHash::sample(k, domain, range, seed);
        prop_assert!(f.prime >= domain.max(range) && is_prime(f.prime));
        for x in 0..domain.min(50) {
            let v = f.eval(x);
            prop_assert!(v < range);
            prop_assert_eq!(v, f.eval(x));
            prop_assert_eq!(f.eval_one_based(x), v + 1);
        }
        let g = PolyHash::sample(k, domain, range, seed);
        prop_assert_eq!(f, g);
    }
}
