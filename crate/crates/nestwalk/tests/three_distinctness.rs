mod common;

use nestwalk::combin::binom_f64;
use nestwalk::hash_family::PolyHash;
use nestwalk::history_set::Part;
use nestwalk::ledger::CostLedger;
use nestwalk::three_distinctness::{
    count_inner_marked, cross_pairs, desk_parameters, generate, is_triple, oracle_solve, preprocess, sample_tripartition, setup_state, solve,
    tripartition_from_hash, ConcreteFamily, GeneratorSpec, Instance, InstanceError, OuterWalk, SolveConfig, ThreeDistinctOps,
};
use nestwalk::verify::battery;
use nestwalk::walk::{max_abs_diff, Mode, WalkOps, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sort-free brute-force triple finder used as a second oracle.
fn brute_triple(values: &[u64]) -> Option<(usize, usize, usize)> {
    let n = values.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if values[i] == values[j] && values[j] == values[k] {
                    return Some((i + 1, j + 1, k + 1));
                }
            }
        }
    }
    None
}

#[test]
fn padding_example_and_invariants() {
    let pre = preprocess(&[5, 7]).unwrap();
    assert_eq!(pre.chi, vec![5, 7, 8, 9, 8, 9]);
    assert_eq!(pre.q, 7);

    let distinct = generate(GeneratorSpec::distinct(10), 3);
    let pre = preprocess(&distinct.values).unwrap();
    assert_eq!(pre.len(), 30);
    assert_eq!(brute_triple(&pre.chi), None);
    let pairs = (0..30).flat_map(|a| (a + 1..30).map(move |b| (a, b))).filter(|&(a, b)| pre.chi[a] == pre.chi[b]).count();
    assert_eq!(pairs, 10);

    let planted = generate(GeneratorSpec::planted(10), 4);
    let pre = preprocess(&planted.values).unwrap();
    let t = planted.planted.unwrap();
    assert_eq!(brute_triple(&pre.chi), Some((t[0], t[1], t[2])));
}

#[test]
fn preprocessing_rejects_two_triples() {
    assert!(matches!(preprocess(&[1, 1, 1, 2, 2, 2]), Err(InstanceError::SeveralTriples { .. })));
    assert!(Instance::new(vec![3, 3, 3, 3]).validate().is_err());
    assert!(Instance { n: 3, values: vec![1, 2, 2], planted: Some([1, 2, 3]) }.validate().is_err());
}

#[test]
fn oracle_examples() {
    assert_eq!(oracle_solve(&[1, 2, 3]), None);
    assert_eq!(oracle_solve(&[4, 9, 4, 1, 4]), Some((1, 3, 5)));
    assert!(is_triple(&[4, 9, 4, 1, 4], (1, 3, 5)));
    assert!(!is_triple(&[4, 9, 4, 1, 4], (1, 2, 3)));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let v: Vec<u64> = (0..rng.random_range(1..14)).map(|_| rng.random_range(1..6)).collect();
        let brute = brute_triple(&v);
        assert_eq!(oracle_solve(&v).is_some(), brute.is_some());
        if let Some(t) = oracle_solve(&v) {
            assert!(is_triple(&v, t));
        }
    }
}

#[test]
fn identity_hash_splits_into_consecutive_thirds() {
    let f = PolyHash::from_coefficients(vec![0, 1], 9, 9);
    let part = tripartition_from_hash(f, 9, 2, 2).unwrap().expect("identity hash splits exactly");
    let members = |p| part.initial_members(p).into_iter().map(|x| x + 1).collect::<Vec<_>>();
    assert_eq!(members(Part::A1), vec![1, 2, 3]);
    assert_eq!(members(Part::A2), vec![4, 5, 6]);
    assert_eq!(members(Part::A3), vec![7, 8, 9]);
    // membership is a pure function of the hash
    assert!((0..9).all(|x| part.part_of(x) == part.initial_part(x)));
}

#[test]
fn partition_sizes_after_setup_are_exact_thirds() {
    for seed in 0..50 {
        let inst = generate(GeneratorSpec { n: 24, planted: true, extra_pairs: 4, value_range: 0 }, seed);
        let pre = preprocess(&inst.values).unwrap();
        let (s1, s2) = desk_parameters(pre.len(), Mode::Abstract, None, None);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let part = sample_tripartition(pre.len(), s1, s2, &mut rng, &mut CostLedger::new()).unwrap();
        let third = pre.len() / 3;
        assert_eq!(part.initial_sizes(), [third + s1 - s2, third, third - s1 + s2]);
        if let Ok(out) = setup_state(&pre, part, s1, s2, &mut rng, Mode::Abstract) {
            assert_eq!(out.partition.sizes(), [third; 3]);
            assert!(out.pairs.is_disjoint());
            assert_eq!(out.measured.len(), s2);
        }
    }
}

#[test]
fn planted_triple_respects_partition_often_enough() {
    let inst = generate(GeneratorSpec::planted(12), 5);
    let pre = preprocess(&inst.values).unwrap();
    let t = inst.planted.unwrap().map(|i| i - 1);
    let (s1, s2) = desk_parameters(pre.len(), Mode::Concrete, None, None);
    let hits = nestwalk::par::map_seeds(0..10_000, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let part = sample_tripartition(pre.len(), s1, s2, &mut rng, &mut CostLedger::new()).unwrap();
        match setup_state(&pre, part, s1, s2, &mut rng, Mode::Abstract) {
            Ok(out) => out.partition.respects(t),
            Err(_) => false,
        }
    })
    .into_iter()
    .filter(|&h| h)
    .count();
    let rate = hits as f64 / 10_000.0;
    println!("planted triple respects the final partition in {rate:.4} of runs");
    assert!(rate >= 1.0 / 27.0 - 0.05);
}

#[test]
fn setup_state_is_uniform_over_pair_subsets() {
    let mut states = 0;
    for seed in 0..40 {
        let inst = generate(GeneratorSpec { n: 12, planted: true, extra_pairs: 3, value_range: 0 }, seed);
        let pre = preprocess(&inst.values).unwrap();
        for (s1, s2) in [(4, 1), (4, 2), (5, 2)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let Ok(part) = sample_tripartition(pre.len(), s1, s2, &mut rng, &mut CostLedger::new()) else { continue };
            let Ok(out) = setup_state(&pre, part, s1, s2, &mut rng, Mode::Concrete) else { continue };
            let amps = out.state.unwrap();
            let target = 1.0 / binom_f64(out.pairs.len() as u64, s2 as u64).sqrt();
            assert_eq!(amps.len() as f64, binom_f64(out.pairs.len() as u64, s2 as u64));
            assert!(amps.iter().all(|a| (a - target).abs() <= 1e-9));
            states += 1;
        }
    }
    assert!(states >= 20);
}

#[test]
fn setup_ledger_scales_with_formula() {
    // constant frozen from the first run over this grid, rounded up
    const C: f64 = 1.5;
    let mut worst: f64 = 0.0;
    for n in [24usize, 48, 72, 96] {
        for seed in 0..20 {
            let inst = generate(GeneratorSpec::planted(n / 3), seed);
            let pre = preprocess(&inst.values).unwrap();
            let len = pre.len();
            let (s1, s2) = desk_parameters(len, Mode::Abstract, None, None);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let part = sample_tripartition(len, s1, s2, &mut rng, &mut CostLedger::new()).unwrap();
            let Ok(out) = setup_state(&pre, part, s1, s2, &mut rng, Mode::Abstract) else { continue };
            let formula = s1 as f64 + s2 as f64 * (len as f64 / s1 as f64).sqrt();
            let per_attempt = out.ledger.queries as f64 / (1 + out.ledger.resamples) as f64;
            worst = worst.max(per_attempt / formula);
        }
    }
    println!("setup queries per accepted sample <= {worst:.3} * (s1 + s2 sqrt(N/s1))");
    assert!(worst <= C, "{worst}");
}

/// Independent count of s₁-subsets of a region (pairs at positions (0,1), (2,3), ...)
/// holding at least m whole pairs.
fn brute_marked(region: usize, pairs: usize, s1: usize, m: usize) -> (u128, bool) {
    let mut count = 0;
    let mut over = false;
    for s in 0u64..(1 << region) {
        if s.count_ones() as usize != s1 {
            continue;
        }
        let held = (0..pairs).filter(|&p| s >> (2 * p) & 3 == 3).count();
        if held >= m {
            count += 1;
        }
        over |= held > m;
    }
    (count, over)
}

#[test]
fn marked_counts_match_enumeration() {
    let mut combos = 0;
    for region in 4..=10usize {
        for pairs in 0..=region / 2 {
            for s1 in 2..=region.min(6) {
                for m in 1..=3usize {
                    if 2 * m > s1 {
                        continue;
                    }
                    let (truth, closed) = count_inner_marked(region, pairs, s1, m);
                    let (brute, over) = brute_marked(region, pairs, s1, m);
                    assert_eq!(truth, brute, "region {region} pairs {pairs} s1 {s1} m {m}");
                    let expect_closed = binom_f64(pairs as u64, m as u64) * binom_f64((region - 2 * m) as u64, (s1 - 2 * m) as u64);
                    assert_eq!(closed as f64, expect_closed);
                    assert!(truth <= closed);
                    assert_eq!(truth == closed, !over || pairs < m, "equality iff no subset holds more than m pairs");
                    combos += 1;
                }
            }
        }
    }
    assert!(combos >= 20);
    assert_eq!(count_inner_marked(8, 2, 4, 1), (29, 30));
    assert_eq!(count_inner_marked(8, 0, 4, 1).0, 0);
    assert_eq!(count_inner_marked(6, 2, 4, 2), (1, 1));
}

#[test]
fn garbage_states_are_normalized_and_symmetric() {
    for case in battery(7) {
        let fam = case.family();
        let chain = &case.outer.chain;
        for x in 0..chain.vertex_count() {
            for (y, _) in chain.neighbors(x) {
                let a = fam.garbage_state(x, y).unwrap();
                let b = fam.garbage_state(y, x).unwrap();
                assert!((a.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() <= 1e-12);
                assert_eq!(a, b, "edge ({x},{y})");
            }
        }
        let far = (0..chain.vertex_count()).find(|&y| y != 0 && chain.transition(0, y) == 0.0);
        if let Some(y) = far {
            assert!(fam.garbage_state(0, y).is_err());
        }
    }
}

#[test]
fn local_diffusion_matches_target_and_inverts() {
    for case in battery(7) {
        let fam = case.family();
        let ops = ThreeDistinctOps::new(&fam).unwrap();
        let target = fam.ldwg_target(&ops).unwrap();
        for (x, want) in target.iter().enumerate() {
            let start = ops.vertex_state(x);
            let mut v = start.clone();
            ops.local_diffusion(&mut v);
            let l2 = v.iter().zip(want).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(l2 <= 1e-10, "case {} vertex {x}: {l2}", case.seed);
            // the outer vertex register is untouched: only edges leaving x are populated
            for e in 0..ops.space().edge_count() {
                if ops.space().source(e) != x {
                    assert!(v[ops.layout().block(ops.space().vertex_count() + e)].iter().all(|a| a.norm() == 0.0));
                }
            }
            ops.local_diffusion_adj(&mut v);
            assert!(max_abs_diff(&v, &start) <= 1e-12);
        }
    }
}

#[test]
fn degenerate_batch_gives_single_remainder() {
    let cases = common::concrete_cases(2, 1, 1, 2, false, 300);
    assert!(!cases.is_empty());
    for case in &cases {
        let fam = case.family();
        let (x, y) = (0, case.outer.chain.neighbors(0).next().unwrap().0);
        let psi = fam.garbage_state(x, y).unwrap();
        assert_eq!(psi.len(), 1);
        assert!((psi[0] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn checking_finds_the_planted_triple() {
    let cases = common::concrete_cases(4, 1, 1, 3, true, 500);
    assert!(!cases.is_empty());
    for case in &cases {
        let outer = &case.outer;
        for x in 0..outer.chain.vertex_count() {
            let (t, ledger) = outer.check_marked(&case.pre, outer.chain.label(x));
            assert_eq!(t.is_some(), outer.marked[x]);
            assert_eq!(ledger.checks, 1);
            assert!(ledger.queries as f64 <= 2.0 * (case.pre.len() as f64).sqrt() + 2.0);
            if let Some(t) = t {
                assert!(t.iter().all(|&p| case.pre.value(p) == case.pre.value(t[0])));
                let orig = case.instance.planted.unwrap();
                assert_eq!(t, orig.map(|i| i - 1));
            }
        }
    }
    // no 3-collision: every vertex is unmarked
    for seed in 0..30 {
        let inst = generate(GeneratorSpec { n: 12, planted: false, extra_pairs: 3, value_range: 0 }, seed);
        let pre = preprocess(&inst.values).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Ok(part) = sample_tripartition(pre.len(), 4, 1, &mut rng, &mut CostLedger::new()) else { continue };
        let pairs = cross_pairs(&pre, |x| part.part_of(x));
        let Ok(outer) = OuterWalk::new(&pre, &part, pairs, 4, 1, Some(1)) else { continue };
        assert!(outer.marked.iter().all(|&m| !m));
        assert!((0..outer.chain.vertex_count()).all(|x| outer.check_marked(&pre, outer.chain.label(x)).0.is_none()));
    }
}

#[test]
fn inner_family_properties() {
    for case in battery(7) {
        let fam = case.family();
        let b = fam.inner_bounds();
        assert!(b.eps > 0.0 && b.eps <= 1.0 && b.delta > 0.0);
        let vcount: u128 = fam.inner_marked_of(0).iter().filter(|&&m| m).count() as u128;
        assert_eq!(vcount, fam.marked_count);
        // the count does not depend on which S₂ was removed
        for x in 0..case.outer.chain.vertex_count() {
            assert_eq!(fam.inner_marked_of(x).iter().filter(|&&m| m).count() as u128, fam.marked_count);
        }
        let data: Vec<C64> = fam.vertex_data(0).into_iter().map(|a| C64::new(a, 0.0)).collect();
        assert!((nestwalk::walk::norm_sqr(&data) - 1.0).abs() < 1e-12);
    }
    // concrete family refuses a region too small for the walk set
    let cases = common::concrete_cases(4, 1, 1, 1, false, 0);
    let case = &cases[0];
    let mut outer = case.outer.clone();
    outer.params.m = 3;
    assert!(ConcreteFamily::new(&outer, &case.partition).is_err());
}

#[test]
fn solve_small_examples() {
    for seed in 0..5 {
        let r = solve(&[3, 8, 1, 6, 2, 9], seed, &SolveConfig::default()).unwrap();
        assert_eq!(r.triple, None);
        let r = solve(&[1, 1, 1], seed, &SolveConfig::default()).unwrap();
        assert_eq!(r.triple, Some((1, 2, 3)));
    }
}

#[test]
fn solve_agrees_with_oracle_on_random_instances() {
    let outcomes = nestwalk::par::map_seeds(0..1000, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = GeneratorSpec { n: rng.random_range(3..=12), planted: rng.random_bool(0.5), extra_pairs: rng.random_range(0..3), value_range: 0 };
        let inst = generate(spec, seed);
        let truth = oracle_solve(&inst.values);
        let got = solve(&inst.values, seed, &SolveConfig::default()).unwrap().triple;
        (truth, got)
    });
    let mut planted = 0;
    let mut found = 0;
    for (truth, got) in outcomes {
        match (truth, got) {
            (None, g) => assert_eq!(g, None),
            (Some(t), Some(g)) => {
                assert_eq!(g, t);
                planted += 1;
                found += 1;
            }
            (Some(_), None) => planted += 1,
        }
    }
    println!("solve found {found}/{planted} planted triples");
    assert!(found * 3 >= planted * 2);
}
