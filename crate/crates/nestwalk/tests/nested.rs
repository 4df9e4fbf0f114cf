mod common;

use nestwalk::ledger::CostLedger;
use nestwalk::markov::{johnson_chain, MarkovChain};
use nestwalk::nested::{
    composed_setup, nested_search, nested_unit_costs, phase_flip_via_inner, pre_measurement_distribution, verify_implementation,
    InnerBounds, InnerFlipOps, InnerWalkFamily, OuterCosts,
};
use nestwalk::three_distinctness::ThreeDistinctOps;
use nestwalk::verify::battery;
use nestwalk::walk::{
    dot, max_abs_diff, norm_sqr, prepare_pi0, AbstractOps, DataOps, DataOracle, Reflection, SearchConfig, WalkError, WalkOps, C64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..dim).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let n = norm_sqr(&v).sqrt();
    v.into_iter().map(|z| z / n).collect()
}

/// I − 2|t⟩⟨t| applied directly.
fn reflect_oracle(t: &[C64], v: &[C64]) -> Vec<C64> {
    let a = dot(t, v) * 2.0;
    v.iter().zip(t).map(|(x, y)| x - y * a).collect()
}

fn fidelity(a: &[C64], b: &[C64]) -> f64 {
    dot(a, b).norm_sqr() / (norm_sqr(a) * norm_sqr(b))
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// A family where every inner vertex is marked and the inner chain is K3.
struct AllMarked {
    outer: usize,
    inner: MarkovChain,
}

impl InnerWalkFamily for AllMarked {
    fn outer_vertex_count(&self) -> usize {
        self.outer
    }
    fn inner_chain(&self, _: usize) -> &MarkovChain {
        &self.inner
    }
    fn inner_marked(&self, _: usize) -> Vec<bool> {
        vec![true; self.inner.vertex_count()]
    }
    fn bounds(&self) -> InnerBounds {
        InnerBounds { setup: 1.0, update: 1.0, check: 0.0, eps: 1.0, delta: 0.5 }
    }
}

struct UniformData(usize);

impl DataOracle for UniformData {
    fn vertex_data(&self, _: usize) -> Vec<C64> {
        vec![c(1.0 / (self.0 as f64).sqrt()); self.0]
    }
    fn edge_data(&self, x: usize, y: usize) -> Vec<C64> {
        let mut v = vec![c(0.0); 2];
        v[(x + y) % 2] = c(1.0);
        v
    }
}

/// Reflection checks for one inner walk against the exact reflector about `target`.
fn check_inner_reflection(walk: &nestwalk::nested::InnerWalk<'_>, target: &[C64], marked: &[bool], tol: f64, rng: &mut ChaCha8Rng) {
    let mut ledger = CostLedger::new();
    // the marked state itself is negated
    let mut v = target.to_vec();
    walk.reflect_marked(&mut v, &mut ledger).unwrap();
    let neg: Vec<C64> = target.iter().map(|z| -z).collect();
    assert!(fidelity(&v, &neg) >= 1.0 - tol && dot(&neg, &v).re > 0.0, "fidelity {}", fidelity(&v, &neg));
    // a marked-supported state orthogonal to it is left alone
    let idx: Vec<usize> = marked.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
    if idx.len() >= 2 {
        let mut o = vec![c(0.0); target.len()];
        o[idx[0]] = c(std::f64::consts::FRAC_1_SQRT_2);
        o[idx[1]] = c(-std::f64::consts::FRAC_1_SQRT_2);
        let mut w = o.clone();
        walk.reflect_marked(&mut w, &mut ledger).unwrap();
        assert!(fidelity(&w, &o) >= 1.0 - tol, "orthogonal state moved: fidelity {}", fidelity(&w, &o));
    }
    let r = random_state(rng, target.len());
    let mut got = r.clone();
    walk.reflect_marked(&mut got, &mut ledger).unwrap();
    assert!(fidelity(&got, &reflect_oracle(target, &r)) >= 1.0 - tol);
}

#[test]
fn inner_phase_flip_matches_exact_reflection_on_battery() {
    let cases = battery(7);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in cases.iter().take(3) {
        let fam = case.family();
        for x in [0, case.outer.chain.vertex_count() - 1] {
            let target: Vec<C64> = fam.vertex_data(x).into_iter().map(c).collect();
            let walk = phase_flip_via_inner(&fam, x, Reflection::Exact).unwrap();
            check_inner_reflection(&walk, &target, &fam.inner_marked_of(x), 1e-12, &mut rng);
        }
    }
}

/// Inner chain J(6, 2, 1) with marked sets "contains element 0" at every outer vertex.
struct SmallInner {
    inner: MarkovChain,
}

impl InnerWalkFamily for SmallInner {
    fn outer_vertex_count(&self) -> usize {
        1
    }
    fn inner_chain(&self, _: usize) -> &MarkovChain {
        &self.inner
    }
    fn inner_marked(&self, _: usize) -> Vec<bool> {
        self.inner.labels().iter().map(|l| l & 1 == 1).collect()
    }
    fn bounds(&self) -> InnerBounds {
        InnerBounds { setup: 2.0, update: 1.0, check: 0.0, eps: 1.0 / 3.0, delta: self.inner.gap().unwrap() }
    }
}

#[test]
fn phase_estimation_inner_flip_matches_exact_reflection() {
    let fam = SmallInner { inner: johnson_chain(6, 2, 1).unwrap() };
    let marked = fam.inner_marked(0);
    let k = marked.iter().filter(|&&m| m).count() as f64;
    let target: Vec<C64> = marked.iter().map(|&m| c(if m { 1.0 / k.sqrt() } else { 0.0 })).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for bits in [8, 10] {
        let walk = phase_flip_via_inner(&fam, 0, Reflection::PhaseEstimation { bits }).unwrap();
        check_inner_reflection(&walk, &target, &marked, 1e-6, &mut rng);
    }
    let exact = phase_flip_via_inner(&fam, 0, Reflection::Exact).unwrap();
    check_inner_reflection(&exact, &target, &marked, 1e-12, &mut rng);
}

#[test]
fn all_marked_inner_flip_is_reflection_about_stationary_state() {
    let fam = AllMarked { outer: 1, inner: johnson_chain(4, 2, 1).unwrap() };
    let pi0: Vec<C64> = vec![c(1.0 / 6f64.sqrt()); 6];
    let walk = phase_flip_via_inner(&fam, 0, Reflection::Exact).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let r = random_state(&mut rng, 6);
        let mut got = r.clone();
        walk.reflect_marked(&mut got, &mut CostLedger::new()).unwrap();
        assert!(max_abs_diff(&got, &reflect_oracle(&pi0, &r)) < 1e-12);
    }
}

#[test]
fn insufficient_phase_estimation_budget_is_infeasible() {
    let fam = SmallInner { inner: johnson_chain(6, 2, 1).unwrap() };
    let err = phase_flip_via_inner(&fam, 0, Reflection::PhaseEstimation { bits: 1 }).err().expect("one bit cannot resolve the inner gap");
    assert!(matches!(err, WalkError::Infeasible(_)), "{err:?}");
}

#[test]
fn battery_implementations_pass_and_abstract_ops_are_trivially_valid() {
    for case in battery(7) {
        let fam = case.family();
        let ops = ThreeDistinctOps::new(&fam).unwrap();
        let rep = verify_implementation(&ops, 1e-10, case.seed);
        assert!(rep.pass, "case {}: {:?}", case.seed, rep.failures);
        assert!(rep.ldwg_unitarity <= 1e-12 && rep.swap_unitarity <= 1e-12);
    }
    let chain = johnson_chain(5, 2, 1).unwrap();
    assert!(verify_implementation(&AbstractOps::new(&chain), 1e-12, 0).pass);
}

#[test]
fn corrupted_swap_is_reported_on_its_edge() {
    let cases = battery(7);
    let fam = cases[0].family();
    let ops = ThreeDistinctOps::new(&fam).unwrap();
    let (x, y) = (ops.space().source(0), ops.space().target(0));
    let rep = verify_implementation(&ops.with_corrupt_swap(0), 1e-10, 1);
    assert!(!rep.pass);
    let f = rep.failures.iter().find(|f| f.operator == "garbage_swap").expect("swap failure recorded");
    assert_eq!(f.location, format!("edge ({x},{y})"));
    assert!(f.deviation > 0.1);
}

#[test]
fn garbage_swap_is_an_involution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in battery(7) {
        let fam = case.family();
        let ops = ThreeDistinctOps::new(&fam).unwrap();
        let r = random_state(&mut rng, ops.layout().total());
        let mut v = r.clone();
        ops.swap(&mut v);
        ops.swap(&mut v);
        assert!(max_abs_diff(&v, &r) < 1e-15);
    }
}

#[test]
fn composed_setup_with_all_marked_inner_sets_equals_stationary_preparation() {
    let outer = johnson_chain(4, 2, 1).unwrap();
    let fam = AllMarked { outer: outer.vertex_count(), inner: johnson_chain(3, 1, 1).unwrap() };
    let ops = DataOps::new(&outer, &UniformData(3)).unwrap();
    let (state, ledger) = composed_setup(&ops, &fam, Reflection::Exact).unwrap();
    assert!(max_abs_diff(&state, &prepare_pi0(&ops)) < 1e-12);
    assert_eq!(ledger.setups, 1);
}

#[test]
fn composed_setup_matches_direct_construction_on_battery() {
    for case in battery(7) {
        let fam = case.family();
        let ops = ThreeDistinctOps::new(&fam).unwrap();
        let (state, _) = composed_setup(&ops, &fam, Reflection::Exact).unwrap();
        let space = ops.space();
        let mut direct = vec![c(0.0); ops.layout().total()];
        for x in 0..space.vertex_count() {
            let data = fam.vertex_data(x);
            for (a, d) in direct[ops.layout().block(x)].iter_mut().zip(data) {
                *a = c(space.sqrt_pi(x) * d);
            }
        }
        assert!(max_abs_diff(&state, &direct) <= 1e-9, "case {}", case.seed);
        assert!((norm_sqr(&state) - 1.0).abs() < 1e-12);
        for (x, p) in case.outer.chain.stationary().iter().enumerate() {
            assert!((norm_sqr(&state[ops.layout().block(x)]) - p).abs() < 1e-12);
        }
    }
}

#[test]
fn inner_walk_flip_reproduces_concrete_walk_statistics() {
    for case in battery(7).iter().take(4) {
        let fam = case.family();
        let ops = ThreeDistinctOps::new(&fam).unwrap();
        let nested = InnerFlipOps::new(&ops, &fam, Reflection::Exact).unwrap();
        let marked: Vec<bool> = (0..case.outer.chain.vertex_count()).map(|x| x % 3 == 0).collect();
        for k in [1, 2] {
            let a = pre_measurement_distribution(&ops, &marked, k, Reflection::Exact).unwrap();
            let b = pre_measurement_distribution(&nested, &marked, k, Reflection::Exact).unwrap();
            assert!(tv(&a, &b) <= 1e-6, "case {} k {k}: {}", case.seed, tv(&a, &b));
        }
    }
}

#[test]
fn abstract_outer_walk_matches_concrete_family() {
    for case in battery(7) {
        let fam = case.family();
        let ops = ThreeDistinctOps::new(&fam).unwrap();
        let abs = AbstractOps::new(&case.outer.chain);
        let marked: Vec<bool> = (0..case.outer.chain.vertex_count()).map(|x| x % 2 == 1).collect();
        for k in [1, 3] {
            let a = pre_measurement_distribution(&abs, &marked, k, Reflection::Exact).unwrap();
            let b = pre_measurement_distribution(&ops, &marked, k, Reflection::Exact).unwrap();
            assert!(tv(&a, &b) <= 1e-6, "case {} k {k}: {}", case.seed, tv(&a, &b));
        }
    }
}

#[test]
fn nested_search_with_empty_marked_set_finds_nothing() {
    let cases = battery(7);
    let fam = cases[0].family();
    let ops = ThreeDistinctOps::new(&fam).unwrap();
    let marked = vec![false; cases[0].outer.chain.vertex_count()];
    let outer = OuterCosts { setup: 1.0, check: 1.0, t: 1.0 };
    for seed in 0..10 {
        let out = nested_search(&ops, None, &marked, 0.1, cases[0].outer.delta(), fam.inner_bounds(), outer, SearchConfig::default(), seed);
        assert_eq!(out.map(|o| o.found).unwrap_or(None), None);
    }
}

#[test]
fn nested_search_finds_marked_pair_set_in_concrete_mode() {
    let cases = common::concrete_cases(4, 1, 1, 3, true, 100);
    assert!(!cases.is_empty());
    for case in &cases {
        let fam = case.family();
        let ops = ThreeDistinctOps::new(&fam).unwrap();
        let (pi0, _) = composed_setup(&ops, &fam, Reflection::Exact).unwrap();
        let eps = case.outer.marked_fraction();
        let outer = OuterCosts { setup: 1.0, check: case.outer.check_queries() as f64, t: 1.0 };
        let wins = nestwalk::par::map_seeds(0..100, |seed| {
            let out = nested_search(&ops, Some(pi0.clone()), &case.outer.marked, eps, case.outer.delta(), fam.inner_bounds(), outer, SearchConfig::default(), seed)
                .unwrap();
            out.found.is_some_and(|v| case.outer.marked[v])
        })
        .into_iter()
        .filter(|&w| w)
        .count();
        assert!(wins >= 67, "case {}: {wins}/100", case.seed);
    }
}

#[test]
fn nested_ledger_tracks_closed_form_within_factor_four() {
    let ratios = common::nested_ledger_ratios(5);
    assert!(!ratios.is_empty());
    for r in &ratios {
        assert!((0.25..=4.0).contains(&r.ratio()), "{}: measured {} formula {}", r.label, r.measured, r.formula);
    }
    let inner = InnerBounds { setup: 4.0, update: 1.0, check: 0.0, eps: 0.5, delta: 0.25 };
    let unit = nested_unit_costs(&inner, &OuterCosts { setup: 3.0, check: 2.0, t: 1.0 });
    assert_eq!(unit.setup, 7.0);
    assert!((unit.inner - inner.walk_cost()).abs() < 1e-15);
}
