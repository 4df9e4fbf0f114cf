//! Deterministic property battery behind `nestwalk verify`.
//!
//! Every check reports the largest deviation it observed against its tolerance, so the
//! report doubles as a numerical record. The battery is a pure function of the seed.

use crate::combin::binom_f64;
use crate::hash_family::verify_kwise;
use crate::history_set::HistoryFreeSet;
use crate::markov::{johnson_chain, MarkovChain};
use crate::nested::{composed_setup, operator_defect, verify_implementation};
use crate::three_distinctness::{
    count_inner_marked, count_inner_marked_brute, generate, preprocess, sample_tripartition, setup_state, ConcreteFamily, GarbagePerturbation,
    GeneratorSpec, Instance, OuterWalk, Preprocessed, ThreeDistinctOps, Tripartition,
};
use crate::walk::{distance, max_abs_diff, norm_sqr, prepare_pi, prepare_pi0, apply_w, unitarity_defect_dense, AbstractOps, Mode, Reflection, WalkOps, C64};
use crate::ledger::CostLedger;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: &str, max_deviation: f64, tolerance: f64, detail: impl Into<String>) -> CheckResult {
        CheckResult { name: name.into(), max_deviation, tolerance, pass: max_deviation <= tolerance, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub version: String,
    pub seed: u64,
    pub perturb_psi: bool,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

/// One tiny instance with a fixed partition and parameters.
pub struct BatteryCase {
    pub seed: u64,
    pub instance: Instance,
    pub pre: Preprocessed,
    pub partition: Tripartition,
    pub outer: OuterWalk,
}

impl BatteryCase {
    pub fn family(&self) -> ConcreteFamily<'_> {
        ConcreteFamily::new(&self.outer, &self.partition).expect("battery cases are checked at construction")
    }
}

/// Parameter sets `(s₁, s₂, m)` of the n = 12 battery.
pub const BATTERY_PARAMS: [(usize, usize, usize); 3] = [(4, 1, 1), (4, 2, 1), (5, 2, 2)];

/// Two cases per parameter set, from the first seeds (after `seed`) that yield an
/// ergodic outer chain and a nonempty inner marked set.
pub fn battery(seed: u64) -> Vec<BatteryCase> {
    let mut cases = Vec::new();
    for &(s1, s2, m) in &BATTERY_PARAMS {
        let mut found = 0;
        let mut k = seed;
        while found < 2 && k < seed + 1000 {
            k += 1;
            let instance = generate(GeneratorSpec { n: 12, planted: true, extra_pairs: 3, value_range: 0 }, k);
            let pre = preprocess(&instance.values).expect("generated instances are valid");
            let mut rng = ChaCha8Rng::seed_from_u64(k);
            let mut ledger = CostLedger::new();
            let Ok(part) = sample_tripartition(pre.len(), s1, s2, &mut rng, &mut ledger) else { continue };
            let Ok(setup) = setup_state(&pre, part, s1, s2, &mut rng, Mode::Abstract) else { continue };
            let Ok(outer) = OuterWalk::new(&pre, &setup.partition, setup.pairs.clone(), s1, s2, Some(m)) else { continue };
            if ConcreteFamily::new(&outer, &setup.partition).is_err() {
                continue;
            }
            cases.push(BatteryCase { seed: k, instance, pre, partition: setup.partition, outer });
            found += 1;
        }
    }
    cases
}

fn perturbation_for(case: &BatteryCase) -> GarbagePerturbation {
    let y = case.outer.chain.neighbors(0).next().expect("vertex 0 has a neighbor").0;
    GarbagePerturbation { x: 0, y, amount: 1e-3 }
}

fn with_family<T>(case: &BatteryCase, perturb: bool, f: impl FnOnce(&ConcreteFamily<'_>) -> T) -> T {
    let fam = case.family();
    let fam = if perturb { fam.with_perturbation(perturbation_for(case)) } else { fam };
    f(&fam)
}

/// max over edges of max |ψ(x,y) − ψ(y,x)|.
pub fn garbage_symmetry(cases: &[BatteryCase], perturb: bool) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut edges = 0;
    for (i, case) in cases.iter().enumerate() {
        with_family(case, perturb && i == 0, |fam| {
            let chain = &case.outer.chain;
            for x in 0..chain.vertex_count() {
                for (y, _) in chain.neighbors(x) {
                    let a = fam.garbage_state(x, y).unwrap();
                    let b = fam.garbage_state(y, x).unwrap();
                    worst = worst.max(a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
                    edges += 1;
                }
            }
        });
    }
    CheckResult::new("garbage_symmetry", worst, 1e-12, format!("{edges} oriented edges"))
}

/// max over edges of |Σ α² − 1|.
pub fn garbage_normalization(cases: &[BatteryCase]) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut edges = 0;
    for case in cases {
        let fam = case.family();
        let chain = &case.outer.chain;
        for x in 0..chain.vertex_count() {
            for (y, _) in chain.neighbors(x) {
                let psi = fam.garbage_state(x, y).unwrap();
                worst = worst.max((psi.iter().map(|a| a * a).sum::<f64>() - 1.0).abs());
                edges += 1;
            }
        }
    }
    CheckResult::new("garbage_normalization", worst, 1e-12, format!("{edges} oriented edges"))
}

/// max over vertices of ‖LD|x,0⟩|π^x(M^x)⟩ − Σ_y √P(x,y)|x,y⟩|ψ(x,y)⟩‖.
pub fn ldwg_matches_target(cases: &[BatteryCase], perturb: bool) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut vertices = 0;
    for (i, case) in cases.iter().enumerate() {
        with_family(case, perturb && i == 0, |fam| {
            let ops = ThreeDistinctOps::new(fam).unwrap();
            let targets = fam.ldwg_target(&ops).unwrap();
            for (x, t) in targets.iter().enumerate() {
                let mut v = ops.vertex_state(x);
                ops.local_diffusion(&mut v);
                worst = worst.max(distance(&v, t));
                vertices += 1;
            }
        });
    }
    CheckResult::new("ldwg_matches_target", worst, 1e-10, format!("{vertices} outer vertices"))
}

pub fn implementation_reports(cases: &[BatteryCase]) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for case in cases {
        let fam = case.family();
        let ops = ThreeDistinctOps::new(&fam).unwrap();
        let r = verify_implementation(&ops, 1e-9, case.seed);
        worst = worst.max(r.ldwg_leakage).max(r.garbage_norm).max(r.swap).max(r.ldwg_unitarity).max(r.swap_unitarity);
        failures.extend(r.failures.into_iter().map(|f| format!("seed {}: {} at {}", case.seed, f.operator, f.location)));
    }
    CheckResult::new("implementation", worst, 1e-9, if failures.is_empty() { "all operators verified".to_string() } else { failures.join("; ") })
}

fn random_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..dim).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
}

/// Garbage Swap twice is the identity; LD twice is the identity (LD is an involution).
pub fn involutions(cases: &[BatteryCase], seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in cases {
        let fam = case.family();
        let ops = ThreeDistinctOps::new(&fam).unwrap();
        let v = random_vector(ops.layout().total(), &mut rng);
        let mut w = v.clone();
        ops.swap(&mut w);
        ops.swap(&mut w);
        worst = worst.max(max_abs_diff(&v, &w));
        let mut w = v.clone();
        ops.local_diffusion(&mut w);
        ops.local_diffusion_adj(&mut w);
        worst = worst.max(max_abs_diff(&v, &w));
        worst = worst.max(operator_defect(ops.layout().total(), seed, |z| ops.local_diffusion(z), |z| ops.local_diffusion_adj(z)));
    }
    CheckResult::new("swap_and_ldwg_inverse", worst, 1e-12, "random probes")
}

/// Composed setup through the inner walks against the directly built `|π⟩⁰`.
pub fn composed_setup_matches(cases: &[BatteryCase]) -> CheckResult {
    let mut worst: f64 = 0.0;
    for case in cases.iter().take(2) {
        let fam = case.family();
        let ops = ThreeDistinctOps::new(&fam).unwrap();
        let (state, _) = composed_setup(&ops, &fam, Reflection::Exact).unwrap();
        let direct = prepare_pi0(&ops);
        worst = worst.max(distance(&state, &direct)).max((norm_sqr(&state) - 1.0).abs());
    }
    CheckResult::new("composed_setup", worst, 1e-9, "first two battery cases")
}

/// Grid of `(region, pairs, s₁, m)` compared with brute-force enumeration.
pub fn marked_count_grid() -> Vec<(usize, usize, usize, usize)> {
    let mut grid = vec![(8, 2, 4, 1)];
    for region in [6usize, 8, 10, 12] {
        for pairs in [1usize, 2, 3] {
            for (s1, m) in [(3usize, 1usize), (4, 1), (4, 2), (5, 2)] {
                if 2 * pairs <= region && s1 <= region {
                    grid.push((region, pairs, s1, m));
                }
            }
        }
    }
    grid
}

pub fn marked_counts(cases: &[BatteryCase]) -> CheckResult {
    let grid = marked_count_grid();
    let mut mismatches = 0.0;
    for &(r, p, s1, m) in &grid {
        let (t, c) = count_inner_marked(r, p, s1, m);
        if t != count_inner_marked_brute(r, p, s1, m) || t > c {
            mismatches += 1.0;
        }
    }
    // the count does not depend on which S₂ was removed
    let mut spread: f64 = 0.0;
    for case in cases {
        let fam = case.family();
        for x in 0..case.outer.chain.vertex_count() {
            let here = fam.inner_marked_of(x).iter().filter(|&&b| b).count() as f64;
            spread = spread.max((here - fam.marked_count as f64).abs());
        }
    }
    let (t, c) = count_inner_marked(8, 2, 4, 1);
    CheckResult::new("inner_marked_count", mismatches + spread, 0.0, format!("{} grid points; (8,2,4,1) gives {t} vs product formula {c}", grid.len()))
}

/// Post-measurement setup state against `1/√C(n₂, s₂)`.
pub fn setup_uniformity(seed: u64) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut states = 0;
    for k in 0..20u64 {
        let inst = generate(GeneratorSpec { n: 12, planted: true, extra_pairs: 3, value_range: 0 }, seed.wrapping_add(k));
        let pre = preprocess(&inst.values).unwrap();
        for &(s1, s2, _) in &BATTERY_PARAMS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ k);
            let mut ledger = CostLedger::new();
            let Ok(part) = sample_tripartition(pre.len(), s1, s2, &mut rng, &mut ledger) else { continue };
            let Ok(out) = setup_state(&pre, part, s1, s2, &mut rng, Mode::Concrete) else { continue };
            let amps = out.state.unwrap();
            let target = 1.0 / binom_f64(out.pairs.len() as u64, s2 as u64).sqrt();
            worst = worst.max(amps.iter().map(|a| (a - target).abs()).fold(0.0, f64::max));
            states += 1;
        }
    }
    CheckResult::new("setup_uniformity", worst, 1e-9, format!("{states} setup states"))
}

/// Unique encoding: the same item set reached through different histories serializes
/// identically.
pub fn history_independence(seed: u64, histories: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0usize;
    for h in 0..histories {
        let key = rng.random::<u64>();
        let items: Vec<(u64, u64)> = (0..rng.random_range(0..40u64)).map(|z| (z, rng.random_range(0..10u64))).collect();
        let mut direct = HistoryFreeSet::new(key);
        for &(z, c) in &items {
            direct.insert(z, c).unwrap();
        }
        let mut noisy = HistoryFreeSet::new(key);
        let mut order = items.clone();
        order.reverse();
        for (i, &(z, c)) in order.iter().enumerate() {
            noisy.insert(z, c).unwrap();
            if i % 3 == h % 3 {
                noisy.insert(1000 + i as u64, c).unwrap();
                noisy.delete(1000 + i as u64, c).unwrap();
            }
        }
        if direct.serialize() != noisy.serialize() {
            mismatches += 1;
        }
    }
    CheckResult::new("history_independence", mismatches as f64, 0.0, format!("{histories} histories"))
}

/// Random operations against an ordered-set model.
pub fn history_model_fuzz(seed: u64, ops: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = HistoryFreeSet::new(seed);
    let mut model: BTreeSet<(u64, u64)> = BTreeSet::new();
    let mut divergences = 0usize;
    for _ in 0..ops {
        let z = rng.random_range(0..64u64);
        let chi = z % 7;
        match rng.random_range(0..4u8) {
            0 | 1 => {
                let ok = set.insert(z, chi).is_ok();
                if ok != model.insert((z, chi)) {
                    divergences += 1;
                }
            }
            2 => {
                let ok = set.delete(z, chi).is_ok();
                if ok != model.remove(&(z, chi)) {
                    divergences += 1;
                }
            }
            _ => {
                let got: Vec<u64> = set.lookup_by_value(chi).iter().map(|it| it.z).collect();
                let want: Vec<u64> = model.iter().filter(|(_, c)| *c == chi).map(|(z, _)| *z).collect();
                if got != want || set.len() != model.len() {
                    divergences += 1;
                }
            }
        }
    }
    CheckResult::new("history_model_fuzz", divergences as f64, 0.0, format!("{ops} operations"))
}

/// Exact k-wise uniformity of the polynomial family for every prime p ≤ 13 and k ≤ 3.
pub fn kwise_exact() -> CheckResult {
    let mut failures = Vec::new();
    let mut runs = 0;
    for p in [2u64, 3, 5, 7, 11, 13] {
        for k in 1..=3usize {
            if k as u64 > p {
                continue;
            }
            runs += 1;
            let r = verify_kwise(k, p);
            if !r.pass {
                failures.push(format!("k={k} p={p}"));
            }
        }
    }
    CheckResult::new("kwise_exact", failures.len() as f64, 0.0, if failures.is_empty() { format!("{runs} families") } else { failures.join(", ") })
}

/// Unitarity of W and stationarity of |π⟩ on small chains.
pub fn walk_properties() -> CheckResult {
    let mut worst: f64 = 0.0;
    let chains: Vec<MarkovChain> = vec![johnson_chain(6, 2, 1).unwrap(), johnson_chain(5, 2, 2).unwrap(), johnson_chain(7, 3, 1).unwrap()];
    for chain in &chains {
        let ops = AbstractOps::new(chain);
        worst = worst.max(unitarity_defect_dense(&ops));
        let (_, pi) = prepare_pi(&ops);
        let mut w = pi.clone();
        apply_w(&ops, &mut w);
        worst = worst.max(distance(&w, &pi));
    }
    CheckResult::new("walk_unitarity_and_stationarity", worst, 1e-10, format!("{} Johnson chains", chains.len()))
}

pub fn run_suite(seed: u64, perturb_psi: bool) -> VerifyReport {
    let cases = battery(seed);
    let checks = vec![
        garbage_symmetry(&cases, perturb_psi),
        garbage_normalization(&cases),
        ldwg_matches_target(&cases, perturb_psi),
        implementation_reports(&cases),
        involutions(&cases, seed),
        composed_setup_matches(&cases),
        marked_counts(&cases),
        setup_uniformity(seed),
        history_independence(seed, 200),
        history_model_fuzz(seed, 10_000),
        kwise_exact(),
        walk_properties(),
    ];
    let pass = checks.iter().all(|c| c.pass);
    VerifyReport { version: VERSION.into(), seed, perturb_psi, checks, pass }
}
