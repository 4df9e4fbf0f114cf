//! Helpers shared by several integration test targets.
#![allow(dead_code)]

use nestwalk::cost_model::{mnrs_cost, nested_cost, CostParams, InnerCost};
use nestwalk::ledger::{CostLedger, UnitCosts};
use nestwalk::markov::johnson_chain;
use nestwalk::nested::{nested_search, nested_unit_costs, InnerBounds, OuterCosts};
use nestwalk::three_distinctness::{generate, preprocess, sample_tripartition, setup_state, ConcreteFamily, GeneratorSpec, OuterWalk};
use nestwalk::verify::BatteryCase;
use nestwalk::walk::{mnrs_search, AbstractOps, Mode, SearchConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Planted n = 12 cases whose outer chain is ergodic, whose concrete family exists, and
/// (when `want_marked`) whose outer walk has at least one marked vertex.
pub fn concrete_cases(s1: usize, s2: usize, m: usize, count: usize, want_marked: bool, first_seed: u64) -> Vec<BatteryCase> {
    let mut out = Vec::new();
    let mut k = first_seed;
    while out.len() < count && k < first_seed + 20_000 {
        k += 1;
        let instance = generate(GeneratorSpec { n: 12, planted: true, extra_pairs: 3, value_range: 0 }, k);
        let pre = preprocess(&instance.values).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(k);
        let Ok(part) = sample_tripartition(pre.len(), s1, s2, &mut rng, &mut CostLedger::new()) else { continue };
        let Ok(setup) = setup_state(&pre, part, s1, s2, &mut rng, Mode::Abstract) else { continue };
        let Ok(outer) = OuterWalk::new(&pre, &setup.partition, setup.pairs.clone(), s1, s2, Some(m)) else { continue };
        if want_marked && !outer.marked.iter().any(|&b| b) {
            continue;
        }
        if ConcreteFamily::new(&outer, &setup.partition).is_err() {
            continue;
        }
        out.push(BatteryCase { seed: k, instance, pre, partition: setup.partition, outer });
    }
    out
}

#[derive(Debug)]
pub struct LedgerRatio {
    pub label: String,
    pub measured: f64,
    pub formula: f64,
}

impl LedgerRatio {
    pub fn ratio(&self) -> f64 {
        self.measured / self.formula
    }
}

/// Outer chains and marked sets of the ledger grid: J(n, r, m) with the marked set
/// "contains all of the first b elements".
pub fn ledger_grid() -> Vec<((u32, u32, u32), u64)> {
    let mut out = Vec::new();
    for (n, r, m) in [(6, 2, 1), (7, 3, 1), (8, 3, 1), (8, 4, 2), (9, 3, 2), (10, 3, 1)] {
        for b in [1u32, 2, 3] {
            out.push(((n, r, m), (1u64 << b) - 1));
        }
    }
    out
}

/// Measured ledger totals against the flat closed form, unit prices S = U = C = 1.
pub fn mnrs_ledger_ratios(seeds: u64) -> Vec<LedgerRatio> {
    let mut out = Vec::new();
    for ((n, r, m), mask) in ledger_grid() {
        let chain = johnson_chain(n, r, m).unwrap();
        let ops = AbstractOps::new(&chain);
        let marked: Vec<bool> = chain.labels().iter().map(|l| l & mask == mask).collect();
        let eps = marked.iter().filter(|&&b| b).count() as f64 / marked.len() as f64;
        if eps == 0.0 {
            continue;
        }
        let delta = chain.gap().unwrap();
        let formula = mnrs_cost(&CostParams::flat(1.0, 1.0, 1.0, eps, delta));
        for seed in 0..seeds {
            let out_s = mnrs_search(&ops, &marked, eps, delta, SearchConfig::default(), seed).unwrap();
            let unit = UnitCosts { setup: 1.0, walk_step: 1.0, check: 1.0, inner: 0.0 };
            out.push(LedgerRatio { label: format!("J({n},{r},{m}) mask {mask:b} seed {seed}"), measured: out_s.ledger.weighted(&unit), formula });
        }
    }
    out
}

/// Nested search on the same grid with declared inner bounds, priced by
/// `nested_unit_costs` and compared with the nested closed form.
pub fn nested_ledger_ratios(seeds: u64) -> Vec<LedgerRatio> {
    let inners = [
        InnerBounds { setup: 4.0, update: 1.0, check: 0.0, eps: 0.5, delta: 0.25 },
        InnerBounds { setup: 2.0, update: 1.0, check: 1.0, eps: 1.0, delta: 0.5 },
    ];
    let outer = OuterCosts { setup: 3.0, check: 2.0, t: 1.0 };
    let mut out = Vec::new();
    for ((n, r, m), mask) in ledger_grid() {
        let chain = johnson_chain(n, r, m).unwrap();
        let ops = AbstractOps::new(&chain);
        let marked: Vec<bool> = chain.labels().iter().map(|l| l & mask == mask).collect();
        let eps = marked.iter().filter(|&&b| b).count() as f64 / marked.len() as f64;
        if eps == 0.0 {
            continue;
        }
        let delta = chain.gap().unwrap();
        for inner in inners {
            let formula = nested_cost(&CostParams {
                setup: outer.setup,
                update: 0.0,
                check: outer.check,
                eps,
                delta,
                inner: Some(InnerCost { setup: inner.setup, update: inner.update, check: inner.check, eps: inner.eps, delta: inner.delta }),
                t: outer.t,
            });
            let unit = nested_unit_costs(&inner, &outer);
            for seed in 0..seeds {
                let res = nested_search(&ops, None, &marked, eps, delta, inner, outer, SearchConfig::default(), seed).unwrap();
                out.push(LedgerRatio {
                    label: format!("J({n},{r},{m}) mask {mask:b} inner eps {} seed {seed}", inner.eps),
                    measured: res.ledger.weighted(&unit),
                    formula,
                });
            }
        }
    }
    out
}
