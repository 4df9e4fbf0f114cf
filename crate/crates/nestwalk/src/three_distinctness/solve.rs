use super::family::{count_inner_marked, ConcreteFamily, Degenerate, OuterWalk, Parameters, ThreeDistinctOps, CONCRETE_BLOCK_CAP};
use super::instance::{is_triple, preprocess, InstanceError, Preprocessed};
use super::partition::{sample_tripartition, setup_state, SetupError};
use crate::combin::{binom, binom_f64};
use crate::cost_model::{optimize, CostMode, Objective};
use crate::ledger::CostLedger;
use crate::markov::johnson_spectrum;
use crate::nested::{nested_search, InnerBounds, OuterCosts};
use crate::walk::{AbstractOps, Mode, SearchConfig, WalkError, WalkOps};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error(transparent)]
    Walk(#[from] WalkError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub mode: Mode,
    pub s1: Option<usize>,
    pub s2: Option<usize>,
    pub m: Option<usize>,
    /// Number of independent tripartitions tried before giving up.
    pub partitions: usize,
    pub search: SearchConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { mode: Mode::Abstract, s1: None, s2: None, m: None, partitions: 24, search: SearchConfig::default() }
    }
}

impl SolveConfig {
    pub fn with_mode(mode: Mode) -> Self {
        SolveConfig { mode, ..Self::default() }
    }
}

/// Walk-set sizes for a sequence of length `len`: the optimizer's (n^{5/7}, n^{4/7})
/// clamped to the desk-scale ranges `1 ≤ s₂ ≤ max(1, ⌊len/27⌋)` and
/// `s₂ + 2 ≤ s₁ ≤ len/6`, and in concrete mode to inner blocks of at most
/// [`CONCRETE_BLOCK_CAP`] subsets.
pub fn desk_parameters(len: usize, mode: Mode, s1: Option<usize>, s2: Option<usize>) -> (usize, usize) {
    let opt = optimize(len.max(8) as f64, CostMode::Query, Objective::DominantTerm);
    let s2_cap = ((2 * len / 27) / 2).max(1);
    let s2 = s2.unwrap_or_else(|| (opt.s2.round() as usize).clamp(1, s2_cap));
    let s1 = s1.unwrap_or_else(|| {
        let lo = s2 + 2;
        let mut s1 = (opt.s1.round() as usize).clamp(lo, (len / 6).max(lo));
        if mode == Mode::Concrete {
            let region = (2 * len / 3).saturating_sub(2 * s2) as u64;
            while s1 > lo && binom(region, s1 as u64) > CONCRETE_BLOCK_CAP {
                s1 -= 1;
            }
        }
        s1
    });
    (s1, s2)
}

/// Per-partition record kept in the solve report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub params: Option<Parameters>,
    pub marked_fraction: f64,
    pub outcome: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// 1-based indices into the original values.
    pub triple: Option<(usize, usize, usize)>,
    pub ledger: CostLedger,
    pub s1: usize,
    pub s2: usize,
    pub partitions: Vec<PartitionRecord>,
}

/// Inner bounds without enumerating the inner chain: region `2N/3 − 2s₂`.
pub fn abstract_inner_bounds(len: usize, p: &Parameters) -> InnerBounds {
    let region = 2 * len / 3 - 2 * p.s2;
    let (marked, _) = count_inner_marked(region, p.n2 - p.s2, p.s1, p.m);
    InnerBounds {
        setup: p.s1 as f64,
        update: 1.0,
        check: 0.0,
        eps: (marked as f64 / binom_f64(region as u64, p.s1 as u64)).clamp(f64::MIN_POSITIVE, 1.0),
        delta: johnson_spectrum(region as u32, p.s1 as u32, 1).gap,
    }
}

/// Run the nested walk for one partition; returns the found 0-based triple, if any.
fn search_partition(
    pre: &Preprocessed,
    outer: &OuterWalk,
    partition: &super::partition::Tripartition,
    setup_queries: u64,
    config: &SolveConfig,
    seed: u64,
    ledger: &mut CostLedger,
) -> Result<Option<[usize; 3]>, SolveError> {
    let p = outer.params;
    let outer_costs = OuterCosts { setup: setup_queries as f64, check: outer.check_queries() as f64, t: p.m as f64 };
    let (found, search_ledger, inner) = match config.mode {
        Mode::Abstract => {
            let inner = abstract_inner_bounds(pre.len(), &p);
            let ops = AbstractOps::new(&outer.chain);
            let out = nested_search(&ops, None, &outer.marked, outer.eps(), outer.delta(), inner, outer_costs, config.search, seed)?;
            (out.found, out.ledger, inner)
        }
        Mode::Concrete => {
            let family = ConcreteFamily::new(outer, partition)?;
            let ops = ThreeDistinctOps::new(&family)?;
            let inner = family.inner_bounds();
            let out = nested_search(&ops as &dyn WalkOps, None, &outer.marked, outer.eps(), outer.delta(), inner, outer_costs, config.search, seed)?;
            (out.found, out.ledger, inner)
        }
    };
    let mut l = search_ledger;
    let inner_queries = inner.walk_cost().ceil() as u64;
    l.queries += l.setups.saturating_sub(1) * setup_queries + l.checks * outer.check_queries() + l.inner_invocations * inner_queries;
    l.ds_ops += l.walk_steps * 2 * p.m as u64;
    *ledger += l;
    Ok(found.and_then(|x| outer.check_marked(pre, outer.chain.label(x)).0))
}

/// End-to-end 3-Distinctness: preprocess, then try independent tripartitions until the
/// nested walk returns a verified triple.
pub fn solve(values: &[u64], seed: u64, config: &SolveConfig) -> Result<SolveReport, SolveError> {
    let pre = preprocess(values)?;
    let len = pre.len();
    let (s1, s2) = desk_parameters(len, config.mode, config.s1, config.s2);
    let mut report = SolveReport { triple: None, ledger: CostLedger::new(), s1, s2, partitions: Vec::new() };
    if values.len() < 3 {
        return Ok(report);
    }
    for r in 0..config.partitions {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let mut ledger = CostLedger::new();
        let partition = sample_tripartition(len, s1, s2, &mut rng, &mut ledger)?;
        let setup = match setup_state(&pre, partition, s1, s2, &mut rng, Mode::Abstract) {
            Ok(s) => s,
            Err(SetupError::TooFewPairs { available, .. }) => {
                report.ledger += ledger;
                report.partitions.push(PartitionRecord { params: None, marked_fraction: 0.0, outcome: format!("skipped: {available} cross pairs") });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let setup_queries = setup.ledger.queries;
        ledger += setup.ledger.clone();
        let found = match OuterWalk::new(&pre, &setup.partition, setup.pairs.clone(), s1, s2, config.m) {
            Err(Degenerate::NoPairs) => {
                report.partitions.push(PartitionRecord { params: None, marked_fraction: 0.0, outcome: "no cross pairs".into() });
                None
            }
            Err(Degenerate::Chain(why)) => {
                // check every pair directly
                let third: Vec<usize> = setup.partition.members(crate::history_set::Part::A3);
                let q = (std::f64::consts::FRAC_PI_4 * (third.len() as f64).sqrt()).ceil() as u64;
                let mut hit = None;
                for &(a, b) in &setup.pairs.pairs {
                    ledger.checks += 1;
                    ledger.queries += q;
                    if let Some(&k) = third.iter().find(|&&k| pre.value(k) == pre.value(a)) {
                        let mut t = [a, b, k];
                        t.sort_unstable();
                        hit = Some(t);
                        break;
                    }
                }
                report.partitions.push(PartitionRecord { params: None, marked_fraction: 0.0, outcome: format!("direct check ({why})") });
                hit
            }
            Ok(outer) => {
                let found = search_partition(&pre, &outer, &setup.partition, setup_queries, config, seed ^ ((r as u64) << 32), &mut ledger)?;
                report.partitions.push(PartitionRecord {
                    params: Some(outer.params),
                    marked_fraction: outer.marked_fraction(),
                    outcome: if found.is_some() { "found".into() } else { "not found".into() },
                });
                found
            }
        };
        report.ledger += ledger;
        if let Some(t) = found {
            let triple = (t[0] + 1, t[1] + 1, t[2] + 1);
            if is_triple(&pre.chi, triple) && t[2] < pre.n {
                report.triple = Some(triple);
                return Ok(report);
            }
            report.ledger.warn(format!("rejected unverified triple {triple:?}"));
        }
    }
    Ok(report)
}
