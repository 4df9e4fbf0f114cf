//! Nested updates: per-vertex inner walks that implement Local Diffusion with Garbage and
//! Garbage Swap, the composed setup, the phase flip realized through an inner walk, and
//! the nested search loop with its cost accounting.
//!
//! An *implementation* is any [`WalkOps`] whose `local_diffusion` is the LDwG map, whose
//! `swap` is the Garbage Swap, and whose `vertex_state(x)` is
//! `|x,0⟩|C(x),0⟩|π^x(M^x)⟩`. The coin-independent registers `C(x), C(y)` are carried by
//! the block labels of the layout.

use crate::ledger::{CostLedger, InnerSymbols, SymbolicParams};
use crate::markov::MarkovChain;
use crate::walk::{
    apply_w, dot, max_abs_diff, mnrs_search_prepared, norm_sqr, phase_matched_schedule, prepare_pi, AbstractOps, EdgeSpace,
    Layout, PiReflector, Reflection, SearchConfig, SearchOutcome, WalkError, WalkOps, C64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Declared upper bounds for every inner walk of a family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerBounds {
    pub setup: f64,
    pub update: f64,
    pub check: f64,
    pub eps: f64,
    pub delta: f64,
}

impl InnerBounds {
    /// (1/√ε′)((1/√δ′)U′ + C′): the cost of one inner map to or reflection about the
    /// marked stationary state.
    pub fn walk_cost(&self) -> f64 {
        (1.0 / self.eps.sqrt()) * ((1.0 / self.delta.sqrt()) * self.update + self.check)
    }
}

pub trait InnerWalkFamily: Sync {
    fn outer_vertex_count(&self) -> usize;
    fn inner_chain(&self, x: usize) -> &MarkovChain;
    fn inner_marked(&self, x: usize) -> Vec<bool>;
    fn bounds(&self) -> InnerBounds;
}

/// Outer costs entering the nested formula: S_C, C_C and the implementation cost T.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterCosts {
    pub setup: f64,
    pub check: f64,
    pub t: f64,
}

/// One inner walk in vertex form, with its stationary state and marked set.
pub struct InnerWalk<'c> {
    chain: &'c MarkovChain,
    marked: Vec<bool>,
    variant: Reflection,
    pi0: Vec<C64>,
    lifted: Option<(AbstractOps, Vec<C64>)>,
}

impl<'c> InnerWalk<'c> {
    pub fn new(chain: &'c MarkovChain, marked: Vec<bool>, variant: Reflection) -> InnerWalk<'c> {
        let pi0 = chain.stationary().iter().map(|p| C64::new(p.sqrt(), 0.0)).collect();
        let lifted = match variant {
            Reflection::Exact => None,
            Reflection::PhaseEstimation { .. } => {
                let ops = AbstractOps::new(chain);
                let (_, pi) = prepare_pi(&ops);
                Some((ops, pi))
            }
        };
        InnerWalk { chain, marked, variant, pi0, lifted }
    }

    pub fn stationary_state(&self) -> &[C64] {
        &self.pi0
    }

    pub fn marked(&self) -> &[bool] {
        &self.marked
    }

    pub fn marked_weight(&self) -> f64 {
        self.chain.stationary().iter().zip(&self.marked).filter(|(_, &m)| m).map(|(p, _)| p).sum()
    }

    /// Require the phase-estimation resolution to separate the inner eigenphase gap.
    pub fn check_budget(&self, delta: f64) -> Result<(), WalkError> {
        if let Reflection::PhaseEstimation { bits } = self.variant {
            let resolution = 2.0 * std::f64::consts::PI / (1u64 << bits) as f64;
            let gap = 2.0 * (1.0 - delta).acos();
            if resolution > gap {
                return Err(WalkError::Infeasible(format!(
                    "{bits} phase-estimation bits resolve {resolution:.3e} rad, above the inner eigenphase gap {gap:.3e}"
                )));
            }
        }
        Ok(())
    }

    /// `v ← v + (e^{iφ} − 1)|π⁰⟩⟨π⁰|v`, emulated through the inner walk when the variant
    /// is phase estimation (lift with LD, rotate about |π⟩, lower with LD†).
    pub fn pi_phase(&self, v: &mut [C64], phi: f64, ledger: &mut CostLedger) {
        match &self.lifted {
            None => {
                let c = dot(&self.pi0, v) * (C64::from_polar(1.0, phi) - 1.0);
                for (a, p) in v.iter_mut().zip(&self.pi0) {
                    *a += p * c;
                }
            }
            Some((ops, pi)) => {
                let nv = v.len();
                let mut big = vec![C64::new(0.0, 0.0); ops.layout().total()];
                big[..nv].copy_from_slice(v);
                ops.local_diffusion(&mut big);
                let refl = PiReflector::borrowed(ops, pi, self.variant).expect("bits checked at construction");
                refl.apply_phase(&mut big, phi, ledger);
                ops.local_diffusion_adj(&mut big);
                v.copy_from_slice(&big[..nv]);
            }
        }
    }

    fn marked_phase(&self, v: &mut [C64], phi: f64) {
        let e = C64::from_polar(1.0, phi);
        for (a, &m) in v.iter_mut().zip(&self.marked) {
            if m {
                *a *= e;
            }
        }
    }

    /// Apply the unitary U with U|π⁰⟩ = |π⁰(M)⟩ (phase-matched amplification).
    pub fn to_marked(&self, v: &mut [C64], ledger: &mut CostLedger) -> Result<(), WalkError> {
        let w = self.marked_weight();
        if w <= 0.0 {
            return Err(WalkError::EmptyMarked);
        }
        if w >= 1.0 - 1e-15 {
            return Ok(());
        }
        let s = phase_matched_schedule(w);
        for _ in 0..s.iterations {
            self.marked_phase(v, s.phi);
            self.pi_phase(v, s.phi, ledger);
            v.iter_mut().for_each(|a| *a = -*a);
        }
        v.iter_mut().for_each(|a| *a *= s.correction);
        Ok(())
    }

    /// Apply U†.
    pub fn from_marked(&self, v: &mut [C64], ledger: &mut CostLedger) -> Result<(), WalkError> {
        let w = self.marked_weight();
        if w <= 0.0 {
            return Err(WalkError::EmptyMarked);
        }
        if w >= 1.0 - 1e-15 {
            return Ok(());
        }
        let s = phase_matched_schedule(w);
        v.iter_mut().for_each(|a| *a *= s.correction.conj());
        for _ in 0..s.iterations {
            v.iter_mut().for_each(|a| *a = -*a);
            self.pi_phase(v, -s.phi, ledger);
            self.marked_phase(v, -s.phi);
        }
        Ok(())
    }

    /// `|π⁰(M)⟩` produced by running U on `|π⁰⟩`.
    pub fn marked_state(&self, ledger: &mut CostLedger) -> Result<Vec<C64>, WalkError> {
        let mut v = self.pi0.clone();
        self.to_marked(&mut v, ledger)?;
        Ok(v)
    }

    /// Reflection `I − 2|π⁰(M)⟩⟨π⁰(M)|` as U (I − 2|π⁰⟩⟨π⁰|) U†.
    pub fn reflect_marked(&self, v: &mut [C64], ledger: &mut CostLedger) -> Result<(), WalkError> {
        self.from_marked(v, ledger)?;
        self.pi_phase(v, std::f64::consts::PI, ledger);
        self.to_marked(v, ledger)
    }
}

/// Reflection about `|π^x(M^x)⟩` realized through the inner walk of `x`.
pub fn phase_flip_via_inner<'c, F: InnerWalkFamily + ?Sized>(family: &'c F, x: usize, variant: Reflection) -> Result<InnerWalk<'c>, WalkError> {
    let walk = InnerWalk::new(family.inner_chain(x), family.inner_marked(x), variant);
    walk.check_budget(family.bounds().delta)?;
    if walk.marked_weight() <= 0.0 {
        return Err(WalkError::EmptyMarked);
    }
    Ok(walk)
}

/// Phase-estimation bits from the accuracy requirement O(1/√(εδε′δ′)) with constant 1.
pub fn nested_precision_bits(eps: f64, delta: f64, inner: &InnerBounds) -> u32 {
    ((1.0 / (eps * delta * inner.eps * inner.delta).sqrt()).log2().ceil().max(0.0) as u32) + 2
}

/// `Σ_x √π(x) |x,0⟩|C(x),0⟩|π^x(M^x)⟩`, built by attaching `|π^x⟩` to each vertex and
/// mapping it to its marked part with the inner walk.
pub fn composed_setup<F: InnerWalkFamily + ?Sized>(
    imp: &dyn WalkOps,
    family: &F,
    variant: Reflection,
) -> Result<(Vec<C64>, CostLedger), WalkError> {
    let space = imp.space();
    let mut state = vec![C64::new(0.0, 0.0); imp.layout().total()];
    let mut ledger = CostLedger::new();
    ledger.setups += 1;
    ledger.inner_invocations += 1;
    for x in 0..space.vertex_count() {
        let walk = InnerWalk::new(family.inner_chain(x), family.inner_marked(x), variant);
        if walk.marked_weight() <= 0.0 {
            return Err(WalkError::Infeasible(format!("inner marked set of outer vertex {x} is empty")));
        }
        let block = imp.layout().block(x);
        if block.len() != walk.stationary_state().len() {
            return Err(WalkError::Infeasible(format!("vertex block {x} does not match its inner chain")));
        }
        let v = walk.marked_state(&mut ledger)?;
        for (a, b) in state[block].iter_mut().zip(&v) {
            *a = b * space.sqrt_pi(x);
        }
    }
    Ok((state, ledger))
}

/// Delegates every operator to `base` except the (X,0)-Phase Flip, which is realized by
/// the inner walks.
pub struct InnerFlipOps<'a, F: InnerWalkFamily + ?Sized> {
    base: &'a dyn WalkOps,
    walks: Vec<InnerWalk<'a>>,
    _family: std::marker::PhantomData<&'a F>,
}

impl<'a, F: InnerWalkFamily + ?Sized> InnerFlipOps<'a, F> {
    pub fn new(base: &'a dyn WalkOps, family: &'a F, variant: Reflection) -> Result<Self, WalkError> {
        let walks = (0..base.space().vertex_count())
            .map(|x| phase_flip_via_inner(family, x, variant))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(InnerFlipOps { base, walks, _family: std::marker::PhantomData })
    }
}

impl<F: InnerWalkFamily + ?Sized> WalkOps for InnerFlipOps<'_, F> {
    fn space(&self) -> &EdgeSpace {
        self.base.space()
    }
    fn layout(&self) -> &Layout {
        self.base.layout()
    }
    fn local_diffusion(&self, v: &mut [C64]) {
        self.base.local_diffusion(v)
    }
    fn local_diffusion_adj(&self, v: &mut [C64]) {
        self.base.local_diffusion_adj(v)
    }
    fn swap(&self, v: &mut [C64]) {
        self.base.swap(v)
    }
    fn swap_adj(&self, v: &mut [C64]) {
        self.base.swap_adj(v)
    }
    fn flip(&self, v: &mut [C64]) {
        let mut scratch = CostLedger::new();
        for (x, walk) in self.walks.iter().enumerate() {
            let r = self.layout().block(x);
            walk.reflect_marked(&mut v[r], &mut scratch).expect("marked sets checked at construction");
        }
    }
    fn vertex_state(&self, x: usize) -> Vec<C64> {
        self.base.vertex_state(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub operator: String,
    pub location: String,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImplementationReport {
    /// Max over vertices of the LDwG output weight outside the vertex's own edge blocks.
    pub ldwg_leakage: f64,
    /// Max over edges of |‖block‖² − P(x,y)|.
    pub garbage_norm: f64,
    /// Max over edges of the distance between Swap(|x,y⟩ψ(x,y)) and |y,x⟩ψ(y,x).
    pub swap: f64,
    pub ldwg_unitarity: f64,
    pub swap_unitarity: f64,
    pub failures: Vec<Deviation>,
    pub pass: bool,
}

/// Check the two maps of an implementation on every vertex and edge.
pub fn verify_implementation(imp: &dyn WalkOps, tolerance: f64, seed: u64) -> ImplementationReport {
    let space = imp.space();
    let layout = imp.layout();
    let nv = space.vertex_count();
    let mut failures = Vec::new();
    let mut worst_leak: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    let mut psi: Vec<Vec<C64>> = vec![Vec::new(); space.edge_count()];
    for x in 0..nv {
        let mut v = imp.vertex_state(x);
        imp.local_diffusion(&mut v);
        let mut own = 0.0;
        for e in space.edges_of(x) {
            let block = &v[layout.block(nv + e)];
            let w = norm_sqr(block);
            own += w;
            let p = space.sqrt_p(e) * space.sqrt_p(e);
            let dev = (w - p).abs();
            worst_norm = worst_norm.max(dev);
            if dev > tolerance {
                failures.push(Deviation { operator: "ldwg".into(), location: format!("edge ({x},{})", space.target(e)), deviation: dev });
            }
            psi[e] = block.iter().map(|a| a / space.sqrt_p(e)).collect();
        }
        let leak = (norm_sqr(&v) - own).abs();
        worst_leak = worst_leak.max(leak);
        if leak > tolerance {
            failures.push(Deviation { operator: "ldwg".into(), location: format!("vertex {x}"), deviation: leak });
        }
    }
    let mut worst_swap: f64 = 0.0;
    for e in 0..space.edge_count() {
        let mut v = vec![C64::new(0.0, 0.0); layout.total()];
        v[layout.block(nv + e)].copy_from_slice(&psi[e]);
        imp.swap(&mut v);
        let r = space.reverse(e);
        let mut target = vec![C64::new(0.0, 0.0); layout.total()];
        target[layout.block(nv + r)].copy_from_slice(&psi[r]);
        let dev = max_abs_diff(&v, &target);
        worst_swap = worst_swap.max(dev);
        if dev > tolerance {
            failures.push(Deviation {
                operator: "garbage_swap".into(),
                location: format!("edge ({},{})", space.source(e), space.target(e)),
                deviation: dev,
            });
        }
    }
    let ldwg_unitarity = operator_defect(layout.total(), seed, |v| imp.local_diffusion(v), |v| imp.local_diffusion_adj(v));
    let swap_unitarity = operator_defect(layout.total(), seed ^ 0x5eed, |v| imp.swap(v), |v| imp.swap_adj(v));
    for (name, d) in [("ldwg", ldwg_unitarity), ("garbage_swap", swap_unitarity)] {
        if d > tolerance {
            failures.push(Deviation { operator: name.into(), location: "unitarity probe".into(), deviation: d });
        }
    }
    let pass = failures.is_empty();
    ImplementationReport { ldwg_leakage: worst_leak, garbage_norm: worst_norm, swap: worst_swap, ldwg_unitarity, swap_unitarity, failures, pass }
}

/// Randomized check that `op` preserves inner products and that `adj` inverts it.
pub fn operator_defect(dim: usize, seed: u64, op: impl Fn(&mut [C64]), adj: impl Fn(&mut [C64])) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..4 {
        let u: Vec<C64> = (0..dim).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let w: Vec<C64> = (0..dim).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let (mut ou, mut ow) = (u.clone(), w.clone());
        op(&mut ou);
        op(&mut ow);
        let scale = (norm_sqr(&u) * norm_sqr(&w)).sqrt();
        worst = worst.max((dot(&ou, &ow) - dot(&u, &w)).norm() / scale);
        adj(&mut ou);
        worst = worst.max(max_abs_diff(&ou, &u) / norm_sqr(&u).sqrt());
    }
    worst
}

/// Search with the walk whose data structure is given by the implementation `imp`.
/// The ledger counts walk units, checks, setups and inner invocations; `walk_units`
/// converts to the nested formula through [`nested_unit_costs`].
#[allow(clippy::too_many_arguments)]
pub fn nested_search(
    imp: &dyn WalkOps,
    pi0: Option<Vec<C64>>,
    marked: &[bool],
    eps: f64,
    delta: f64,
    inner: InnerBounds,
    outer: OuterCosts,
    config: SearchConfig,
    seed: u64,
) -> Result<SearchOutcome, WalkError> {
    let pi = match pi0 {
        Some(mut v) => {
            imp.local_diffusion(&mut v);
            v
        }
        None => prepare_pi(imp).1,
    };
    let reflector = PiReflector::new(imp, pi, config.reflection)?;
    let mut out = mnrs_search_prepared(&reflector, marked, eps, delta, config, seed)?;
    // every setup maps |π^x⟩ to |π^x(M^x)⟩ once, every walk unit runs one inner reflection
    out.ledger.inner_invocations += out.ledger.setups + out.ledger.walk_steps;
    out.ledger.params = Some(SymbolicParams {
        setup: outer.setup,
        update: outer.t + inner.walk_cost(),
        check: outer.check,
        eps,
        delta,
        inner: Some(InnerSymbols { setup: inner.setup, update: inner.update, check: inner.check, eps: inner.eps, delta: inner.delta, t: outer.t }),
    });
    Ok(out)
}

/// Unit prices that make `ledger.weighted` comparable with the nested cost expression.
pub fn nested_unit_costs(inner: &InnerBounds, outer: &OuterCosts) -> crate::ledger::UnitCosts {
    crate::ledger::UnitCosts { setup: outer.setup + inner.setup, walk_step: outer.t, check: outer.check, inner: inner.walk_cost() }
}

/// Marked-vertex probability distribution right before measurement after `k` rounds.
pub fn pre_measurement_distribution(
    ops: &dyn WalkOps,
    marked: &[bool],
    k: u64,
    variant: Reflection,
) -> Result<Vec<f64>, WalkError> {
    let (_, pi) = prepare_pi(ops);
    let reflector = PiReflector::new(ops, pi, variant)?;
    let mut ledger = CostLedger::new();
    let v = crate::walk::amplified_state(&reflector, marked, k, 1.0, &mut ledger);
    Ok(crate::walk::vertex_distribution(ops, &v))
}

/// Apply `W` `k` times; exposed for timing harnesses.
pub fn run_walk(ops: &dyn WalkOps, v: &mut [C64], k: usize) {
    for _ in 0..k {
        apply_w(ops, v);
    }
}
