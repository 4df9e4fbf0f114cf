use super::instance::Preprocessed;
use super::partition::{CollisionPairs, Tripartition};
use crate::combin::{binom, binom_f64, bits, Region, Subsets};
use crate::history_set::Part;
use crate::ledger::CostLedger;
use crate::markov::{johnson_chain, johnson_spectrum, MarkovChain};
use crate::nested::{InnerBounds, InnerWalkFamily};
use crate::walk::{EdgeSpace, Layout, WalkError, WalkOps, C64};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Largest inner vertex block simulated in concrete mode.
pub const CONCRETE_BLOCK_CAP: u128 = 20_000;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameters {
    pub s1: usize,
    pub s2: usize,
    pub m: usize,
    pub n2: usize,
}

/// `m = max(1, ⌊s₁²n₂/N²⌋)`, capped so that `m ≤ s₂`, `2m ≤ s₁` and `m ≤ n₂ − s₂`.
pub fn swap_batch(s1: usize, s2: usize, n2: usize, len: usize) -> usize {
    let raw = ((s1 * s1 * n2) / (len * len).max(1)).max(1);
    raw.min(s2).min(s1 / 2).min(n2.saturating_sub(s2)).max(1)
}

/// Number of `s₁`-subsets of a `region`-element set containing at least `m` of `pairs`
/// disjoint pairs (inclusion–exclusion), and the product formula `C(pairs, m)·C(region−2m, s₁−2m)`.
pub fn count_inner_marked(region: usize, pairs: usize, s1: usize, m: usize) -> (u128, u128) {
    let closed = if 2 * m > s1 || m > pairs { 0 } else { binom(pairs as u64, m as u64) * binom((region - 2 * m) as u64, (s1 - 2 * m) as u64) };
    if 2 * pairs > region {
        return (0, closed);
    }
    // subsets of size t of a u-set avoiding every one of q disjoint pairs
    let avoid = |q: usize, u: usize, t: usize| -> i128 {
        (0..=q.min(t / 2)).map(|l| {
            let term = binom(q as u64, l as u64) as i128 * binom((u - 2 * l) as u64, (t - 2 * l) as u64) as i128;
            if l % 2 == 0 { term } else { -term }
        }).sum()
    };
    let mut total: i128 = 0;
    for j in m..=pairs.min(s1 / 2) {
        total += binom(pairs as u64, j as u64) as i128 * avoid(pairs - j, region - 2 * j, s1 - 2 * j);
    }
    (total.max(0) as u128, closed)
}

/// Brute-force version of [`count_inner_marked`]: pairs are positions `(2i, 2i+1)`.
pub fn count_inner_marked_brute(region: usize, pairs: usize, s1: usize, m: usize) -> u128 {
    assert!(region <= 64 && 2 * pairs <= region);
    Subsets::new(region as u32, s1 as u32)
        .filter(|&s| (0..pairs).filter(|i| (s >> (2 * i)) & 3 == 3).count() >= m)
        .count() as u128
}

/// Collision structure of one partition: the outer chain on `s₂`-subsets of pairs, and
/// which pairs complete a 3-collision with the third part.
#[derive(Clone, Debug)]
pub struct OuterWalk {
    pub params: Parameters,
    pub len: usize,
    pub pairs: CollisionPairs,
    /// `hot[p]`: the value of pair `p` also occurs in the third part.
    pub hot: Vec<bool>,
    pub third_part: Vec<usize>,
    pub chain: MarkovChain,
    pub marked: Vec<bool>,
}

/// Why the outer walk cannot be run as a quantum walk.
#[derive(Clone, Debug, PartialEq)]
pub enum Degenerate {
    NoPairs,
    Chain(String),
}

impl OuterWalk {
    pub fn new(pre: &Preprocessed, partition: &Tripartition, pairs: CollisionPairs, s1: usize, s2: usize, m: Option<usize>) -> Result<OuterWalk, Degenerate> {
        let n2 = pairs.len();
        if n2 == 0 {
            return Err(Degenerate::NoPairs);
        }
        let third_part = partition.members(Part::A3);
        let hot: Vec<bool> = pairs.pairs.iter().map(|&(a, _)| third_part.iter().any(|&k| pre.value(k) == pre.value(a))).collect();
        let m = m.unwrap_or_else(|| swap_batch(s1, s2, n2, pre.len()));
        let params = Parameters { s1, s2, m, n2 };
        if n2 < 3 || s2 >= n2 || m > s2 || m > n2 - s2 || n2 > 64 {
            return Err(Degenerate::Chain(format!("J({n2},{s2},{m}) is not an ergodic walk")));
        }
        let chain = johnson_chain(n2 as u32, s2 as u32, m as u32).map_err(|e| Degenerate::Chain(e.to_string()))?;
        let marked = chain.labels().iter().map(|&mask| bits(mask).any(|p| hot[p as usize])).collect();
        Ok(OuterWalk { params, len: pre.len(), pairs, hot, third_part, chain, marked })
    }

    /// Fraction of marked vertices: `1 − C(n₂−h, s₂)/C(n₂, s₂)` for `h` hot pairs.
    pub fn marked_fraction(&self) -> f64 {
        self.marked.iter().filter(|&&m| m).count() as f64 / self.marked.len() as f64
    }

    /// Lower bound `s₂/n₂` on the marked fraction when any pair is hot.
    pub fn eps(&self) -> f64 {
        self.params.s2 as f64 / self.params.n2 as f64
    }

    pub fn delta(&self) -> f64 {
        johnson_spectrum(self.params.n2 as u32, self.params.s2 as u32, self.params.m as u32).gap
    }

    /// Grover queries for one check over the third part.
    pub fn check_queries(&self) -> u64 {
        (std::f64::consts::FRAC_PI_4 * (self.third_part.len() as f64).sqrt()).ceil() as u64
    }

    /// Check a vertex by its pair mask, returning the 0-based triple if it is marked.
    pub fn check_marked(&self, pre: &Preprocessed, mask: u64) -> (Option<[usize; 3]>, CostLedger) {
        let ledger = CostLedger { queries: self.check_queries(), checks: 1, ..CostLedger::default() };
        for p in bits(mask) {
            let (a, b) = self.pairs.pairs[p as usize];
            if let Some(&k) = self.third_part.iter().find(|&&k| pre.value(k) == pre.value(a)) {
                let mut t = [a, b, k];
                t.sort_unstable();
                return (Some(t), ledger);
            }
        }
        (None, ledger)
    }
}

/// `ψ` perturbation for negative controls: add `amount` to the first amplitude of the
/// garbage of the oriented edge `(x, y)` and renormalize.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GarbagePerturbation {
    pub x: usize,
    pub y: usize,
    pub amount: f64,
}

/// Explicit registers of the nested walk for one partition (positions must fit in 64 bits).
pub struct ConcreteFamily<'o> {
    pub outer: &'o OuterWalk,
    union_mask: u64,
    pair_masks: Vec<u64>,
    region_len: usize,
    /// `|M^{S₂}|`, which is the same for every `S₂`.
    pub marked_count: u128,
    pub closed_form: u128,
    inner: OnceLock<MarkovChain>,
    perturbation: Option<GarbagePerturbation>,
}

impl<'o> ConcreteFamily<'o> {
    pub fn new(outer: &'o OuterWalk, partition: &Tripartition) -> Result<ConcreteFamily<'o>, WalkError> {
        if outer.len > 64 {
            return Err(WalkError::Infeasible(format!("concrete mode needs at most 64 positions, got {}", outer.len)));
        }
        let Parameters { s1, s2, m, n2 } = outer.params;
        let union_mask = (0..outer.len).filter(|&x| partition.part_of(x) != Part::A3).fold(0u64, |acc, x| acc | 1 << x);
        let pair_masks: Vec<u64> = outer.pairs.pairs.iter().map(|&(a, b)| (1u64 << a) | (1u64 << b)).collect();
        let region_len = union_mask.count_ones() as usize - 2 * s2;
        if s1 > region_len || 2 * m > s1 {
            return Err(WalkError::Infeasible(format!("s1 = {s1} does not fit a region of {region_len} positions with m = {m}")));
        }
        if binom(region_len as u64, s1 as u64) > CONCRETE_BLOCK_CAP {
            return Err(WalkError::Infeasible(format!("C({region_len},{s1}) exceeds the concrete block cap {CONCRETE_BLOCK_CAP}")));
        }
        let (marked_count, closed_form) = count_inner_marked(region_len, n2 - s2, s1, m);
        if marked_count == 0 {
            return Err(WalkError::Infeasible(format!("inner marked set is empty: {} pairs available, m = {m}", n2 - s2)));
        }
        Ok(ConcreteFamily { outer, union_mask, pair_masks, region_len, marked_count, closed_form, inner: OnceLock::new(), perturbation: None })
    }

    pub fn with_perturbation(mut self, p: GarbagePerturbation) -> Self {
        self.perturbation = Some(p);
        self
    }

    pub fn params(&self) -> Parameters {
        self.outer.params
    }

    pub fn region_len(&self) -> usize {
        self.region_len
    }

    /// Positions covered by the pairs of a pair-index mask.
    pub fn covered(&self, pair_mask: u64) -> u64 {
        bits(pair_mask).fold(0, |acc, p| acc | self.pair_masks[p as usize])
    }

    /// `(A₁ ∪ A₂) ∖ I(S₂)` for outer vertex `x`.
    pub fn region(&self, x: usize) -> Region {
        Region::new(self.union_mask & !self.covered(self.outer.chain.label(x)))
    }

    /// `(A₁ ∪ A₂) ∖ I(S₂ ∪ S₂′)`.
    pub fn edge_region(&self, x: usize, y: usize) -> Region {
        let both = self.outer.chain.label(x) | self.outer.chain.label(y);
        Region::new(self.union_mask & !self.covered(both))
    }

    /// Pair indices fully inside the position set `s`.
    pub fn pairs_in(&self, s: u64) -> u64 {
        self.pair_masks.iter().enumerate().filter(|(_, &pm)| s & pm == pm).fold(0, |acc, (i, _)| acc | 1 << i)
    }

    pub fn inner_marked_of(&self, x: usize) -> Vec<bool> {
        let m = self.params().m as u32;
        self.region(x).subsets(self.params().s1 as u32).map(|s| self.pairs_in(s).count_ones() >= m).collect()
    }

    /// `|π^{S₂}(M^{S₂})⟩`: uniform over marked inner vertices.
    pub fn vertex_data(&self, x: usize) -> Vec<f64> {
        let a = 1.0 / (self.marked_count as f64).sqrt();
        self.inner_marked_of(x).into_iter().map(|mk| if mk { a } else { 0.0 }).collect()
    }

    /// `ψ(S₂, S₂′)` indexed by the rank of `S̃₁` in the edge region.
    pub fn garbage_state(&self, x: usize, y: usize) -> Result<Vec<f64>, WalkError> {
        let space_edge = self.outer.chain.neighbors(x).any(|(z, _)| z == y);
        if !space_edge {
            return Err(WalkError::Infeasible(format!("outer vertices {x} and {y} are not adjacent")));
        }
        let Parameters { s1, s2, m, n2 } = self.params();
        let scale = binom_f64((n2 - s2) as u64, m as u64) / self.marked_count as f64;
        let region = self.edge_region(x, y);
        let mut psi: Vec<f64> = region
            .subsets((s1 - 2 * m) as u32)
            .map(|s| {
                let p = self.pairs_in(s).count_ones() as u64;
                (scale / binom_f64(p + m as u64, m as u64)).sqrt()
            })
            .collect();
        if let Some(pt) = self.perturbation {
            if pt.x == x && pt.y == y && !psi.is_empty() {
                psi[0] += pt.amount;
                let norm = psi.iter().map(|a| a * a).sum::<f64>().sqrt();
                psi.iter_mut().for_each(|a| *a /= norm);
            }
        }
        Ok(psi)
    }

    /// `Σ_y √P(x,y)|x,y⟩|ψ(x,y)⟩` built from [`garbage_state`](Self::garbage_state).
    pub fn ldwg_target(&self, ops: &ThreeDistinctOps) -> Result<Vec<Vec<C64>>, WalkError> {
        let space = ops.space();
        let nv = space.vertex_count();
        (0..nv)
            .map(|x| {
                let mut v = vec![ZERO; ops.layout().total()];
                for e in space.edges_of(x) {
                    let psi = self.garbage_state(x, space.target(e))?;
                    for (a, p) in v[ops.layout().block(nv + e)].iter_mut().zip(psi) {
                        *a = C64::new(p * space.sqrt_p(e), 0.0);
                    }
                }
                Ok(v)
            })
            .collect()
    }

    /// Inner bounds: S′ = s₁, U′ = 1, C′ = 0, ε′ = |M|/C(R, s₁), δ′ = gap of J(R, s₁, 1).
    pub fn inner_bounds(&self) -> InnerBounds {
        let s1 = self.params().s1;
        InnerBounds {
            setup: s1 as f64,
            update: 1.0,
            check: 0.0,
            eps: self.marked_count as f64 / binom_f64(self.region_len as u64, s1 as u64),
            delta: johnson_spectrum(self.region_len as u32, s1 as u32, 1).gap,
        }
    }
}

impl InnerWalkFamily for ConcreteFamily<'_> {
    fn outer_vertex_count(&self) -> usize {
        self.outer.chain.vertex_count()
    }

    fn inner_chain(&self, _x: usize) -> &MarkovChain {
        self.inner.get_or_init(|| johnson_chain(self.region_len as u32, self.params().s1 as u32, 1).expect("inner Johnson graph is ergodic"))
    }

    fn inner_marked(&self, x: usize) -> Vec<bool> {
        self.inner_marked_of(x)
    }

    fn bounds(&self) -> InnerBounds {
        self.inner_bounds()
    }
}

/// Sparse isometry `V` from the marked part of the vertex blocks into the edge blocks.
#[derive(Clone, Debug, Default)]
struct Isometry {
    /// Global indices of the domain basis states.
    domain: Vec<usize>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    coefs: Vec<f64>,
}

/// The nested-walk operators of the 3-Distinctness family in concrete mode:
/// Local Diffusion with Garbage and Garbage Swap, with the vertex data `|π^{S₂}(M^{S₂})⟩`.
pub struct ThreeDistinctOps {
    space: EdgeSpace,
    layout: Layout,
    d0: Vec<Vec<f64>>,
    iso: Isometry,
    corrupt_swap: Option<usize>,
}

impl ThreeDistinctOps {
    /// Build the operators; `LD` is realized by the three-step procedure on every marked
    /// inner vertex: choose `I ⊆ S₂` and `J ⊆ P(S₁)` of size `m`, then strip `I(J)` from `S₁`.
    pub fn new(family: &ConcreteFamily<'_>) -> Result<ThreeDistinctOps, WalkError> {
        let chain = &family.outer.chain;
        let space = EdgeSpace::new(chain);
        let Parameters { s1, s2, m, .. } = family.params();
        let nv = space.vertex_count();
        let vdim = binom(family.region_len as u64, s1 as u64) as usize;
        let edim = binom((family.region_len - 2 * m) as u64, (s1 - 2 * m) as u64) as usize;
        let layout = Layout::from_dims((0..nv).map(|_| vdim).chain((0..space.edge_count()).map(|_| edim)));
        let d0: Vec<Vec<f64>> = (0..nv).map(|x| family.vertex_data(x)).collect();
        let edge_regions: Vec<Region> = (0..space.edge_count()).map(|e| family.edge_region(space.source(e), space.target(e))).collect();
        let c_s2 = binom_f64(s2 as u64, m as u64);
        let mut iso = Isometry::default();
        iso.offsets.push(0);
        for x in 0..nv {
            let s2_mask = chain.label(x);
            let region = family.region(x);
            let base = layout.block(x).start;
            for (i, s) in region.subsets(s1 as u32).enumerate() {
                let p = family.pairs_in(s);
                let pc = p.count_ones() as usize;
                if pc < m {
                    continue;
                }
                let coef = 1.0 / (c_s2 * binom_f64(pc as u64, m as u64)).sqrt();
                iso.domain.push(base + i);
                for out in Region::new(s2_mask).subsets(m as u32) {
                    for inn in Region::new(p).subsets(m as u32) {
                        let y = chain.index_of((s2_mask & !out) | inn).expect("neighbor is a vertex");
                        let e = space.edge_index(x, y).expect("neighbor is adjacent");
                        let tilde = s & !family.covered(inn);
                        iso.targets.push(layout.block(nv + e).start + edge_regions[e].rank(tilde));
                        iso.coefs.push(coef);
                    }
                }
                iso.offsets.push(iso.targets.len());
            }
        }
        Ok(ThreeDistinctOps { space, layout, d0, iso, corrupt_swap: None })
    }

    /// Negative control: Garbage Swap negates the garbage carried along edge `e`.
    pub fn with_corrupt_swap(mut self, e: usize) -> Self {
        self.corrupt_swap = Some(e);
        self
    }

    pub fn domain_size(&self) -> usize {
        self.iso.domain.len()
    }

    fn v_dagger(&self, v: &[C64]) -> Vec<C64> {
        (0..self.iso.domain.len())
            .map(|d| {
                let r = self.iso.offsets[d]..self.iso.offsets[d + 1];
                self.iso.targets[r.clone()].iter().zip(&self.iso.coefs[r]).map(|(&t, &c)| v[t] * c).sum()
            })
            .collect()
    }

    fn swap_with(&self, v: &mut [C64], adjoint: bool) {
        let nv = self.space.vertex_count();
        let start = self.layout.block(nv).start;
        let old = v[start..].to_vec();
        for e in 0..self.space.edge_count() {
            let src = self.layout.block(nv + e);
            let dst = self.layout.block(nv + self.space.reverse(e));
            // forward moves e → reverse(e); the adjoint moves it back
            let (from, to) = if adjoint { (dst, src) } else { (src, dst) };
            let sign = if self.corrupt_swap == Some(e) { -1.0 } else { 1.0 };
            for (a, b) in v[to].iter_mut().zip(&old[from.start - start..from.end - start]) {
                *a = b * sign;
            }
        }
    }
}

impl WalkOps for ThreeDistinctOps {
    fn space(&self) -> &EdgeSpace {
        &self.space
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    // U = V + V† + (I − Π_dom − VV†), a self-adjoint unitary extending V.
    fn local_diffusion(&self, v: &mut [C64]) {
        let w = self.v_dagger(v);
        for (d, &g) in self.iso.domain.iter().enumerate() {
            let diff = v[g] - w[d];
            v[g] = w[d];
            if diff != ZERO {
                let r = self.iso.offsets[d]..self.iso.offsets[d + 1];
                for (&t, &c) in self.iso.targets[r.clone()].iter().zip(&self.iso.coefs[r]) {
                    v[t] += diff * c;
                }
            }
        }
    }

    fn local_diffusion_adj(&self, v: &mut [C64]) {
        self.local_diffusion(v);
    }

    fn swap(&self, v: &mut [C64]) {
        self.swap_with(v, false);
    }

    fn swap_adj(&self, v: &mut [C64]) {
        self.swap_with(v, true);
    }

    fn flip(&self, v: &mut [C64]) {
        for (x, d) in self.d0.iter().enumerate() {
            let r = self.layout.block(x);
            let t: C64 = v[r.clone()].iter().zip(d).map(|(a, b)| a * b).sum::<C64>() * 2.0;
            for (a, b) in v[r].iter_mut().zip(d) {
                *a -= t * b;
            }
        }
    }

    fn vertex_state(&self, x: usize) -> Vec<C64> {
        let mut v = vec![ZERO; self.layout.total()];
        for (a, &d) in v[self.layout.block(x)].iter_mut().zip(&self.d0[x]) {
            *a = C64::new(d, 0.0);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marked_count_example() {
        assert_eq!(count_inner_marked(8, 2, 4, 1), (29, 30));
        assert_eq!(count_inner_marked_brute(8, 2, 4, 1), 29);
        assert_eq!(count_inner_marked(8, 0, 4, 1).0, 0);
        assert_eq!(count_inner_marked(6, 2, 4, 2), (1, 1));
    }
}
