//! Quantization of a reversible chain with coin-dependent data.
//!
//! The simulated Hilbert space is a direct sum of blocks, one per basis pair of the edge
//! space `(X × {0}) ∪ E→`. In abstract mode every block is one-dimensional and the data
//! registers are implicit; in concrete mode the block of a pair holds its data register
//! explicitly. Operators act in place on flat amplitude vectors.

use crate::ledger::{CostLedger, SymbolicParams};
use crate::markov::{ChainError, MarkovChain};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::ops::Range;
use thiserror::Error;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("data state for {0} is not normalized (norm² = {1})")]
    Unnormalized(String, f64),
    #[error("edge ({x},{y}) and its reverse carry data of different dimensions")]
    DimensionMismatch { x: usize, y: usize },
    #[error("marked set is empty")]
    EmptyMarked,
    #[error("phase estimation needs at least one bit")]
    NoPrecision,
    #[error("{0}")]
    Infeasible(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Abstract,
    Concrete,
}

/// Basis of `(X × {0}) ∪ E→`: index `x` is `(x, 0)`, index `|X| + e` is the e-th directed edge.
#[derive(Clone, Debug)]
pub struct EdgeSpace {
    nv: usize,
    offsets: Vec<usize>,
    sources: Vec<u32>,
    targets: Vec<u32>,
    sqrt_p: Vec<f64>,
    reverse: Vec<u32>,
    sqrt_pi: Vec<f64>,
}

impl EdgeSpace {
    pub fn new(chain: &MarkovChain) -> EdgeSpace {
        let nv = chain.vertex_count();
        let mut offsets = Vec::with_capacity(nv + 1);
        let mut sources = Vec::with_capacity(chain.edge_count());
        let mut targets = Vec::with_capacity(chain.edge_count());
        let mut sqrt_p = Vec::with_capacity(chain.edge_count());
        for x in 0..nv {
            offsets.push(targets.len());
            for (y, p) in chain.neighbors(x) {
                sources.push(x as u32);
                targets.push(y as u32);
                sqrt_p.push(p.sqrt());
            }
        }
        offsets.push(targets.len());
        // sorted copy of each row for reverse-edge lookup
        let mut sorted: Vec<(u32, u32)> = Vec::with_capacity(targets.len());
        for x in 0..nv {
            let start = sorted.len();
            sorted.extend((offsets[x]..offsets[x + 1]).map(|e| (targets[e], e as u32)));
            sorted[start..].sort_unstable();
        }
        let reverse = (0..targets.len())
            .map(|e| {
                let (x, y) = (sources[e], targets[e] as usize);
                let row = &sorted[offsets[y]..offsets[y + 1]];
                let pos = row.binary_search_by_key(&x, |&(t, _)| t).expect("reversible chain has reverse edges");
                row[pos].1
            })
            .collect();
        let sqrt_pi = chain.stationary().iter().map(|p| p.sqrt()).collect();
        EdgeSpace { nv, offsets, sources, targets, sqrt_p, reverse, sqrt_pi }
    }

    pub fn vertex_count(&self) -> usize {
        self.nv
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn dim(&self) -> usize {
        self.nv + self.targets.len()
    }

    pub fn edges_of(&self, x: usize) -> Range<usize> {
        self.offsets[x]..self.offsets[x + 1]
    }

    pub fn source(&self, e: usize) -> usize {
        self.sources[e] as usize
    }

    pub fn target(&self, e: usize) -> usize {
        self.targets[e] as usize
    }

    pub fn sqrt_p(&self, e: usize) -> f64 {
        self.sqrt_p[e]
    }

    pub fn reverse(&self, e: usize) -> usize {
        self.reverse[e] as usize
    }

    pub fn sqrt_pi(&self, x: usize) -> f64 {
        self.sqrt_pi[x]
    }

    pub fn edge_index(&self, x: usize, y: usize) -> Option<usize> {
        self.edges_of(x).find(|&e| self.target(e) == y)
    }

    /// Vertex in the first register of basis element `b`.
    pub fn basis_source(&self, b: usize) -> usize {
        if b < self.nv {
            b
        } else {
            self.source(b - self.nv)
        }
    }
}

/// Block offsets of the direct-sum layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    starts: Vec<usize>,
}

impl Layout {
    pub fn from_dims(dims: impl IntoIterator<Item = usize>) -> Layout {
        let mut starts = vec![0];
        for d in dims {
            starts.push(starts.last().unwrap() + d);
        }
        Layout { starts }
    }

    pub fn unit(blocks: usize) -> Layout {
        Layout { starts: (0..=blocks).collect() }
    }

    pub fn blocks(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn block(&self, b: usize) -> Range<usize> {
        self.starts[b]..self.starts[b + 1]
    }

    pub fn total(&self) -> usize {
        *self.starts.last().unwrap()
    }
}

/// The three update operators of the quantized walk on a concrete layout.
///
/// `flip` must be self-adjoint; `local_diffusion` maps `|x,0⟩|D(x,0)⟩` to
/// `Σ_y √P(x,y) |x,y⟩|D(x,y)⟩`; `swap` maps `|x,y⟩|D(x,y)⟩` to `|y,x⟩|D(y,x)⟩`.
pub trait WalkOps: Sync {
    fn space(&self) -> &EdgeSpace;
    fn layout(&self) -> &Layout;
    fn local_diffusion(&self, v: &mut [C64]);
    fn local_diffusion_adj(&self, v: &mut [C64]);
    fn swap(&self, v: &mut [C64]);
    fn swap_adj(&self, v: &mut [C64]);
    fn flip(&self, v: &mut [C64]);
    /// `|x,0⟩|D(x,0)⟩` as a full-length vector.
    fn vertex_state(&self, x: usize) -> Vec<C64>;
}

/// Data-free operators: every block has dimension one.
#[derive(Clone, Debug)]
pub struct AbstractOps {
    space: EdgeSpace,
    layout: Layout,
}

impl AbstractOps {
    pub fn new(chain: &MarkovChain) -> AbstractOps {
        let space = EdgeSpace::new(chain);
        let layout = Layout::unit(space.dim());
        AbstractOps { space, layout }
    }
}

impl WalkOps for AbstractOps {
    fn space(&self) -> &EdgeSpace {
        &self.space
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    // Householder reflection exchanging |x,0⟩ and Σ_y √P(x,y)|x,y⟩; it is its own adjoint.
    fn local_diffusion(&self, v: &mut [C64]) {
        let s = &self.space;
        let nv = s.nv;
        for x in 0..nv {
            let edges = s.edges_of(x);
            let mut t = v[x];
            for e in edges.clone() {
                t -= v[nv + e] * s.sqrt_p[e];
            }
            v[x] -= t;
            for e in edges {
                v[nv + e] += t * s.sqrt_p[e];
            }
        }
    }

    fn local_diffusion_adj(&self, v: &mut [C64]) {
        self.local_diffusion(v);
    }

    fn swap(&self, v: &mut [C64]) {
        let nv = self.space.nv;
        let old: Vec<C64> = v[nv..].to_vec();
        for (e, a) in old.into_iter().enumerate() {
            v[nv + self.space.reverse(e)] = a;
        }
    }

    fn swap_adj(&self, v: &mut [C64]) {
        self.swap(v);
    }

    fn flip(&self, v: &mut [C64]) {
        for a in &mut v[..self.space.nv] {
            *a = -*a;
        }
    }

    fn vertex_state(&self, x: usize) -> Vec<C64> {
        let mut v = vec![ZERO; self.layout.total()];
        v[x] = C64::new(1.0, 0.0);
        v
    }
}

/// Coin-dependent data: a normalized state for every `(x,0)` and every directed edge.
pub trait DataOracle {
    fn vertex_data(&self, x: usize) -> Vec<C64>;
    fn edge_data(&self, x: usize, y: usize) -> Vec<C64>;
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Unitary on a block mapping `u` to `v` (both unit vectors): a phase times a Householder
/// reflection.
#[derive(Clone, Debug)]
struct BlockMap {
    phase: C64,
    w: Option<Vec<C64>>,
}

impl BlockMap {
    fn new(u: &[C64], v: &[C64]) -> BlockMap {
        let ip = dot(u, v);
        let phase = if ip.norm() > 1e-300 { ip / ip.norm() } else { C64::new(1.0, 0.0) };
        let w: Vec<C64> = u.iter().zip(v).map(|(a, b)| a - b * phase.conj()).collect();
        let n2 = norm_sqr(&w);
        let w = (n2 > 1e-28).then(|| w.iter().map(|z| z / n2.sqrt()).collect());
        BlockMap { phase, w }
    }

    fn apply(&self, z: &mut [C64], adjoint: bool) {
        if let Some(w) = &self.w {
            let t = dot(w, z) * 2.0;
            for (a, b) in z.iter_mut().zip(w) {
                *a -= b * t;
            }
        }
        let ph = if adjoint { self.phase.conj() } else { self.phase };
        for a in z.iter_mut() {
            *a *= ph;
        }
    }
}

/// Concrete operators built generically from a [`DataOracle`].
#[derive(Clone, Debug)]
pub struct DataOps {
    space: EdgeSpace,
    layout: Layout,
    d0: Vec<Vec<C64>>,
    de: Vec<Vec<C64>>,
    maps: Vec<BlockMap>,
}

impl DataOps {
    pub fn new(chain: &MarkovChain, data: &dyn DataOracle) -> Result<DataOps, WalkError> {
        let space = EdgeSpace::new(chain);
        let d0: Vec<Vec<C64>> = (0..space.nv).map(|x| data.vertex_data(x)).collect();
        let de: Vec<Vec<C64>> = (0..space.edge_count()).map(|e| data.edge_data(space.source(e), space.target(e))).collect();
        for (x, d) in d0.iter().enumerate() {
            let n = norm_sqr(d);
            if (n - 1.0).abs() > 1e-10 {
                return Err(WalkError::Unnormalized(format!("D({x},0)"), n));
            }
        }
        for (e, d) in de.iter().enumerate() {
            let n = norm_sqr(d);
            if (n - 1.0).abs() > 1e-10 {
                return Err(WalkError::Unnormalized(format!("D({},{})", space.source(e), space.target(e)), n));
            }
            if d.len() != de[space.reverse(e)].len() {
                return Err(WalkError::DimensionMismatch { x: space.source(e), y: space.target(e) });
            }
        }
        let maps = (0..space.edge_count()).map(|e| BlockMap::new(&de[e], &de[space.reverse(e)])).collect();
        let layout = Layout::from_dims(d0.iter().map(Vec::len).chain(de.iter().map(Vec::len)));
        Ok(DataOps { space, layout, d0, de, maps })
    }
}

impl WalkOps for DataOps {
    fn space(&self) -> &EdgeSpace {
        &self.space
    }

    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn local_diffusion(&self, v: &mut [C64]) {
        let s = &self.space;
        for x in 0..s.nv {
            let r0 = self.layout.block(x);
            let mut t = dot(&self.d0[x], &v[r0.clone()]);
            for e in s.edges_of(x) {
                t -= dot(&self.de[e], &v[self.layout.block(s.nv + e)]) * s.sqrt_p[e];
            }
            for (a, d) in v[r0].iter_mut().zip(&self.d0[x]) {
                *a -= d * t;
            }
            for e in s.edges_of(x) {
                let c = t * s.sqrt_p[e];
                for (a, d) in v[self.layout.block(s.nv + e)].iter_mut().zip(&self.de[e]) {
                    *a += d * c;
                }
            }
        }
    }

    fn local_diffusion_adj(&self, v: &mut [C64]) {
        self.local_diffusion(v);
    }

    fn swap(&self, v: &mut [C64]) {
        let nv = self.space.nv;
        let old: Vec<C64> = v[self.layout.block(nv).start..].to_vec();
        let base = self.layout.block(nv).start;
        for e in 0..self.space.edge_count() {
            let src = self.layout.block(nv + e);
            let mut z: Vec<C64> = old[src.start - base..src.end - base].to_vec();
            self.maps[e].apply(&mut z, false);
            v[self.layout.block(nv + self.space.reverse(e))].copy_from_slice(&z);
        }
    }

    fn swap_adj(&self, v: &mut [C64]) {
        let nv = self.space.nv;
        let old: Vec<C64> = v[self.layout.block(nv).start..].to_vec();
        let base = self.layout.block(nv).start;
        for e in 0..self.space.edge_count() {
            let r = self.space.reverse(e);
            let src = self.layout.block(nv + r);
            let mut z: Vec<C64> = old[src.start - base..src.end - base].to_vec();
            self.maps[e].apply(&mut z, true);
            v[self.layout.block(nv + e)].copy_from_slice(&z);
        }
    }

    fn flip(&self, v: &mut [C64]) {
        for x in 0..self.space.nv {
            let r = self.layout.block(x);
            let t = dot(&self.d0[x], &v[r.clone()]) * 2.0;
            for (a, d) in v[r].iter_mut().zip(&self.d0[x]) {
                *a -= d * t;
            }
        }
    }

    fn vertex_state(&self, x: usize) -> Vec<C64> {
        let mut v = vec![ZERO; self.layout.total()];
        v[self.layout.block(x)].copy_from_slice(&self.d0[x]);
        v
    }
}

/// Build the update operators for `chain` in the requested mode.
pub fn build_operators(chain: &MarkovChain, data: Option<&dyn DataOracle>, mode: Mode) -> Result<Box<dyn WalkOps>, WalkError> {
    match (mode, data) {
        (Mode::Abstract, _) | (Mode::Concrete, None) => Ok(Box::new(AbstractOps::new(chain))),
        (Mode::Concrete, Some(d)) => Ok(Box::new(DataOps::new(chain, d)?)),
    }
}

/// `W(P) = (Swap · LD · Flip · LD†)²`.
pub fn apply_w(ops: &dyn WalkOps, v: &mut [C64]) {
    for _ in 0..2 {
        ops.local_diffusion_adj(v);
        ops.flip(v);
        ops.local_diffusion(v);
        ops.swap(v);
    }
}

/// `W(P)† = (LD · Flip · LD† · Swap†)²`.
pub fn apply_w_adj(ops: &dyn WalkOps, v: &mut [C64]) {
    for _ in 0..2 {
        ops.swap_adj(v);
        ops.local_diffusion_adj(v);
        ops.flip(v);
        ops.local_diffusion(v);
    }
}

/// `|π⟩⁰ = Σ_x √π(x) |x,0⟩|D(x,0)⟩`.
pub fn prepare_pi0(ops: &dyn WalkOps) -> Vec<C64> {
    let s = ops.space();
    let mut v = vec![ZERO; ops.layout().total()];
    for x in 0..s.vertex_count() {
        let r = ops.layout().block(x);
        let vx = ops.vertex_state(x);
        for i in r {
            v[i] = vx[i] * s.sqrt_pi(x);
        }
    }
    v
}

/// Returns `(|π⟩⁰, |π⟩)` with `|π⟩ = LD |π⟩⁰`.
pub fn prepare_pi(ops: &dyn WalkOps) -> (Vec<C64>, Vec<C64>) {
    let pi0 = prepare_pi0(ops);
    let mut pi = pi0.clone();
    ops.local_diffusion(&mut pi);
    (pi0, pi)
}

/// Multiply every block whose first register lies in `marked` by `phase`.
pub fn phase_marked(ops: &dyn WalkOps, marked: &[bool], phase: C64, v: &mut [C64]) {
    let s = ops.space();
    for b in 0..ops.layout().blocks() {
        if marked[s.basis_source(b)] {
            for a in &mut v[ops.layout().block(b)] {
                *a *= phase;
            }
        }
    }
}

/// The checking reflection: negate blocks whose vertex is marked.
pub fn check_reflection(ops: &dyn WalkOps, marked: &[bool], v: &mut [C64]) {
    phase_marked(ops, marked, C64::new(-1.0, 0.0), v);
}

/// Probability of each vertex in the first register.
pub fn vertex_distribution(ops: &dyn WalkOps, v: &[C64]) -> Vec<f64> {
    let s = ops.space();
    let mut p = vec![0.0; s.vertex_count()];
    for b in 0..ops.layout().blocks() {
        p[s.basis_source(b)] += norm_sqr(&v[ops.layout().block(b)]);
    }
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum Reflection {
    Exact,
    PhaseEstimation { bits: u32 },
}

/// Default precision ⌈log₂(1/√(εδ))⌉ + 2.
pub fn default_precision_bits(eps: f64, delta: f64) -> u32 {
    ((1.0 / (eps * delta).sqrt()).log2().ceil().max(0.0) as u32) + 2
}

/// Reflection (or general phase rotation) about `|π⟩`.
pub struct PiReflector<'a> {
    ops: &'a dyn WalkOps,
    pi: Cow<'a, [C64]>,
    variant: Reflection,
}

impl<'a> PiReflector<'a> {
    pub fn new(ops: &'a dyn WalkOps, pi: Vec<C64>, variant: Reflection) -> Result<Self, WalkError> {
        Self::with_state(ops, Cow::Owned(pi), variant)
    }

    pub fn borrowed(ops: &'a dyn WalkOps, pi: &'a [C64], variant: Reflection) -> Result<Self, WalkError> {
        Self::with_state(ops, Cow::Borrowed(pi), variant)
    }

    fn with_state(ops: &'a dyn WalkOps, pi: Cow<'a, [C64]>, variant: Reflection) -> Result<Self, WalkError> {
        if let Reflection::PhaseEstimation { bits: 0 } = variant {
            return Err(WalkError::NoPrecision);
        }
        Ok(PiReflector { ops, pi, variant })
    }

    pub fn ops(&self) -> &'a dyn WalkOps {
        self.ops
    }

    pub fn pi(&self) -> &[C64] {
        &self.pi
    }

    pub fn variant(&self) -> Reflection {
        self.variant
    }

    /// Record a warning when the resolution 2π·2^{−b} cannot separate the eigenphase gap
    /// implied by `delta`.
    pub fn check_precision(&self, delta: f64, ledger: &mut CostLedger) {
        if let Reflection::PhaseEstimation { bits } = self.variant {
            let resolution = 2.0 * std::f64::consts::PI / (1u64 << bits) as f64;
            let gap = 2.0 * (1.0 - delta).acos();
            if resolution > gap {
                ledger.warn(format!(
                    "phase estimation with {bits} bits resolves {resolution:.3e} rad but the eigenphase gap is {gap:.3e}"
                ));
            }
        }
    }

    /// The emulated projector onto `|π⟩`: exact, or `A†A` with `A = 2^{−b} Σ_{a<2^b} W^a`
    /// (the ancilla-zero block of phase estimation).
    fn project(&self, v: &[C64], ledger: &mut CostLedger) -> Vec<C64> {
        match self.variant {
            Reflection::Exact => {
                let c = dot(&self.pi, v);
                self.pi.iter().map(|p| p * c).collect()
            }
            Reflection::PhaseEstimation { bits } => {
                let count = 1u64 << bits;
                let scale = 1.0 / count as f64;
                let mut acc = v.to_vec();
                let mut cur = v.to_vec();
                for _ in 1..count {
                    apply_w(self.ops, &mut cur);
                    for (a, c) in acc.iter_mut().zip(&cur) {
                        *a += c;
                    }
                }
                acc.iter_mut().for_each(|a| *a *= scale);
                let mut out = acc.clone();
                let mut cur = acc;
                for _ in 1..count {
                    apply_w_adj(self.ops, &mut cur);
                    for (a, c) in out.iter_mut().zip(&cur) {
                        *a += c;
                    }
                }
                out.iter_mut().for_each(|a| *a *= scale);
                ledger.simulator_walk_applications += 2 * (count - 1);
                out
            }
        }
    }

    /// `v ← v + (e^{iφ} − 1) Π v`.
    pub fn apply_phase(&self, v: &mut [C64], phi: f64, ledger: &mut CostLedger) {
        let proj = self.project(v, ledger);
        let f = C64::from_polar(1.0, phi) - 1.0;
        for (a, p) in v.iter_mut().zip(&proj) {
            *a += p * f;
        }
    }

    /// `v ← (2Π − I) v`.
    pub fn reflect(&self, v: &mut [C64], ledger: &mut CostLedger) {
        let proj = self.project(v, ledger);
        for (a, p) in v.iter_mut().zip(&proj) {
            *a = p * 2.0 - *a;
        }
    }
}

/// Exact amplitude amplification schedule: `(J + 1)` iterations at phase `φ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseMatched {
    pub iterations: u32,
    pub phi: f64,
    /// Global phase correction so the output overlaps the target with a positive amplitude.
    pub correction: C64,
}

/// Schedule for mapping a state with marked weight `sin²β` exactly onto its marked part.
pub fn phase_matched_schedule(marked_weight: f64) -> PhaseMatched {
    let beta = marked_weight.clamp(0.0, 1.0).sqrt().asin();
    let j = ((std::f64::consts::FRAC_PI_2 - beta) / (2.0 * beta)).floor() as u32;
    let ratio = ((std::f64::consts::PI / (4.0 * j as f64 + 6.0)).sin() / beta.sin()).clamp(-1.0, 1.0);
    let phi = 2.0 * ratio.asin();
    // run the 2D model: basis (unmarked, marked)
    let s = [C64::new(beta.cos(), 0.0), C64::new(beta.sin(), 0.0)];
    let mut v = s;
    let e = C64::from_polar(1.0, phi);
    for _ in 0..=j {
        v[1] *= e; // S_M
        let c = s[0] * v[0] + s[1] * v[1];
        let f = (e - 1.0) * c;
        v[0] = -(v[0] + s[0] * f);
        v[1] = -(v[1] + s[1] * f);
    }
    let correction = if v[1].norm() > 0.0 { v[1].conj() / v[1].norm() } else { C64::new(1.0, 0.0) };
    PhaseMatched { iterations: j + 1, phi, correction }
}

/// Map `|π⟩` to `|π(M)⟩` by phase-matched amplitude amplification.
pub fn map_pi_to_pi_m(reflector: &PiReflector<'_>, marked: &[bool], ledger: &mut CostLedger) -> Result<Vec<C64>, WalkError> {
    let ops = reflector.ops;
    let dist = vertex_distribution(ops, reflector.pi());
    let weight: f64 = dist.iter().zip(marked).filter(|(_, &m)| m).map(|(p, _)| p).sum();
    if weight <= 0.0 {
        return Err(WalkError::EmptyMarked);
    }
    let mut v = reflector.pi().to_vec();
    if weight >= 1.0 - 1e-15 {
        return Ok(v);
    }
    let sched = phase_matched_schedule(weight);
    let e = C64::from_polar(1.0, sched.phi);
    for _ in 0..sched.iterations {
        phase_marked(ops, marked, e, &mut v);
        reflector.apply_phase(&mut v, sched.phi, ledger);
        v.iter_mut().for_each(|a| *a = -*a);
        ledger.checks += 1;
    }
    v.iter_mut().for_each(|a| *a *= sched.correction);
    Ok(v)
}

/// Normalized projection of `v` onto blocks with marked first register.
pub fn project_marked(ops: &dyn WalkOps, marked: &[bool], v: &[C64]) -> Vec<C64> {
    let s = ops.space();
    let mut out = vec![ZERO; v.len()];
    for b in 0..ops.layout().blocks() {
        if marked[s.basis_source(b)] {
            let r = ops.layout().block(b);
            out[r.clone()].copy_from_slice(&v[r]);
        }
    }
    let n = norm_sqr(&out).sqrt();
    if n > 0.0 {
        out.iter_mut().for_each(|a| *a /= n);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub reflection: Reflection,
    pub attempts: u32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { reflection: Reflection::Exact, attempts: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub found: Option<usize>,
    pub ledger: CostLedger,
    /// Marked probability of the final pre-measurement state of the last attempt.
    pub marked_probability: f64,
    pub attempts_used: u32,
}

/// Iteration count ⌊π/(4θ)⌋ with sin²θ = ε.
pub fn grover_iterations(eps: f64) -> u64 {
    let theta = eps.clamp(1e-300, 1.0).sqrt().asin();
    (std::f64::consts::PI / (4.0 * theta)).floor() as u64
}

/// The amplified state after `k` rounds of (check, reflect about π) starting from `|π⟩`.
pub fn amplified_state(reflector: &PiReflector<'_>, marked: &[bool], k: u64, delta: f64, ledger: &mut CostLedger) -> Vec<C64> {
    let per_reflection = (1.0 / delta.sqrt()).ceil() as u64;
    let mut v = reflector.pi().to_vec();
    for _ in 0..k {
        check_reflection(reflector.ops, marked, &mut v);
        ledger.checks += 1;
        reflector.reflect(&mut v, ledger);
        ledger.walk_steps += per_reflection;
    }
    v
}

/// Quantum walk search: amplify, measure the vertex register, verify classically.
pub fn mnrs_search(
    ops: &dyn WalkOps,
    marked: &[bool],
    eps: f64,
    delta: f64,
    config: SearchConfig,
    seed: u64,
) -> Result<SearchOutcome, WalkError> {
    let (_, pi) = prepare_pi(ops);
    let reflector = PiReflector::new(ops, pi, config.reflection)?;
    mnrs_search_prepared(&reflector, marked, eps, delta, config, seed)
}

pub fn mnrs_search_prepared(
    reflector: &PiReflector<'_>,
    marked: &[bool],
    eps: f64,
    delta: f64,
    config: SearchConfig,
    seed: u64,
) -> Result<SearchOutcome, WalkError> {
    let ops = reflector.ops;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = CostLedger::with_params(SymbolicParams { setup: 1.0, update: 1.0, check: 1.0, eps, delta, inner: None });
    reflector.check_precision(delta, &mut ledger);
    let k_star = grover_iterations(eps);
    let mut marked_probability = 0.0;
    for attempt in 0..config.attempts.max(1) {
        let k = if attempt == 0 { k_star } else { rng.random_range(0..=k_star) };
        ledger.setups += 1;
        let v = amplified_state(reflector, marked, k, delta, &mut ledger);
        let dist = vertex_distribution(ops, &v);
        marked_probability = dist.iter().zip(marked).filter(|(_, &m)| m).map(|(p, _)| p).sum();
        let x = sample_index(&dist, &mut rng);
        ledger.checks += 1;
        if marked[x] {
            return Ok(SearchOutcome { found: Some(x), ledger, marked_probability, attempts_used: attempt + 1 });
        }
    }
    Ok(SearchOutcome { found: None, ledger, marked_probability, attempts_used: config.attempts.max(1) })
}

/// Sample an index from (possibly subnormalized) weights.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Dense matrix of `W` on the simulated space (column j = W e_j).
pub fn dense_w(ops: &dyn WalkOps) -> DMatrix<C64> {
    let n = ops.layout().total();
    let mut m = DMatrix::zeros(n, n);
    let mut col = vec![ZERO; n];
    for j in 0..n {
        col.iter_mut().for_each(|a| *a = ZERO);
        col[j] = C64::new(1.0, 0.0);
        apply_w(ops, &mut col);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}

/// ‖W†W − I‖_max from the dense matrix.
pub fn unitarity_defect_dense(ops: &dyn WalkOps) -> f64 {
    let w = dense_w(ops);
    let g = w.adjoint() * &w;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

/// Randomized unitarity probe: max over probes of |⟨Wu,Wv⟩ − ⟨u,v⟩| and ‖W†Wu − u‖∞.
pub fn unitarity_defect_probe(ops: &dyn WalkOps, probes: usize, seed: u64) -> f64 {
    let n = ops.layout().total();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rand_vec = |rng: &mut ChaCha8Rng| -> Vec<C64> {
        let mut v: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let s = norm_sqr(&v).sqrt();
        v.iter_mut().for_each(|a| *a /= s);
        v
    };
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let u = rand_vec(&mut rng);
        let v = rand_vec(&mut rng);
        let (mut wu, mut wv) = (u.clone(), v.clone());
        apply_w(ops, &mut wu);
        apply_w(ops, &mut wv);
        worst = worst.max((dot(&wu, &wv) - dot(&u, &v)).norm());
        apply_w_adj(ops, &mut wu);
        worst = worst.max(max_abs_diff(&wu, &u));
    }
    worst
}

/// Orthonormal basis of span{a_x} + span{Swap a_x} with a_x = LD|x,0⟩|D(x,0)⟩.
fn walked_subspace(ops: &dyn WalkOps) -> Vec<Vec<C64>> {
    let nv = ops.space().vertex_count();
    let mut cands = Vec::with_capacity(2 * nv);
    for x in 0..nv {
        let mut a = ops.vertex_state(x);
        ops.local_diffusion(&mut a);
        let mut b = a.clone();
        ops.swap(&mut b);
        cands.push(a);
        cands.push(b);
    }
    let mut basis: Vec<Vec<C64>> = Vec::new();
    for mut c in cands {
        for _ in 0..2 {
            for q in &basis {
                let t = dot(q, &c);
                for (a, b) in c.iter_mut().zip(q) {
                    *a -= b * t;
                }
            }
        }
        let n = norm_sqr(&c).sqrt();
        if n > 1e-9 {
            c.iter_mut().for_each(|a| *a /= n);
            basis.push(c);
        }
    }
    basis
}

/// Eigenphase gap of `W` on the walked subspace with `|π⟩` removed, by dense
/// diagonalization of the Hermitian part of the compressed unitary.
pub fn eigenphase_gap_dense(ops: &dyn WalkOps) -> f64 {
    let basis = walked_subspace(ops);
    let k = basis.len();
    let images: Vec<Vec<C64>> = basis
        .iter()
        .map(|q| {
            let mut w = q.clone();
            apply_w(ops, &mut w);
            w
        })
        .collect();
    let mut h = DMatrix::<C64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let mij = dot(&basis[i], &images[j]);
            let mji = dot(&basis[j], &images[i]);
            h[(i, j)] += mij * 0.5;
            h[(i, j)] += mji.conj() * 0.5;
        }
    }
    let mut cosines: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    cosines.sort_by(|a, b| b.total_cmp(a));
    let next = cosines.get(1).copied().unwrap_or(-1.0).clamp(-1.0, 1.0);
    next.acos()
}

/// Eigenphase gap 2·arccos(max_{j≥1} |λ_j|) from the spectrum of the numerically
/// assembled overlap matrix K(x,y) = ⟨a_x| Swap |a_y⟩.
pub fn eigenphase_gap_overlap(ops: &dyn WalkOps) -> f64 {
    let nv = ops.space().vertex_count();
    let a: Vec<Vec<C64>> = (0..nv)
        .map(|x| {
            let mut v = ops.vertex_state(x);
            ops.local_diffusion(&mut v);
            v
        })
        .collect();
    let mut k = DMatrix::<C64>::zeros(nv, nv);
    for y in 0..nv {
        let mut b = a[y].clone();
        ops.swap(&mut b);
        // only blocks of x's outgoing edges matter; a full dot keeps this generic
        for x in 0..nv {
            k[(x, y)] = dot(&a[x], &b);
        }
    }
    let kh = (&k + k.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(kh).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    let second = ev.iter().skip(1).map(|l| l.abs()).fold(0.0, f64::max).min(1.0);
    2.0 * second.acos()
}
