use super::instance::Preprocessed;
use crate::combin::{binom_f64, colex_unrank};
use crate::hash_family::PolyHash;
use crate::history_set::{Classifier, HistoryFreeSet, Part};
use crate::ledger::CostLedger;
use crate::walk::Mode;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Give up after this many hash or setup resamples.
pub const RESAMPLE_CAP: u64 = 100_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SetupError {
    #[error("sequence length {0} is not a positive multiple of 3")]
    BadLength(usize),
    #[error("s1 = {s1}, s2 = {s2} do not fit a tripartition of {len} indices")]
    BadSizes { len: usize, s1: usize, s2: usize },
    #[error("only {available} collision pairs cross the first two parts; s2 = {s2} pairs are needed")]
    TooFewPairs { available: usize, s2: usize },
    #[error("no exact tripartition after {0} hash samples")]
    NoExactSplit(u64),
}

/// Threshold tripartition of 0-based positions, plus the displaced set `I₁`.
///
/// Before displacement the parts are `Ã₁ = {f ≤ t₁}`, `Ã₂ = {t₁ < f ≤ t₂}` and
/// `Ã₃ = {f > t₂}`; afterwards `A₁ = Ã₁ ∖ I₁`, `A₂ = Ã₂`, `A₃ = Ã₃ ∪ I₁`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tripartition {
    pub hash: PolyHash,
    pub len: usize,
    pub t1: u64,
    pub t2: u64,
    /// `I₁`, sorted.
    pub displaced: Vec<usize>,
    #[serde(skip)]
    flags: Vec<bool>,
}

impl Tripartition {
    /// Part of position `x` before displacement.
    pub fn initial_part(&self, x: usize) -> Part {
        let f = self.hash.eval_one_based(x as u64);
        if f <= self.t1 {
            Part::A1
        } else if f <= self.t2 {
            Part::A2
        } else {
            Part::A3
        }
    }

    pub fn part_of(&self, x: usize) -> Part {
        if self.flags.get(x).copied().unwrap_or(false) {
            Part::A3
        } else {
            self.initial_part(x)
        }
    }

    fn sizes_by(&self, f: impl Fn(usize) -> Part) -> [usize; 3] {
        let mut s = [0; 3];
        for x in 0..self.len {
            s[match f(x) {
                Part::A1 => 0,
                Part::A2 => 1,
                Part::A3 => 2,
            }] += 1;
        }
        s
    }

    pub fn initial_sizes(&self) -> [usize; 3] {
        self.sizes_by(|x| self.initial_part(x))
    }

    pub fn sizes(&self) -> [usize; 3] {
        self.sizes_by(|x| self.part_of(x))
    }

    pub fn members(&self, part: Part) -> Vec<usize> {
        (0..self.len).filter(|&x| self.part_of(x) == part).collect()
    }

    pub fn initial_members(&self, part: Part) -> Vec<usize> {
        (0..self.len).filter(|&x| self.initial_part(x) == part).collect()
    }

    /// Move `I₁` from the first part to the third.
    pub fn displace(&mut self, displaced: Vec<usize>) {
        let mut d = displaced;
        d.sort_unstable();
        self.flags = vec![false; self.len];
        for &x in &d {
            self.flags[x] = true;
        }
        self.displaced = d;
    }

    /// Rebuild the membership flags after deserialization.
    pub fn restore(&mut self) {
        let d = std::mem::take(&mut self.displaced);
        self.displace(d);
    }

    /// `Q(I₁)` as a unique-encoding set keyed by `key`.
    pub fn displaced_encoding(&self, pre: &Preprocessed, key: u64) -> HistoryFreeSet {
        let mut set = HistoryFreeSet::new(key);
        for &x in &self.displaced {
            set.insert(x as u64, pre.value(x)).expect("displaced positions are distinct");
        }
        set
    }

    /// Whether the 0-based triple has one position in each part (in some order).
    pub fn respects(&self, t: [usize; 3]) -> bool {
        let mut parts: Vec<u8> = t.iter().map(|&x| self.part_of(x) as u8).collect();
        parts.sort_unstable();
        parts == [0, 1, 2]
    }

    pub fn initially_respects(&self, t: [usize; 3]) -> bool {
        let mut parts: Vec<u8> = t.iter().map(|&x| self.initial_part(x) as u8).collect();
        parts.sort_unstable();
        parts == [0, 1, 2]
    }
}

impl Classifier for Tripartition {
    fn part(&self, index: u64) -> Part {
        self.part_of(index as usize)
    }
}

fn thresholds(len: usize, s1: usize, s2: usize) -> Result<(u64, u64), SetupError> {
    if len == 0 || !len.is_multiple_of(3) {
        return Err(SetupError::BadLength(len));
    }
    let third = len / 3;
    if s2 > s1 || s1 - s2 > third {
        return Err(SetupError::BadSizes { len, s1, s2 });
    }
    let t1 = (third + s1 - s2) as u64;
    Ok((t1, t1 + third as u64))
}

/// Threshold classification under `f`; `None` unless the classes have exactly the sizes
/// `len/3 + s₁ − s₂`, `len/3`, `len/3 − s₁ + s₂`.
pub fn tripartition_from_hash(f: PolyHash, len: usize, s1: usize, s2: usize) -> Result<Option<Tripartition>, SetupError> {
    let (t1, t2) = thresholds(len, s1, s2)?;
    let part = Tripartition { hash: f, len, t1, t2, displaced: Vec::new(), flags: vec![false; len] };
    let third = len / 3;
    let want = [third + s1 - s2, third, third + s2 - s1];
    Ok((part.initial_sizes() == want).then_some(part))
}

/// Sample a 3-wise independent hash until the threshold classes have the exact sizes.
/// Each rejected hash counts as a resample.
pub fn sample_tripartition<R: Rng + ?Sized>(
    len: usize,
    s1: usize,
    s2: usize,
    rng: &mut R,
    ledger: &mut CostLedger,
) -> Result<Tripartition, SetupError> {
    thresholds(len, s1, s2)?;
    for _ in 0..RESAMPLE_CAP {
        let f = PolyHash::sample_with(3, len as u64, len as u64, rng);
        if let Some(p) = tripartition_from_hash(f, len, s1, s2)? {
            return Ok(p);
        }
        ledger.resamples += 1;
    }
    Err(SetupError::NoExactSplit(RESAMPLE_CAP))
}

/// Pairwise-disjoint collision pairs `(a, b)` with `a` in the first part and `b` in the
/// second, sorted. When a 3-collision puts two positions on one side, only the smallest
/// pair is kept and the others are listed in `dropped`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionPairs {
    pub pairs: Vec<(usize, usize)>,
    pub dropped: Vec<(usize, usize)>,
}

impl CollisionPairs {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_disjoint(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.pairs.iter().all(|&(a, b)| seen.insert(a) && seen.insert(b))
    }

    /// Index of the pair whose first coordinate is `a`.
    pub fn by_first(&self) -> HashMap<usize, usize> {
        self.pairs.iter().enumerate().map(|(i, &(a, _))| (a, i)).collect()
    }

    /// Positions covered by the pairs of a pair-index mask.
    pub fn positions(&self, mask: u64) -> Vec<usize> {
        crate::combin::bits(mask).flat_map(|i| {
            let (a, b) = self.pairs[i as usize];
            [a, b]
        }).collect()
    }
}

pub fn cross_pairs(pre: &Preprocessed, part: impl Fn(usize) -> Part) -> CollisionPairs {
    let mut by_value: HashMap<u64, Vec<usize>> = HashMap::new();
    for x in 0..pre.len() {
        by_value.entry(pre.value(x)).or_default().push(x);
    }
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for positions in by_value.values() {
        for &a in positions {
            for &b in positions {
                if part(a) == Part::A1 && part(b) == Part::A2 {
                    candidates.push((a, b));
                }
            }
        }
    }
    candidates.sort_unstable();
    let mut used = std::collections::HashSet::new();
    let mut pairs = Vec::new();
    let mut dropped = Vec::new();
    for (a, b) in candidates {
        if used.contains(&a) || used.contains(&b) {
            dropped.push((a, b));
        } else {
            used.insert(a);
            used.insert(b);
            pairs.push((a, b));
        }
    }
    CollisionPairs { pairs, dropped }
}

/// Everything produced by the setup procedure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetupOutcome {
    /// Final partition (after moving `I₁`).
    pub partition: Tripartition,
    /// `P(Ã₁, Ã₂)` before displacement.
    pub initial_pairs: CollisionPairs,
    /// `P(A₁, A₂)`.
    pub pairs: CollisionPairs,
    /// Pair indices (into `pairs`) of the measured branch, ascending.
    pub measured: Vec<usize>,
    /// Size of `H(I)` on the accepted sample.
    pub h: usize,
    pub ledger: CostLedger,
    /// Concrete mode: post-measurement amplitudes over `s₂`-subsets of `pairs`, by colex rank.
    pub state: Option<Vec<f64>>,
}

/// Uniform random `k`-subset of `items`, sorted.
fn sample_subset<R: Rng + ?Sized>(items: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    let mut v: Vec<usize> = rand::seq::index::sample(rng, items.len(), k).into_iter().map(|i| items[i]).collect();
    v.sort_unstable();
    v
}

/// Run the setup procedure: choose `I ⊆ Ã₁` of size `s₁` uniformly (resampling while
/// `|H(I)| < max(s₂, ⌈εs₁⌉)` with `ε = ñ₂/(2N)`), find `s₂` members of `H(I)` by Grover
/// search, keep their pairs as `S₂`, and move the rest `I₁` of `I` to the third part.
///
/// Sampling `I` and then `J ⊆ H(I)` uniformly reproduces the exact distribution of the
/// measured `I₁` of the coherent procedure, because the branch `(I, J)` has amplitude
/// `1/√(C(|Ã₁|, s₁) C(|H(I)|, s₂))`.
pub fn setup_state<R: Rng + ?Sized>(
    pre: &Preprocessed,
    mut partition: Tripartition,
    s1: usize,
    s2: usize,
    rng: &mut R,
    mode: Mode,
) -> Result<SetupOutcome, SetupError> {
    let len = pre.len();
    let mut ledger = CostLedger::new();
    ledger.setups += 1;
    let initial_pairs = cross_pairs(pre, |x| partition.initial_part(x));
    if !initial_pairs.dropped.is_empty() {
        ledger.warn(format!("{} collision pair(s) sharing a position were dropped", initial_pairs.dropped.len()));
    }
    let partner = initial_pairs.by_first();
    let a1 = partition.initial_members(Part::A1);
    let a2_size = partition.initial_sizes()[1];
    let n2_tilde = initial_pairs.len();
    let eps = n2_tilde as f64 / (2.0 * len as f64);
    let threshold = s2.max((eps * s1 as f64).ceil() as usize);
    if s1.min(n2_tilde) < threshold {
        return Err(SetupError::TooFewPairs { available: n2_tilde, s2: threshold });
    }
    let mut attempts = 0u64;
    let (set_i, hits) = loop {
        attempts += 1;
        if attempts > RESAMPLE_CAP {
            return Err(SetupError::TooFewPairs { available: n2_tilde, s2: threshold });
        }
        let set_i = sample_subset(&a1, s1, rng);
        ledger.queries += s1 as u64;
        let hits: Vec<usize> = set_i.iter().copied().filter(|a| partner.contains_key(a)).collect();
        if hits.len() >= threshold {
            break (set_i, hits);
        }
        ledger.resamples += 1;
    };
    let h = hits.len();
    for r in 0..s2 {
        let grover = (std::f64::consts::FRAC_PI_4 * (a2_size as f64 / (h - r) as f64).sqrt()).ceil() as u64;
        ledger.queries += grover;
    }
    let chosen = sample_subset(&hits, s2, rng);
    let displaced: Vec<usize> = set_i.iter().copied().filter(|a| !chosen.contains(a)).collect();
    ledger.ds_ops += (s1 + s2) as u64;
    partition.displace(displaced);

    // P(A₁, A₂): the initial pairs whose first position stays in A₁
    let pairs = CollisionPairs {
        pairs: initial_pairs.pairs.iter().copied().filter(|(a, _)| partition.part_of(*a) == Part::A1).collect(),
        dropped: initial_pairs.dropped.clone(),
    };
    let measured: Vec<usize> = {
        let idx = pairs.by_first();
        let mut v: Vec<usize> = chosen.iter().map(|a| idx[a]).collect();
        v.sort_unstable();
        v
    };

    let state = match mode {
        Mode::Abstract => None,
        Mode::Concrete => Some(post_measurement_state(&partition, &initial_pairs, &pairs, a1.len(), s1, s2, threshold)),
    };
    Ok(SetupOutcome { partition, initial_pairs, pairs, measured, h, ledger, state })
}

/// Amplitudes of the branches consistent with the measured `I₁`, enumerated explicitly:
/// branch `S₂` has `I = I₁ ∪ first(S₂)` and amplitude `1/√(C(|Ã₁|, s₁) C(|H(I)|, s₂))`
/// when `|H(I)|` clears the threshold. Normalized.
fn post_measurement_state(
    partition: &Tripartition,
    initial: &CollisionPairs,
    pairs: &CollisionPairs,
    a1_size: usize,
    s1: usize,
    s2: usize,
    threshold: usize,
) -> Vec<f64> {
    let firsts: std::collections::HashSet<usize> = initial.pairs.iter().map(|p| p.0).collect();
    let base = partition.displaced.iter().filter(|a| firsts.contains(a)).count();
    let count = crate::combin::binom_u64(pairs.len() as u64, s2 as u64) as usize;
    let mut amps = Vec::with_capacity(count);
    for rank in 0..count {
        let mask = colex_unrank(rank as u64, s2 as u32);
        let h = base + crate::combin::bits(mask).filter(|&i| firsts.contains(&pairs.pairs[i as usize].0)).count();
        let a = if h >= threshold { 1.0 / (binom_f64(a1_size as u64, s1 as u64) * binom_f64(h as u64, s2 as u64)).sqrt() } else { 0.0 };
        amps.push(a);
    }
    let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        amps.iter_mut().for_each(|a| *a /= norm);
    }
    amps
}
