//! Unique-encoding set of `(index, value)` items, plus the composite edge encoding used by
//! the 3-Distinctness walk.
//!
//! The set is a skip list ordered by `(value, index)`. Each item's tower height is the
//! number of trailing zero bits of a keyed 64-bit mix of the item, so the whole shape of
//! the list (and therefore its serialization) is a function of the item set alone.

use crate::ledger::CostLedger;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const NIL: u32 = u32::MAX;
const MAX_LEVEL: usize = 32;
const MAGIC: &[u8; 3] = b"HFS";
const VERSION: u8 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SetError {
    #[error("item (z={z}, value={chi}) is already present")]
    Duplicate { z: u64, chi: u64 },
    #[error("item (z={z}, value={chi}) is not present")]
    Missing { z: u64, chi: u64 },
    #[error("set is empty")]
    Empty,
    #[error("malformed serialization: {0}")]
    Malformed(&'static str),
}

/// An item: index `z` carrying value `chi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Item {
    pub z: u64,
    pub chi: u64,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Tower height minus one for an item under `key`.
pub fn item_level(key: u64, z: u64, chi: u64) -> u8 {
    let h = splitmix(splitmix(key ^ z) ^ chi.rotate_left(32));
    (h.trailing_zeros() as usize).min(MAX_LEVEL - 1) as u8
}

#[derive(Clone, Debug)]
struct Node {
    item: Item,
    next: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct HistoryFreeSet {
    key: u64,
    nodes: Vec<Node>,
    free: Vec<u32>,
    len: usize,
    last_touched: u64,
    total_touched: u64,
}

impl HistoryFreeSet {
    pub fn new(key: u64) -> Self {
        let head = Node { item: Item { z: 0, chi: 0 }, next: vec![NIL; MAX_LEVEL] };
        HistoryFreeSet { key, nodes: vec![head], free: Vec::new(), len: 0, last_touched: 0, total_touched: 0 }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Nodes visited by the most recent operation.
    pub fn last_touched(&self) -> u64 {
        self.last_touched
    }

    pub fn total_touched(&self) -> u64 {
        self.total_touched
    }

    fn order(item: &Item) -> (u64, u64) {
        (item.chi, item.z)
    }

    /// Predecessor node at every level for the position of `target`.
    fn predecessors(&mut self, target: (u64, u64)) -> [u32; MAX_LEVEL] {
        let mut preds = [0u32; MAX_LEVEL];
        let mut cur = 0u32;
        let mut touched = 0u64;
        for lvl in (0..MAX_LEVEL).rev() {
            loop {
                let nxt = self.nodes[cur as usize].next[lvl];
                if nxt == NIL || Self::order(&self.nodes[nxt as usize].item) >= target {
                    break;
                }
                cur = nxt;
                touched += 1;
            }
            preds[lvl] = cur;
        }
        self.last_touched = touched + 1;
        self.total_touched += touched + 1;
        preds
    }

    pub fn contains(&mut self, z: u64, chi: u64) -> bool {
        let preds = self.predecessors((chi, z));
        let nxt = self.nodes[preds[0] as usize].next[0];
        nxt != NIL && self.nodes[nxt as usize].item == Item { z, chi }
    }

    pub fn insert(&mut self, z: u64, chi: u64) -> Result<(), SetError> {
        let preds = self.predecessors((chi, z));
        let nxt = self.nodes[preds[0] as usize].next[0];
        if nxt != NIL && self.nodes[nxt as usize].item == (Item { z, chi }) {
            return Err(SetError::Duplicate { z, chi });
        }
        let height = item_level(self.key, z, chi) as usize + 1;
        let node = Node { item: Item { z, chi }, next: vec![NIL; height] };
        let idx = match self.free.pop() {
            Some(i) => {
                self.nodes[i as usize] = node;
                i
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        };
        for (lvl, &p) in preds.iter().enumerate().take(height) {
            self.nodes[idx as usize].next[lvl] = self.nodes[p as usize].next[lvl];
            self.nodes[p as usize].next[lvl] = idx;
        }
        self.len += 1;
        Ok(())
    }

    pub fn delete(&mut self, z: u64, chi: u64) -> Result<(), SetError> {
        let preds = self.predecessors((chi, z));
        let idx = self.nodes[preds[0] as usize].next[0];
        if idx == NIL || self.nodes[idx as usize].item != (Item { z, chi }) {
            return Err(SetError::Missing { z, chi });
        }
        let height = self.nodes[idx as usize].next.len();
        for (lvl, &p) in preds.iter().enumerate().take(height) {
            self.nodes[p as usize].next[lvl] = self.nodes[idx as usize].next[lvl];
        }
        self.nodes[idx as usize].next.clear();
        self.free.push(idx);
        self.len -= 1;
        Ok(())
    }

    /// All items with value `chi`, ordered by index.
    pub fn lookup_by_value(&mut self, chi: u64) -> Vec<Item> {
        let preds = self.predecessors((chi, 0));
        let mut out = Vec::new();
        let mut cur = self.nodes[preds[0] as usize].next[0];
        while cur != NIL && self.nodes[cur as usize].item.chi == chi {
            out.push(self.nodes[cur as usize].item);
            cur = self.nodes[cur as usize].next[0];
            self.last_touched += 1;
            self.total_touched += 1;
        }
        out
    }

    /// Items in `(value, index)` order.
    pub fn items(&self) -> Vec<Item> {
        let mut out = Vec::with_capacity(self.len);
        let mut cur = self.nodes[0].next[0];
        while cur != NIL {
            out.push(self.nodes[cur as usize].item);
            cur = self.nodes[cur as usize].next[0];
        }
        out
    }

    /// Pick an item uniformly at random from the seed stream; charges one data-structure op.
    pub fn enumerate_uniform(&self, seed: u64) -> Result<(Item, CostLedger), SetError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.enumerate_uniform_with(&mut rng)
    }

    pub fn enumerate_uniform_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Item, CostLedger), SetError> {
        if self.len == 0 {
            return Err(SetError::Empty);
        }
        let target = rng.random_range(0..self.len);
        let mut cur = self.nodes[0].next[0];
        for _ in 0..target {
            cur = self.nodes[cur as usize].next[0];
        }
        let ledger = CostLedger { ds_ops: 1, ..CostLedger::default() };
        Ok((self.nodes[cur as usize].item, ledger))
    }

    /// Canonical byte encoding: magic, version, key, count, then `(z, value, level)` per
    /// item in `(value, index)` order, all integers little-endian.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 17 * self.len);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.key.to_le_bytes());
        out.extend_from_slice(&(self.len as u64).to_le_bytes());
        let mut cur = self.nodes[0].next[0];
        while cur != NIL {
            let node = &self.nodes[cur as usize];
            out.extend_from_slice(&node.item.z.to_le_bytes());
            out.extend_from_slice(&node.item.chi.to_le_bytes());
            out.push((node.next.len() - 1) as u8);
            cur = node.next[0];
        }
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, SetError> {
        let word = |at: usize| -> Result<u64, SetError> {
            bytes
                .get(at..at + 8)
                .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
                .ok_or(SetError::Malformed("truncated"))
        };
        if bytes.len() < 20 || &bytes[0..3] != MAGIC {
            return Err(SetError::Malformed("bad header"));
        }
        if bytes[3] != VERSION {
            return Err(SetError::Malformed("unknown version"));
        }
        let key = word(4)?;
        let count = word(12)? as usize;
        if bytes.len() != 20 + 17 * count {
            return Err(SetError::Malformed("length mismatch"));
        }
        let mut set = HistoryFreeSet::new(key);
        let mut prev: Option<(u64, u64)> = None;
        for i in 0..count {
            let at = 20 + 17 * i;
            let (z, chi) = (word(at)?, word(at + 8)?);
            if bytes[at + 16] != item_level(key, z, chi) {
                return Err(SetError::Malformed("level annotation disagrees with key"));
            }
            if prev.is_some_and(|p| p >= (chi, z)) {
                return Err(SetError::Malformed("items out of order"));
            }
            prev = Some((chi, z));
            set.insert(z, chi).map_err(|_| SetError::Malformed("duplicate item"))?;
        }
        Ok(set)
    }
}

impl PartialEq for HistoryFreeSet {
    fn eq(&self, other: &Self) -> bool {
        self.serialize() == other.serialize()
    }
}

/// Which third of the tripartition an index belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Part {
    A1,
    A2,
    A3,
}

pub trait Classifier {
    fn part(&self, index: u64) -> Part;
}

impl<F: Fn(u64) -> Part> Classifier for F {
    fn part(&self, index: u64) -> Part {
        self(index)
    }
}

/// Pack an oriented pair `(i, j)` into one index word.
pub fn pair_key(i: u64, j: u64) -> u64 {
    (i << 32) | j
}

pub fn unpack_pair(key: u64) -> (u64, u64) {
    (key >> 32, key & 0xffff_ffff)
}

/// Encoding of an outer edge together with an inner vertex:
/// `Q(S₂)`, the two difference tables, `Q(S₁)` and the collision sub-table `Q(P(S₁))`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeEncoding {
    pub s2: HistoryFreeSet,
    /// `Q(S₂ ∖ S₂′)`
    pub s2_out: HistoryFreeSet,
    /// `Q(S₂′ ∖ S₂)`
    pub s2_in: HistoryFreeSet,
    pub s1: HistoryFreeSet,
    pub pairs: HistoryFreeSet,
    pub pair_count: u64,
}

/// Decoded contents of an [`EdgeEncoding`]: sorted pair lists and the sorted inner set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedEdge {
    pub s2: Vec<(u64, u64)>,
    pub s2_prime: Vec<(u64, u64)>,
    pub s1: Vec<u64>,
}

impl EdgeEncoding {
    pub fn new(key: u64) -> Self {
        EdgeEncoding {
            s2: HistoryFreeSet::new(key),
            s2_out: HistoryFreeSet::new(key),
            s2_in: HistoryFreeSet::new(key),
            s1: HistoryFreeSet::new(key),
            pairs: HistoryFreeSet::new(key),
            pair_count: 0,
        }
    }

    fn cross_pair<C: Classifier + ?Sized>(cls: &C, a: u64, b: u64) -> Option<(u64, u64)> {
        match (cls.part(a), cls.part(b)) {
            (Part::A1, Part::A2) => Some((a, b)),
            (Part::A2, Part::A1) => Some((b, a)),
            _ => None,
        }
    }

    /// Insert `i` into `S₁`, recording any new cross-partition collision. Returns the
    /// number of skip-list operations performed.
    pub fn collision_aware_insert<C: Classifier + ?Sized>(&mut self, i: u64, chi: u64, cls: &C) -> Result<u64, SetError> {
        if self.s1.contains(i, chi) {
            return Err(SetError::Duplicate { z: i, chi });
        }
        let mut ops = 2;
        for partner in self.s1.lookup_by_value(chi) {
            if let Some((a, b)) = Self::cross_pair(cls, i, partner.z) {
                self.pairs.insert(pair_key(a, b), chi)?;
                self.pair_count += 1;
                ops += 1;
            }
        }
        self.s1.insert(i, chi)?;
        Ok(ops + 1)
    }

    /// Exact inverse of [`collision_aware_insert`](Self::collision_aware_insert).
    pub fn collision_aware_delete<C: Classifier + ?Sized>(&mut self, i: u64, chi: u64, cls: &C) -> Result<u64, SetError> {
        self.s1.delete(i, chi)?;
        let mut ops = 2;
        for partner in self.s1.lookup_by_value(chi) {
            if let Some((a, b)) = Self::cross_pair(cls, i, partner.z) {
                self.pairs.delete(pair_key(a, b), chi)?;
                self.pair_count -= 1;
                ops += 1;
            }
        }
        Ok(ops)
    }

    /// Exchange the roles of `S₂` and `S₂′`: m insertions and m deletions on `Q(S₂)` and a
    /// swap of the difference tables. Returns the number of skip-list operations.
    pub fn swap_outer(&mut self) -> Result<u64, SetError> {
        let outgoing = self.s2_out.items();
        let incoming = self.s2_in.items();
        for it in &outgoing {
            self.s2.delete(it.z, it.chi)?;
        }
        for it in &incoming {
            self.s2.insert(it.z, it.chi)?;
        }
        std::mem::swap(&mut self.s2_out, &mut self.s2_in);
        Ok((outgoing.len() + incoming.len()) as u64)
    }

    pub fn decode(&self) -> DecodedEdge {
        let pairs_of = |set: &HistoryFreeSet| {
            let mut v: Vec<(u64, u64)> = set.items().iter().map(|it| unpack_pair(it.z)).collect();
            v.sort_unstable();
            v
        };
        let s2 = pairs_of(&self.s2);
        let out = pairs_of(&self.s2_out);
        let inc = pairs_of(&self.s2_in);
        let mut s2_prime: Vec<(u64, u64)> = s2.iter().copied().filter(|p| !out.contains(p)).chain(inc).collect();
        s2_prime.sort_unstable();
        let mut s1: Vec<u64> = self.s1.items().iter().map(|it| it.z).collect();
        s1.sort_unstable();
        DecodedEdge { s2, s2_prime, s1 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_delete_restores_bytes() {
        let mut s = HistoryFreeSet::new(7);
        for (z, c) in [(1, 4), (2, 4), (9, 1)] {
            s.insert(z, c).unwrap();
        }
        let before = s.serialize();
        s.insert(5, 5).unwrap();
        s.delete(5, 5).unwrap();
        assert_eq!(s.serialize(), before);
        assert_eq!(s.insert(1, 4), Err(SetError::Duplicate { z: 1, chi: 4 }));
        assert_eq!(s.delete(3, 3), Err(SetError::Missing { z: 3, chi: 3 }));
    }

    #[test]
    fn lookup_orders_by_index() {
        let mut s = HistoryFreeSet::new(1);
        s.insert(9, 7).unwrap();
        s.insert(3, 7).unwrap();
        s.insert(4, 8).unwrap();
        let found: Vec<u64> = s.lookup_by_value(7).iter().map(|i| i.z).collect();
        assert_eq!(found, vec![3, 9]);
        assert!(s.lookup_by_value(2).is_empty());
    }

    #[test]
    fn serialization_round_trip() {
        let mut s = HistoryFreeSet::new(42);
        for z in 0..50u64 {
            s.insert(z, z % 7).unwrap();
        }
        let bytes = s.serialize();
        let back = HistoryFreeSet::deserialize(&bytes).unwrap();
        assert_eq!(back.serialize(), bytes);
    }
}
