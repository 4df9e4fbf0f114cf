use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InstanceError {
    #[error("value {value} occurs {count} times; at most three occurrences are supported")]
    TooManyOccurrences { value: u64, count: usize },
    #[error("values {first} and {second} both form 3-collisions; at most one is supported")]
    SeveralTriples { first: u64, second: u64 },
    #[error("instance declares n = {declared} but carries {actual} values")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("planted triple {0:?} is not a 3-collision of the values")]
    BadPlanted([usize; 3]),
    #[error("value 0 is outside [q]; values are positive integers")]
    ZeroValue,
}

/// Input instance: `values[i-1] = χᵢ`, with an optional planted triple of 1-based indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub n: usize,
    pub values: Vec<u64>,
    pub planted: Option<[usize; 3]>,
}

impl Instance {
    pub fn new(values: Vec<u64>) -> Instance {
        Instance { n: values.len(), values, planted: None }
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.n != self.values.len() {
            return Err(InstanceError::LengthMismatch { declared: self.n, actual: self.values.len() });
        }
        if self.values.contains(&0) {
            return Err(InstanceError::ZeroValue);
        }
        if let Some(t) = self.planted {
            let ok = t.iter().all(|&i| i >= 1 && i <= self.n)
                && t[0] != t[1]
                && t[1] != t[2]
                && t[0] != t[2]
                && self.values[t[0] - 1] == self.values[t[1] - 1]
                && self.values[t[1] - 1] == self.values[t[2] - 1];
            if !ok {
                return Err(InstanceError::BadPlanted(t));
            }
        }
        check_collision_structure(&self.values)
    }
}

fn check_collision_structure(values: &[u64]) -> Result<(), InstanceError> {
    let mut counts: HashMap<u64, usize> = HashMap::new();
    for &v in values {
        *counts.entry(v).or_default() += 1;
    }
    let mut triples: Vec<u64> = Vec::new();
    let mut sorted: Vec<(u64, usize)> = counts.into_iter().collect();
    sorted.sort_unstable();
    for (value, count) in sorted {
        if count >= 4 {
            return Err(InstanceError::TooManyOccurrences { value, count });
        }
        if count == 3 {
            triples.push(value);
        }
    }
    if triples.len() > 1 {
        return Err(InstanceError::SeveralTriples { first: triples[0], second: triples[1] });
    }
    Ok(())
}

/// χ′ of length 3n: the original values followed by n values `q+i`, each occurring twice.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocessed {
    pub n: usize,
    pub q: u64,
    pub chi: Vec<u64>,
}

impl Preprocessed {
    pub fn len(&self) -> usize {
        self.chi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chi.is_empty()
    }

    /// Value at 0-based position `x`.
    pub fn value(&self, x: usize) -> u64 {
        self.chi[x]
    }
}

/// Append the padding pairs. Positions `n+i` and `2n+i` (1-based) both receive `q+i`,
/// where `q` is the largest input value.
pub fn preprocess(values: &[u64]) -> Result<Preprocessed, InstanceError> {
    if values.contains(&0) {
        return Err(InstanceError::ZeroValue);
    }
    check_collision_structure(values)?;
    let n = values.len();
    let q = values.iter().copied().max().unwrap_or(0);
    let mut chi = Vec::with_capacity(3 * n);
    chi.extend_from_slice(values);
    chi.extend((1..=n as u64).map(|i| q + i));
    chi.extend((1..=n as u64).map(|i| q + i));
    Ok(Preprocessed { n, q, chi })
}

/// Sort-based exact 3-collision finder. Returns the lexicographically smallest triple of
/// 1-based indices sharing a value.
pub fn oracle_solve(values: &[u64]) -> Option<(usize, usize, usize)> {
    let mut idx: Vec<(u64, usize)> = values.iter().enumerate().map(|(i, &v)| (v, i + 1)).collect();
    idx.sort_unstable();
    idx.chunk_by(|a, b| a.0 == b.0).filter(|run| run.len() >= 3).map(|run| (run[0].1, run[1].1, run[2].1)).min()
}

/// Whether the 1-based triple is a 3-collision of `values`.
pub fn is_triple(values: &[u64], t: (usize, usize, usize)) -> bool {
    let (i, j, k) = t;
    let n = values.len();
    i != j && j != k && i != k && [i, j, k].iter().all(|&x| (1..=n).contains(&x)) && values[i - 1] == values[j - 1] && values[j - 1] == values[k - 1]
}

/// Generator spec for random instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub planted: bool,
    /// Number of extra 2-collisions among the original values.
    pub extra_pairs: usize,
    /// Values are drawn from `[value_range]`; zero means `4n`.
    pub value_range: u64,
}

impl GeneratorSpec {
    pub fn planted(n: usize) -> GeneratorSpec {
        GeneratorSpec { n, planted: true, extra_pairs: 0, value_range: 0 }
    }

    pub fn distinct(n: usize) -> GeneratorSpec {
        GeneratorSpec { n, planted: false, extra_pairs: 0, value_range: 0 }
    }
}

/// Distinct values with an optional planted triple and a number of planted pairs.
pub fn generate(spec: GeneratorSpec, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n;
    let need_triple = spec.planted && n >= 3;
    let extra = spec.extra_pairs.min((n - if need_triple { 3 } else { 0 }) / 2);
    let distinct_needed = n - if need_triple { 2 } else { 0 } - extra;
    let range = if spec.value_range == 0 { 4 * n as u64 } else { spec.value_range }.max(distinct_needed as u64);
    let pool: Vec<u64> = rand::seq::index::sample(&mut rng, range as usize, distinct_needed).into_iter().map(|v| v as u64 + 1).collect();
    let mut positions: Vec<usize> = (0..n).collect();
    positions.shuffle(&mut rng);
    let mut values = vec![0u64; n];
    let mut next = pool.into_iter();
    let mut cursor = 0;
    let mut planted = None;
    if need_triple {
        let v = next.next().expect("pool holds a value for the triple");
        let mut t = [positions[0] + 1, positions[1] + 1, positions[2] + 1];
        t.sort_unstable();
        for &p in &positions[..3] {
            values[p] = v;
        }
        planted = Some(t);
        cursor = 3;
    }
    for _ in 0..extra {
        let v = next.next().expect("pool holds a value for every pair");
        values[positions[cursor]] = v;
        values[positions[cursor + 1]] = v;
        cursor += 2;
    }
    for &p in &positions[cursor..] {
        values[p] = next.next().expect("pool holds a value for every singleton");
    }
    Instance { n, values, planted }
}
