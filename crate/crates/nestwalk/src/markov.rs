//! Enumerated reversible Markov chains, generalized Johnson graphs, spectral gaps and the
//! classical walk-search baseline.

use crate::combin::{binom, binom_u64, colex_rank, colex_unrank, Region};
use crate::ledger::CostLedger;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest chain handed to the dense eigensolver.
pub const DENSE_CAP: usize = 5000;
/// Largest number of directed edges a chain may have.
pub const EDGE_CAP: usize = 20_000_000;

const TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("invalid Johnson parameters J({n},{r},{m}): need 1 <= m <= min(r, n-r) and n <= 64")]
    BadJohnson { n: u32, r: u32, m: u32 },
    #[error("chain with {vertices} vertices and {edges} edges exceeds the simulation cap")]
    TooBig { vertices: u128, edges: u128 },
    #[error("chain with {0} vertices is too large for dense solve (cap {DENSE_CAP})")]
    TooLargeForDense(usize),
    #[error("row {row} sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },
    #[error("detailed balance fails between {x} and {y}")]
    NotReversible { x: usize, y: usize },
    #[error("chain graph is disconnected")]
    Disconnected,
    #[error("chain is periodic (bipartite transition graph)")]
    Periodic,
    #[error("empty chain")]
    Empty,
}

/// Serializable description of where a chain came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChainSpec {
    Johnson { n: u32, r: u32, m: u32 },
    Explicit { vertices: usize },
}

#[derive(Clone, Debug)]
pub struct MarkovChain {
    spec: ChainSpec,
    labels: Vec<u64>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    probs: Vec<f64>,
    stationary: Vec<f64>,
    uniform_rows: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub gap: f64,
    pub second_eigenvalue_magnitude: f64,
    /// Eigenvalues in decreasing order.
    pub eigenvalues: Vec<f64>,
}

/// Generalized Johnson graph J(n, r, m): r-subsets of [n], adjacent when they share
/// r − m elements, with uniform transitions.
pub fn johnson_chain(n: u32, r: u32, m: u32) -> Result<MarkovChain, ChainError> {
    if n > 64 || m < 1 || m > r || m > n.saturating_sub(r) {
        return Err(ChainError::BadJohnson { n, r, m });
    }
    let vertices = binom(n as u64, r as u64);
    let degree = binom(r as u64, m as u64) * binom((n - r) as u64, m as u64);
    let edges = vertices.saturating_mul(degree);
    if edges > EDGE_CAP as u128 || vertices > u32::MAX as u128 {
        return Err(ChainError::TooBig { vertices, edges });
    }
    let nv = vertices as usize;
    let deg = degree as usize;
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut labels = Vec::with_capacity(nv);
    let mut targets = Vec::with_capacity(nv * deg);
    for rank in 0..nv {
        let x = colex_unrank(rank as u64, r);
        labels.push(x);
        let inside = Region::new(x);
        let outside = Region::new(full & !x);
        for out in inside.subsets(m) {
            for inn in outside.subsets(m) {
                targets.push(colex_rank(x ^ out ^ inn) as u32);
            }
        }
    }
    let offsets = (0..=nv).map(|i| i * deg).collect();
    let chain = MarkovChain {
        spec: ChainSpec::Johnson { n, r, m },
        labels,
        offsets,
        targets,
        probs: vec![1.0 / deg as f64; nv * deg],
        stationary: vec![1.0 / nv as f64; nv],
        uniform_rows: true,
    };
    chain.check_ergodic()?;
    Ok(chain)
}

impl MarkovChain {
    /// Reversible chain from a symmetric nonnegative weight matrix:
    /// P(x,y) = w(x,y) / Σ_z w(x,z), stationary distribution ∝ row sums.
    pub fn from_weights(weights: &DMatrix<f64>) -> Result<MarkovChain, ChainError> {
        let nv = weights.nrows();
        if nv == 0 {
            return Err(ChainError::Empty);
        }
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        let mut probs = Vec::new();
        let mut rows = Vec::with_capacity(nv);
        for x in 0..nv {
            let row_sum: f64 = (0..nv).map(|y| weights[(x, y)]).sum();
            rows.push(row_sum);
            for y in 0..nv {
                if weights[(x, y)] > 0.0 {
                    targets.push(y as u32);
                    probs.push(weights[(x, y)] / row_sum);
                }
            }
            offsets.push(targets.len());
        }
        let total: f64 = rows.iter().sum();
        let chain = MarkovChain {
            spec: ChainSpec::Explicit { vertices: nv },
            labels: (0..nv as u64).collect(),
            offsets,
            targets,
            probs,
            stationary: rows.iter().map(|r| r / total).collect(),
            uniform_rows: false,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// Canonical label of vertex `x` (a subset mask for Johnson chains).
    pub fn label(&self, x: usize) -> u64 {
        self.labels[x]
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    /// Vertex index of a label, if it is one.
    pub fn index_of(&self, label: u64) -> Option<usize> {
        match self.spec {
            ChainSpec::Johnson { n, r, .. } => {
                if label.count_ones() != r || (n < 64 && label >> n != 0) {
                    return None;
                }
                Some(colex_rank(label) as usize)
            }
            ChainSpec::Explicit { vertices } => ((label as usize) < vertices).then_some(label as usize),
        }
    }

    /// `(neighbor, probability)` pairs of vertex `x`, in a fixed order.
    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[x]..self.offsets[x + 1];
        self.targets[range.clone()].iter().zip(&self.probs[range]).map(|(&y, &p)| (y as usize, p))
    }

    pub fn degree(&self, x: usize) -> usize {
        self.offsets[x + 1] - self.offsets[x]
    }

    /// Position of the edge (x, y) in the global edge numbering.
    pub fn edge_offset(&self, x: usize) -> usize {
        self.offsets[x]
    }

    pub fn edge_targets(&self) -> &[u32] {
        &self.targets
    }

    pub fn edge_probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn transition(&self, x: usize, y: usize) -> f64 {
        self.neighbors(x).find(|&(z, _)| z == y).map_or(0.0, |(_, p)| p)
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Row sums, detailed balance, stationarity and ergodicity.
    pub fn validate(&self) -> Result<(), ChainError> {
        for x in 0..self.vertex_count() {
            let sum: f64 = self.neighbors(x).map(|(_, p)| p).sum();
            if (sum - 1.0).abs() > TOL {
                return Err(ChainError::NotStochastic { row: x, sum });
            }
            for (y, p) in self.neighbors(x) {
                let back = self.transition(y, x);
                if (self.stationary[x] * p - self.stationary[y] * back).abs() > TOL {
                    return Err(ChainError::NotReversible { x, y });
                }
            }
        }
        self.check_ergodic()
    }

    /// Connected and aperiodic. For a reversible chain the transition graph is
    /// undirected, so aperiodicity is equivalent to not being bipartite.
    pub fn check_ergodic(&self) -> Result<(), ChainError> {
        let nv = self.vertex_count();
        if nv == 0 {
            return Err(ChainError::Empty);
        }
        let mut color = vec![u8::MAX; nv];
        let mut stack = vec![0usize];
        color[0] = 0;
        let mut seen = 1;
        let mut bipartite = true;
        while let Some(x) = stack.pop() {
            for (y, _) in self.neighbors(x) {
                if color[y] == u8::MAX {
                    color[y] = 1 - color[x];
                    seen += 1;
                    stack.push(y);
                } else if color[y] == color[x] {
                    bipartite = false;
                }
            }
        }
        if seen != nv {
            return Err(ChainError::Disconnected);
        }
        if bipartite && nv > 1 {
            return Err(ChainError::Periodic);
        }
        Ok(())
    }

    /// ‖πP − π‖∞.
    pub fn stationarity_residual(&self) -> f64 {
        let mut next = vec![0.0; self.vertex_count()];
        for x in 0..self.vertex_count() {
            for (y, p) in self.neighbors(x) {
                next[y] += self.stationary[x] * p;
            }
        }
        next.iter().zip(&self.stationary).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Symmetrized transition matrix D = diag(√π) P diag(√π)⁻¹ (the discriminant).
    pub fn discriminant(&self) -> Result<DMatrix<f64>, ChainError> {
        let nv = self.vertex_count();
        if nv > DENSE_CAP {
            return Err(ChainError::TooLargeForDense(nv));
        }
        let mut d = DMatrix::zeros(nv, nv);
        for x in 0..nv {
            for (y, p) in self.neighbors(x) {
                d[(x, y)] += (self.stationary[x] / self.stationary[y]).sqrt() * p;
            }
        }
        Ok(d)
    }

    /// Spectral gap 1 − max{|λ| : λ ≠ 1} by dense symmetric eigensolve.
    pub fn spectral_gap(&self) -> Result<SpectralReport, ChainError> {
        let d = self.discriminant()?;
        let mut eig: Vec<f64> = SymmetricEigen::new(d).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        Ok(report_from_sorted(eig))
    }

    /// Gap from the closed-form Johnson spectrum when available, otherwise dense.
    pub fn gap(&self) -> Result<f64, ChainError> {
        match self.spec {
            ChainSpec::Johnson { n, r, m } => Ok(johnson_spectrum(n, r, m).gap),
            ChainSpec::Explicit { .. } => self.spectral_gap().map(|s| s.gap),
        }
    }

    /// Draw a vertex from π.
    pub fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.uniform_rows && matches!(self.spec, ChainSpec::Johnson { .. }) {
            return rng.random_range(0..self.vertex_count());
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (x, &p) in self.stationary.iter().enumerate() {
            acc += p;
            if u < acc {
                return x;
            }
        }
        self.vertex_count() - 1
    }

    /// One step of the chain from `x`.
    pub fn step<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let range = self.offsets[x]..self.offsets[x + 1];
        if self.uniform_rows {
            return self.targets[rng.random_range(range)] as usize;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (y, p) in self.neighbors(x) {
            acc += p;
            if u < acc {
                return y;
            }
        }
        self.targets[range.end - 1] as usize
    }
}

fn report_from_sorted(eig: Vec<f64>) -> SpectralReport {
    // drop the single largest eigenvalue (the stationary one)
    let second = eig.iter().skip(1).map(|l| l.abs()).fold(0.0, f64::max);
    SpectralReport { gap: 1.0 - second, second_eigenvalue_magnitude: second, eigenvalues: eig }
}

/// Distinct eigenvalues of J(n, r, m) with multiplicities, from the Eberlein polynomials.
#[derive(Clone, Debug, PartialEq)]
pub struct JohnsonSpectrum {
    /// `(eigenvalue, multiplicity)` for j = 0..=min(r, n−r).
    pub levels: Vec<(f64, u128)>,
    pub gap: f64,
}

pub fn johnson_spectrum(n: u32, r: u32, m: u32) -> JohnsonSpectrum {
    let (n, r, m) = (n as i128, r as i128, m as i128);
    let c = |a: i128, b: i128| -> i128 {
        if a < 0 || b < 0 || b > a {
            0
        } else {
            binom(a as u64, b as u64) as i128
        }
    };
    let degree = c(r, m) * c(n - r, m);
    let top = r.min(n - r);
    let mut levels = Vec::new();
    for j in 0..=top {
        let mut e = 0i128;
        for t in 0..=m {
            let term = c(j, t) * c(r - j, m - t) * c(n - r - j, m - t);
            e += if t % 2 == 0 { term } else { -term };
        }
        let mult = (c(n, j) - c(n, j - 1)) as u128;
        levels.push((e as f64 / degree as f64, mult));
    }
    let second = levels.iter().skip(1).map(|(l, _)| l.abs()).fold(0.0, f64::max);
    JohnsonSpectrum { levels, gap: 1.0 - second }
}

/// Constants of the classical search loop: ⌈rounds/ε⌉ rounds of ⌈steps/δ⌉ steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicalConstants {
    pub rounds: f64,
    pub steps: f64,
}

impl Default for ClassicalConstants {
    fn default() -> Self {
        ClassicalConstants { rounds: 3.0, steps: 3.0 }
    }
}

/// Sample from π, then alternate checking and mixing.
pub fn classical_walk_search<F: Fn(usize) -> bool>(
    chain: &MarkovChain,
    marked: F,
    eps: f64,
    seed: u64,
) -> Result<(Option<usize>, CostLedger), ChainError> {
    classical_walk_search_with(chain, marked, eps, ClassicalConstants::default(), seed)
}

pub fn classical_walk_search_with<F: Fn(usize) -> bool>(
    chain: &MarkovChain,
    marked: F,
    eps: f64,
    consts: ClassicalConstants,
    seed: u64,
) -> Result<(Option<usize>, CostLedger), ChainError> {
    assert!(eps > 0.0, "eps must be positive");
    let delta = chain.gap()?;
    let rounds = (consts.rounds / eps).ceil() as u64;
    let steps = (consts.steps / delta).ceil() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = CostLedger::new();
    ledger.setups += 1;
    let mut x = chain.sample_stationary(&mut rng);
    for _ in 0..rounds {
        ledger.checks += 1;
        if marked(x) {
            return Ok((Some(x), ledger));
        }
        for _ in 0..steps {
            x = chain.step(x, &mut rng);
        }
        ledger.walk_steps += steps;
    }
    Ok((None, ledger))
}

/// Degree C(r, m)·C(n − r, m) of J(n, r, m).
pub fn johnson_degree(n: u32, r: u32, m: u32) -> u64 {
    binom_u64(r as u64, m as u64) * binom_u64((n - r) as u64, m as u64)
}
