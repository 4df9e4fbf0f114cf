//! k-wise independent hash functions from random polynomials over a prime field.
//!
//! A [`PolyHash`] holds a short chain of independent degree-(k−1) polynomials. A point is
//! hashed by the first polynomial in the chain whose value lands below the largest
//! multiple of the range size, which removes the modular bias exactly; if every
//! polynomial in the chain rejects, the last value is reduced anyway. The chain length is
//! chosen so that this fallback has probability at most 2⁻²⁰.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Upper bound on the per-point statistical distance from uniform.
pub const REJECTION_BUDGET: f64 = 1.0 / (1u64 << 20) as f64;

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `>= n`.
pub fn next_prime(n: u64) -> u64 {
    let mut c = n.max(2);
    while !is_prime(c) {
        c += 1;
    }
    c
}

/// Evaluate a polynomial with coefficients `coeffs` (constant term first) at `x` mod `p`.
pub fn poly_eval(coeffs: &[u64], x: u64, p: u64) -> u64 {
    let x = x % p;
    coeffs
        .iter()
        .rev()
        .fold(0u64, |acc, &c| (mul_mod(acc, x, p) + c) % p)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyHash {
    pub k: usize,
    pub domain: u64,
    pub range: u64,
    pub prime: u64,
    /// Independent coefficient vectors, each of length `k`.
    pub chain: Vec<Vec<u64>>,
}

impl PolyHash {
    /// Number of chained polynomials needed so that `r^T <= 2^-20`, where `r` is the
    /// rejection probability of a single evaluation.
    pub fn chain_length(prime: u64, range: u64) -> usize {
        let accept = range * (prime / range);
        if accept == prime {
            return 1;
        }
        let r = (prime - accept) as f64 / prime as f64;
        (REJECTION_BUDGET.ln() / r.ln()).ceil().max(1.0) as usize
    }

    /// Draw a member of the family for `k`-wise independence on `[domain] -> [range]`.
    pub fn sample(k: usize, domain: u64, range: u64, seed: u64) -> PolyHash {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::sample_with(k, domain, range, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(k: usize, domain: u64, range: u64, rng: &mut R) -> PolyHash {
        assert!(k >= 1, "k must be positive");
        assert!(range >= 1, "empty range");
        let prime = next_prime(domain.max(range));
        let t = Self::chain_length(prime, range);
        let chain = (0..t)
            .map(|_| (0..k).map(|_| rng.random_range(0..prime)).collect())
            .collect();
        PolyHash { k, domain, range, prime, chain }
    }

    /// Build from explicit coefficients (single polynomial, no rejection chain).
    pub fn from_coefficients(coeffs: Vec<u64>, domain: u64, range: u64) -> PolyHash {
        let prime = next_prime(domain.max(range));
        PolyHash {
            k: coeffs.len(),
            domain,
            range,
            prime,
            chain: vec![coeffs.into_iter().map(|c| c % prime).collect()],
        }
    }

    /// Hash value in `0..range`.
    pub fn eval(&self, x: u64) -> u64 {
        let accept = self.range * (self.prime / self.range);
        let mut last = 0;
        for coeffs in &self.chain {
            last = poly_eval(coeffs, x, self.prime);
            if last < accept {
                return last % self.range;
            }
        }
        last % self.range
    }

    /// Hash value in `1..=range`, the convention used for tripartition thresholds.
    pub fn eval_one_based(&self, x: u64) -> u64 {
        self.eval(x) + 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KwiseReport {
    pub k: usize,
    pub prime: u64,
    /// Number of coefficients per enumerated polynomial.
    pub coefficients: usize,
    pub polynomials: u64,
    pub tuples_checked: u64,
    /// Largest |count·p^k − total| over all value tuples, in units of 1/p^k.
    pub max_scaled_deviation: u64,
    pub pass: bool,
}

/// Exhaustively check that polynomials with `coefficients` coefficients over GF(p)
/// induce the uniform distribution on every sorted tuple of `k` distinct points.
pub fn verify_family(coefficients: usize, k: usize, p: u64) -> KwiseReport {
    assert!(is_prime(p), "p must be prime");
    assert!(k >= 1 && (k as u64) <= p);
    let polys = p.pow(coefficients as u32);
    let cells = p.pow(k as u32) as usize;
    let mut counts = vec![0u64; cells];
    let mut coeffs = vec![0u64; coefficients];
    let mut points: Vec<u64> = (0..k as u64).collect();
    let mut tuples = 0u64;
    let mut worst = 0u64;
    loop {
        counts.iter_mut().for_each(|c| *c = 0);
        for code in 0..polys {
            let mut rest = code;
            for c in coeffs.iter_mut() {
                *c = rest % p;
                rest /= p;
            }
            let cell = points
                .iter()
                .fold(0usize, |acc, &x| acc * p as usize + poly_eval(&coeffs, x, p) as usize);
            counts[cell] += 1;
        }
        for &c in &counts {
            worst = worst.max((c * cells as u64).abs_diff(polys));
        }
        tuples += 1;
        // advance to the next sorted tuple of distinct points
        let mut i = k;
        loop {
            if i == 0 {
                return KwiseReport {
                    k,
                    prime: p,
                    coefficients,
                    polynomials: polys,
                    tuples_checked: tuples,
                    max_scaled_deviation: worst,
                    pass: worst == 0,
                };
            }
            i -= 1;
            if points[i] < p - (k - i) as u64 {
                points[i] += 1;
                for j in i + 1..k {
                    points[j] = points[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// The degree-(k−1) family checked for exact k-wise independence.
pub fn verify_kwise(k: usize, p: u64) -> KwiseReport {
    verify_family(k, k, p)
}
