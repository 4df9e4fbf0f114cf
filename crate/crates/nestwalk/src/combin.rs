//! Binomial coefficients and colexicographic ranking of subsets stored as `u64` bitmasks.
//!
//! A k-subset of `{0, .., 63}` is a mask with `k` bits set. Colex order on k-subsets
//! coincides with numeric order of the masks, which is what Gosper's hack enumerates.

/// Exact binomial coefficient, saturating at `u128::MAX`.
pub fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) after the multiplication.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Binomial coefficient as `u64`; panics on overflow.
pub fn binom_u64(n: u64, k: u64) -> u64 {
    u64::try_from(binom(n, k)).expect("binomial coefficient overflows u64")
}

/// Binomial coefficient as `f64`, computed through `ln Γ` sums for large arguments.
pub fn binom_f64(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let exact = binom(n, k);
    if exact < (1u128 << 100) {
        return exact as f64;
    }
    let k = k.min(n - k);
    let mut ln = 0.0f64;
    for i in 0..k {
        ln += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    ln.exp()
}

/// Colex rank of a subset mask among all subsets of the same size.
pub fn colex_rank(mask: u64) -> u64 {
    let mut rank = 0u64;
    let mut rest = mask;
    let mut t = 1u64;
    while rest != 0 {
        let pos = rest.trailing_zeros() as u64;
        rank += binom_u64(pos, t);
        rest &= rest - 1;
        t += 1;
    }
    rank
}

/// Inverse of [`colex_rank`] for k-subsets.
pub fn colex_unrank(mut rank: u64, k: u32) -> u64 {
    let mut mask = 0u64;
    for t in (1..=k as u64).rev() {
        // largest c with C(c, t) <= rank
        let mut c = t - 1;
        while binom_u64(c + 1, t) <= rank {
            c += 1;
        }
        rank -= binom_u64(c, t);
        mask |= 1u64 << c;
    }
    mask
}

/// Iterator over all k-subsets of `{0, .., n-1}` in colex order.
#[derive(Clone, Debug)]
pub struct Subsets {
    current: Option<u64>,
    limit: u64,
}

impl Subsets {
    pub fn new(n: u32, k: u32) -> Self {
        assert!(n <= 64, "universe larger than 64 elements");
        let current = if k > n {
            None
        } else if k == 0 {
            Some(0)
        } else if k == 64 {
            Some(u64::MAX)
        } else {
            Some((1u64 << k) - 1)
        };
        let limit = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        Subsets { current, limit }
    }
}

impl Iterator for Subsets {
    type Item = u64;
    fn next(&mut self) -> Option<u64> {
        let cur = self.current?;
        self.current = if cur == 0 || cur == u64::MAX {
            None
        } else {
            let c = cur & cur.wrapping_neg();
            let r = cur.wrapping_add(c);
            if r == 0 {
                None
            } else {
                let next = (((r ^ cur) >> 2) / c) | r;
                (next <= self.limit).then_some(next)
            }
        };
        Some(cur)
    }
}

/// Sub-universe of `{0, .., 63}` given by a mask, supporting rank and unrank of
/// subsets contained in it via compression to consecutive positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    mask: u64,
    elems: Vec<u8>,
}

impl Region {
    pub fn new(mask: u64) -> Self {
        let mut elems = Vec::with_capacity(mask.count_ones() as usize);
        let mut rest = mask;
        while rest != 0 {
            elems.push(rest.trailing_zeros() as u8);
            rest &= rest - 1;
        }
        Region { mask, elems }
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    /// Gather the bits of `sub` (a subset of the region) into consecutive low bits.
    pub fn compress(&self, sub: u64) -> u64 {
        debug_assert_eq!(sub & !self.mask, 0, "subset leaves the region");
        let mut out = 0u64;
        for (i, &e) in self.elems.iter().enumerate() {
            out |= ((sub >> e) & 1) << i;
        }
        out
    }

    /// Scatter consecutive low bits back onto the region's elements.
    pub fn expand(&self, compressed: u64) -> u64 {
        let mut out = 0u64;
        let mut rest = compressed;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            out |= 1u64 << self.elems[i];
            rest &= rest - 1;
        }
        out
    }

    pub fn rank(&self, sub: u64) -> usize {
        colex_rank(self.compress(sub)) as usize
    }

    pub fn unrank(&self, rank: usize, k: u32) -> u64 {
        self.expand(colex_unrank(rank as u64, k))
    }

    /// All k-subsets of the region, in rank order.
    pub fn subsets(&self, k: u32) -> impl Iterator<Item = u64> + '_ {
        Subsets::new(self.elems.len() as u32, k).map(move |c| self.expand(c))
    }

    pub fn count(&self, k: u32) -> usize {
        binom_u64(self.elems.len() as u64, k as u64) as usize
    }
}

/// Iterate over the set bits of a mask from lowest to highest.
pub fn bits(mask: u64) -> impl Iterator<Item = u32> {
    let mut rest = mask;
    std::iter::from_fn(move || {
        if rest == 0 {
            None
        } else {
            let b = rest.trailing_zeros();
            rest &= rest - 1;
            Some(b)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_binomials() {
        assert_eq!(binom(8, 4), 70);
        assert_eq!(binom(5, 7), 0);
        assert_eq!(binom(64, 32), 1_832_624_140_942_590_534);
        assert_eq!(binom(0, 0), 1);
    }

    #[test]
    fn gosper_enumerates_in_rank_order() {
        for n in 0..=10u32 {
            for k in 0..=n {
                let all: Vec<u64> = Subsets::new(n, k).collect();
                assert_eq!(all.len() as u128, binom(n as u64, k as u64));
                for (r, &m) in all.iter().enumerate() {
                    assert_eq!(m.count_ones(), k);
                    assert_eq!(colex_rank(m), r as u64);
                    assert_eq!(colex_unrank(r as u64, k), m);
                }
            }
        }
    }

    #[test]
    fn region_round_trip() {
        let region = Region::new(0b1011_0110_0101);
        assert_eq!(region.len(), 7);
        for (r, s) in region.subsets(3).enumerate() {
            assert_eq!(s & !region.mask(), 0);
            assert_eq!(region.rank(s), r);
            assert_eq!(region.unrank(r, 3), s);
        }
        assert_eq!(region.subsets(3).count(), region.count(3));
    }

    #[test]
    fn f64_binomial_tracks_exact() {
        let approx = binom_f64(200, 100);
        let exact = 9.054_851_465_610_328e58;
        assert!((approx / exact - 1.0).abs() < 1e-9);
    }
}
