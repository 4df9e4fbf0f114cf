//! Closed-form walk costs and the 3-Distinctness parameter optimization.
//!
//! Log factors are dropped and every hidden constant is 1.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerCost {
    pub setup: f64,
    pub update: f64,
    pub check: f64,
    pub eps: f64,
    pub delta: f64,
}

/// Cost symbols of a walk. With `inner` present, `setup` and `check` are the
/// coin-independent S_C and C_C and `t` is the implementation cost T.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub setup: f64,
    pub update: f64,
    pub check: f64,
    pub eps: f64,
    pub delta: f64,
    pub inner: Option<InnerCost>,
    pub t: f64,
}

impl CostParams {
    pub fn flat(setup: f64, update: f64, check: f64, eps: f64, delta: f64) -> CostParams {
        CostParams { setup, update, check, eps, delta, inner: None, t: 0.0 }
    }

    /// Every symbol finite, nonnegative, and ε, δ (and their inner versions) in (0, 1].
    pub fn is_valid(&self) -> bool {
        let unit = |x: f64| x > 0.0 && x <= 1.0;
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        let inner_ok = self
            .inner
            .map(|i| nonneg(i.setup) && nonneg(i.update) && nonneg(i.check) && unit(i.eps) && unit(i.delta))
            .unwrap_or(true);
        nonneg(self.setup) && nonneg(self.update) && nonneg(self.check) && nonneg(self.t) && unit(self.eps) && unit(self.delta) && inner_ok
    }
}

/// S + (1/√ε)((1/√δ)U + C).
pub fn mnrs_cost(p: &CostParams) -> f64 {
    p.setup + (1.0 / p.eps.sqrt()) * ((1.0 / p.delta.sqrt()) * p.update + p.check)
}

/// S_C + S′ + (1/√ε)((1/√δ)((1/√ε′)((1/√δ′)U′ + C′) + T) + C_C).
///
/// Without inner symbols the inner walk contributes `update` in place of its own cost,
/// so the expression agrees with [`mnrs_cost`] when `t` is zero.
pub fn nested_cost(p: &CostParams) -> f64 {
    let (inner_setup, inner_walk) = match p.inner {
        Some(i) => (i.setup, (1.0 / i.eps.sqrt()) * ((1.0 / i.delta.sqrt()) * i.update + i.check)),
        None => (0.0, p.update),
    };
    p.setup + inner_setup + (1.0 / p.eps.sqrt()) * ((1.0 / p.delta.sqrt()) * (inner_walk + p.t) + p.check)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    Query,
    Time,
}

/// The four (or, in time mode, five) terms of the 3-Distinctness cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermBreakdown {
    /// s₁
    pub setup_inner: f64,
    /// s₂√(n/s₁)
    pub setup_outer: f64,
    /// n/√s₁
    pub update: f64,
    /// n/√s₂
    pub check: f64,
    /// √(n₂s₁²/n), zero in query mode
    pub implementation: f64,
}

impl TermBreakdown {
    pub fn sum(&self) -> f64 {
        self.setup_inner + self.setup_outer + self.update + self.check + self.implementation
    }

    pub fn max(&self) -> f64 {
        [self.setup_inner, self.setup_outer, self.update, self.check, self.implementation].into_iter().fold(0.0, f64::max)
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.setup_inner, self.setup_outer, self.update, self.check, self.implementation]
    }
}

/// Simplified 3-Distinctness cost with n₂ = n.
pub fn three_distinctness_terms(n: f64, s1: f64, s2: f64, mode: CostMode) -> TermBreakdown {
    TermBreakdown {
        setup_inner: s1,
        setup_outer: s2 * (n / s1).sqrt(),
        update: n / s1.sqrt(),
        check: n / s2.sqrt(),
        implementation: match mode {
            CostMode::Query => 0.0,
            CostMode::Time => (n * s1 * s1 / n).sqrt(),
        },
    }
}

/// Nested-walk symbols for the 3-Distinctness walk with n₂ = n and m = s₁²/n:
/// S_C = s₁ + s₂√(n/s₁), S′ = s₁, ε = s₂/n, δ = m/s₂, U′ = 1, ε′ = 1, δ′ = 1/s₁, C_C = √n,
/// and T = m in time mode.
pub fn three_distinctness_params(n: f64, s1: f64, s2: f64, mode: CostMode) -> CostParams {
    let m = (s1 * s1 / n).max(f64::MIN_POSITIVE);
    CostParams {
        setup: s1 + s2 * (n / s1).sqrt(),
        update: 0.0,
        check: n.sqrt(),
        eps: (s2 / n).min(1.0),
        delta: (m / s2).min(1.0),
        inner: Some(InnerCost { setup: s1, update: 1.0, check: 0.0, eps: 1.0, delta: (1.0 / s1).min(1.0) }),
        t: match mode {
            CostMode::Query => 0.0,
            CostMode::Time => m,
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Minimize the sum of the terms.
    Sum,
    /// Minimize the largest term.
    DominantTerm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub n: f64,
    pub s1: f64,
    pub s2: f64,
    pub cost: f64,
    pub terms: TermBreakdown,
}

pub const GRID_PER_DECADE: u32 = 64;

/// Grid minimization over s₁, s₂ ∈ {10^{j/64}} ∩ [1, n]; ties go to the smaller s₁.
pub fn optimize(n: f64, mode: CostMode, objective: Objective) -> Optimum {
    let top = (n.log10() * GRID_PER_DECADE as f64).floor() as u32;
    let grid: Vec<f64> = (0..=top).map(|j| 10f64.powf(j as f64 / GRID_PER_DECADE as f64)).collect();
    let mut best: Option<Optimum> = None;
    for &s1 in &grid {
        for &s2 in &grid {
            let terms = three_distinctness_terms(n, s1, s2, mode);
            let cost = match objective {
                Objective::Sum => terms.sum(),
                Objective::DominantTerm => terms.max(),
            };
            if best.as_ref().is_none_or(|b| cost < b.cost) {
                best = Some(Optimum { n, s1, s2, cost, terms });
            }
        }
    }
    best.expect("grid contains s = 1")
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub objective: Objective,
    pub mode: CostMode,
    pub rows: Vec<Optimum>,
    pub s1_slope: f64,
    pub s2_slope: f64,
    pub cost_slope: f64,
}

/// Optimize at n = 2^lo ..= 2^hi and fit the exponents.
pub fn fit_exponents(lo: u32, hi: u32, mode: CostMode, objective: Objective) -> ExponentFit {
    let ns: Vec<f64> = (lo..=hi).map(|e| 2f64.powi(e as i32)).collect();
    let rows: Vec<Optimum> = crate::par::map_seeds(0..ns.len() as u64, |i| optimize(ns[i as usize], mode, objective));
    let s1: Vec<f64> = rows.iter().map(|r| r.s1).collect();
    let s2: Vec<f64> = rows.iter().map(|r| r.s2).collect();
    let c: Vec<f64> = rows.iter().map(|r| r.cost).collect();
    ExponentFit {
        objective,
        mode,
        s1_slope: loglog_slope(&ns, &s1),
        s2_slope: loglog_slope(&ns, &s2),
        cost_slope: loglog_slope(&ns, &c),
        rows,
    }
}

/// Ratio of the largest to the smallest nonzero term at (s₁, s₂) = (n^{5/7}, n^{4/7}).
pub fn balance_ratio(n: f64, mode: CostMode) -> f64 {
    let t = three_distinctness_terms(n, n.powf(5.0 / 7.0), n.powf(4.0 / 7.0), mode);
    let nonzero: Vec<f64> = t.as_array().into_iter().filter(|&x| x > 0.0).collect();
    nonzero.iter().cloned().fold(0.0, f64::max) / nonzero.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub n: f64,
    pub s1: f64,
    pub s2: f64,
    pub cost: f64,
    pub term_s1: f64,
    pub term_s2_sqrt_n_over_s1: f64,
    pub term_n_over_sqrt_s1: f64,
    pub term_n_over_sqrt_s2: f64,
    pub term_implementation: f64,
    pub balance_max_over_min: f64,
}

impl From<&Optimum> for CsvRow {
    fn from(o: &Optimum) -> CsvRow {
        let t = o.terms.as_array();
        let nonzero: Vec<f64> = t.iter().cloned().filter(|&x| x > 0.0).collect();
        let balance = nonzero.iter().cloned().fold(0.0, f64::max) / nonzero.iter().cloned().fold(f64::INFINITY, f64::min);
        CsvRow {
            n: o.n,
            s1: o.s1,
            s2: o.s2,
            cost: o.cost,
            term_s1: t[0],
            term_s2_sqrt_n_over_s1: t[1],
            term_n_over_sqrt_s1: t[2],
            term_n_over_sqrt_s2: t[3],
            term_implementation: t[4],
            balance_max_over_min: balance,
        }
    }
}
