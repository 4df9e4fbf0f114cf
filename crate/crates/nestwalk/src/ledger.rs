//! Per-run cost accounting.
//!
//! Counters only ever grow. Two ledgers combine with [`CostLedger::merge`] (or `+`),
//! which is associative: counters add, warnings concatenate, and the symbolic
//! parameter block keeps the left operand's value when both are present.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign};

/// Declared cost symbols of a (possibly nested) walk, used to evaluate closed-form bounds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymbolicParams {
    pub setup: f64,
    pub update: f64,
    pub check: f64,
    pub eps: f64,
    pub delta: f64,
    pub inner: Option<InnerSymbols>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InnerSymbols {
    pub setup: f64,
    pub update: f64,
    pub check: f64,
    pub eps: f64,
    pub delta: f64,
    /// Implementation cost of LDwG plus Garbage Swap.
    pub t: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    /// Input queries charged (query model).
    pub queries: u64,
    /// Data-structure operations charged (time model).
    pub ds_ops: u64,
    /// Walk-operator units charged by the search loop (⌈1/√δ⌉ per reflection).
    pub walk_steps: u64,
    /// Walk-operator applications the simulator actually performed.
    pub simulator_walk_applications: u64,
    /// Checking reflections / classical checks.
    pub checks: u64,
    /// Inner-walk invocations (nested updates).
    pub inner_invocations: u64,
    pub setups: u64,
    pub resamples: u64,
    pub warnings: Vec<String>,
    pub params: Option<SymbolicParams>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_params(params: SymbolicParams) -> Self {
        CostLedger { params: Some(params), ..Self::default() }
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn merge(mut self, other: CostLedger) -> CostLedger {
        self += other;
        self
    }

    /// Σ over primitives of (count × unit cost).
    pub fn weighted(&self, unit: &UnitCosts) -> f64 {
        unit.setup * self.setups as f64
            + unit.walk_step * self.walk_steps as f64
            + unit.check * self.checks as f64
            + unit.inner * self.inner_invocations as f64
    }
}

/// Unit prices used to turn a ledger into a single comparable number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UnitCosts {
    pub setup: f64,
    pub walk_step: f64,
    pub check: f64,
    pub inner: f64,
}

impl AddAssign for CostLedger {
    fn add_assign(&mut self, other: CostLedger) {
        self.queries += other.queries;
        self.ds_ops += other.ds_ops;
        self.walk_steps += other.walk_steps;
        self.simulator_walk_applications += other.simulator_walk_applications;
        self.checks += other.checks;
        self.inner_invocations += other.inner_invocations;
        self.setups += other.setups;
        self.resamples += other.resamples;
        self.warnings.extend(other.warnings);
        if self.params.is_none() {
            self.params = other.params;
        }
    }
}

impl Add for CostLedger {
    type Output = CostLedger;
    fn add(self, other: CostLedger) -> CostLedger {
        self.merge(other)
    }
}

impl std::iter::Sum for CostLedger {
    fn sum<I: Iterator<Item = CostLedger>>(iter: I) -> CostLedger {
        iter.fold(CostLedger::new(), Add::add)
    }
}
