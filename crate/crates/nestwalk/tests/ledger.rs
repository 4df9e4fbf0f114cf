use nestwalk::ledger::{CostLedger, UnitCosts};
use proptest::prelude::*;

fn ledger() -> impl Strategy<Value = CostLedger> {
    (proptest::collection::vec(0u64..1_000_000, 8), proptest::collection::vec("[a-z]{1,6}", 0..3)).prop_map(|(c, warnings)| CostLedger {
        queries: c[0],
        ds_ops: c[1],
        walk_steps: c[2],
        simulator_walk_applications: c[3],
        checks: c[4],
        inner_invocations: c[5],
        setups: c[6],
        resamples: c[7],
        warnings,
        params: None,
    })
}

#[test]
fn weighted_total_prices_each_primitive() {
    let l = CostLedger { setups: 2, walk_steps: 10, checks: 3, inner_invocations: 12, queries: 99, ..CostLedger::new() };
    let unit = UnitCosts { setup: 5.0, walk_step: 1.0, check: 2.0, inner: 0.5 };
    assert_eq!(l.weighted(&unit), 10.0 + 10.0 + 6.0 + 6.0);
    assert_eq!(CostLedger::new().weighted(&unit), 0.0);
}

#[test]
fn ledger_serializes_to_json() {
    let mut l = CostLedger { queries: 4, ..CostLedger::new() };
    l.warn("low precision");
    let v = serde_json::to_value(&l).unwrap();
    assert_eq!(v["queries"], 4);
    assert_eq!(v["warnings"][0], "low precision");
    let back: CostLedger = serde_json::from_value(v).unwrap();
    assert_eq!(back, l);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn merging_is_associative_with_identity(a in ledger(), b in ledger(), c in ledger()) {
        let left = (a.clone() + b.clone()) + c.clone();
        let right = a.clone() + (b.clone() + c.clone());
        prop_assert_eq!(&left, &right);
        prop_assert_eq!(a.clone() + CostLedger::new(), a.clone());
        prop_assert_eq!(CostLedger::new() + a.clone(), a.clone());
        let summed: CostLedger = vec![a.clone(), b.clone(), c.clone()].into_iter().sum();
        prop_assert_eq!(summed, left);
    }

    #[test]
    fn weighted_total_is_additive(a in ledger(), b in ledger(), s in 0.0f64..10.0, w in 0.0f64..10.0, k in 0.0f64..10.0, i in 0.0f64..10.0) {
        let unit = UnitCosts { setup: s, walk_step: w, check: k, inner: i };
        let sum = (a.clone() + b.clone()).weighted(&unit);
        prop_assert!((sum - a.weighted(&unit) - b.weighted(&unit)).abs() <= 1e-9 * (1.0 + sum));
    }
}
