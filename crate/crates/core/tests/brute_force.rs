mod common;

use common::{fixed_toy, Toy};
use medestim::Effect;
use proptest::prelude::*;

const TOL: f64 = 1e-6;

fn check(toy: &Toy) -> Result<(), TestCaseError> {
    let want = toy.oracle();
    let [_, mr, dml] = toy.estimates();
    for e in Effect::ALL {
        prop_assert!((mr.get(e) - dml.get(e)).abs() < 1e-9, "mr vs dml {e:?}");
    }
    for (name, got) in ["g_computation", "multiply_robust", "dml"].iter().zip(toy.estimates()) {
        for e in Effect::ALL {
            prop_assert!((got.get(e) - want.get(e)).abs() < TOL, "{name} {e:?}: {} vs {}", got.get(e), want.get(e));
        }
    }
    Ok(())
}

#[test]
fn fixed_instance_matches_enumeration() {
    check(&fixed_toy()).unwrap();
}

#[test]
fn oracle_by_hand() {
    // One covariate value, one row per cell: the mediation formula reduces
    // to cell outcomes weighted by P(M = 1 | t') = 1/2.
    let toy = Toy::new(1, &[0], &[0.0]);
    let want = toy.oracle();
    // Cell outcomes are 0.7t + 1.3m.
    assert!((want.total - 0.7).abs() < 1e-12);
    assert!(want.indirect_1.abs() < 1e-12);
    assert!((want.direct_0 - 0.7).abs() < 1e-12);
}

proptest! {
    #[test]
    fn random_instances_match_enumeration(
        support in 1usize..=3,
        counts in prop::collection::vec(0usize..20, 12),
        ys in prop::collection::vec(-5.0f64..5.0, 1..40),
    ) {
        check(&Toy::new(support, &counts, &ys))?;
    }
}
