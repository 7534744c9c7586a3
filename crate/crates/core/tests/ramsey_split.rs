mod common;

use proptest::prelude::*;
use serde::Deserialize;
use umsk_core::io::SpaceFile;
use umsk_core::oracle::{failed_conclusions, oracle_check_ramsey, oracle_split};
use umsk_core::{check_corollary, ramsey_decompose, MetricMeasureSpace, RamseyResult};

#[derive(Deserialize)]
struct Fixture {
    space: SpaceFile,
    z: Vec<usize>,
    delta: f64,
    t: usize,
}

fn fixture() -> (MetricMeasureSpace, Vec<usize>, f64, usize) {
    let text = include_str!("fixtures/decremented_ring.json");
    let f: Fixture = serde_json::from_str(text).unwrap();
    (f.space.into_space().unwrap(), f.z, f.delta, f.t)
}

fn with_ring(result: &RamseyResult, split: &umsk_core::oracle::OracleSplit) -> RamseyResult {
    RamseyResult {
        p: split.p.clone(),
        q: split.q.clone(),
        qbar: split.qbar.clone(),
        ring_index: split.ring_index,
        ..result.clone()
    }
}

#[test]
fn decremented_ring_breaks_the_mass_inequality() {
    let (space, z, delta, t) = fixture();
    let r = ramsey_decompose(&space, &z, delta, t).unwrap();
    assert!(oracle_check_ramsey(&space, &z, delta, t, &r));
    assert!(r.ring_index >= 2);
    let lower = oracle_split(&space, &z, delta, t, Some(r.ring_index - 1)).unwrap();
    let failed = failed_conclusions(&space, &z, delta, t, &lower.p, &lower.q, &lower.qbar);
    assert!(failed.contains(&"dense-mass"), "{failed:?}");
    assert!(!oracle_check_ramsey(&space, &z, delta, t, &with_ring(&r, &lower)));
}

#[test]
fn swapped_parts_are_rejected_across_seeds() {
    for seed in 0..200 {
        let (space, z, delta, t) = common::ramsey_instance(seed);
        let mut r = ramsey_decompose(&space, &z, delta, t).unwrap();
        std::mem::swap(&mut r.q, &mut r.qbar);
        assert!(!oracle_check_ramsey(&space, &z, delta, t, &r), "seed {seed}");
    }
}

#[test]
fn seeded_trials_reach_later_rings() {
    let mut later = 0;
    for seed in 0..1000 {
        let (space, z, delta, t) = common::ramsey_instance(seed);
        let r = ramsey_decompose(&space, &z, delta, t).unwrap();
        assert!(!r.ring_fallback, "seed {seed}");
        if r.ring_index > 1 {
            later += 1;
        }
    }
    assert!(later >= 50, "only {later} trials cut beyond the first ring");
}

#[test]
fn corollary_on_two_points_by_hand() {
    let s = MetricMeasureSpace::from_coordinates(
        "pair",
        vec!["a".into(), "b".into()],
        vec![vec![0.0], vec![1.0]],
        vec![0.5, 0.5],
    )
    .unwrap();
    let r = ramsey_decompose(&s, &[0, 1], 1.0, 2).unwrap();
    // ½/(½)^{1/2} + ½/1 = 1.2071… >= 1
    let lhs = 0.5 / 0.5f64.sqrt() + 0.5;
    assert!(lhs >= 1.0);
    assert!(check_corollary(&r, &s, &[0, 1]).unwrap());
    assert!(oracle_check_ramsey(&s, &[0, 1], 1.0, 2, &r));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_agrees_with_decomposition(seed in 1000u64..1_000_000) {
        let (space, z, delta, t) = common::ramsey_instance(seed);
        let r = ramsey_decompose(&space, &z, delta, t).unwrap();
        prop_assert!(oracle_check_ramsey(&space, &z, delta, t, &r));
        prop_assert!(check_corollary(&r, &space, &z).unwrap());
    }

    #[test]
    fn emptied_dense_part_fails_corollary(seed in 0u64..100_000) {
        let (space, z, delta, t) = common::ramsey_instance(seed);
        let mut r = ramsey_decompose(&space, &z, delta, t).unwrap();
        r.p.clear();
        prop_assert!(!check_corollary(&r, &space, &z).unwrap());
    }
}
