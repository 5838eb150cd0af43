//! Simulation invariants on generated scenarios.

mod support;

use bimbot::sim::SimParams;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn random_sites_keep_every_invariant(seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = random_scenario(&mut rng, dir.path(), 0);
        let run = run_config(&cfg);
        for (name, v) in check_invariants(&run) {
            prop_assert!(v.is_empty(), "{}: {:?}", name, v);
        }
        prop_assert_eq!(run_config(&cfg).trace.to_jsonl(), run.trace.to_jsonl());

        let l = bimbot_cli::load(&cfg).unwrap();
        let half = SimParams { dt: cfg.sim.dt / 2.0, ..cfg.sim.clone() };
        let fine = run_loaded(&cfg, &l, &half);
        let (a, b) = (min_separations(&run.trace), min_separations(&fine.trace));
        for (id, d) in &a {
            prop_assert!((d - b[id]).abs() <= run.robot.max_speed * cfg.sim.dt, "{}: {} vs {}", id, d, b[id]);
        }
        // events do not depend on the step
        prop_assert_eq!(&run.trace.events, &fine.trace.events);
    }
}

#[test]
fn shipped_case_keeps_every_invariant() {
    let run = run_config(&config("case2"));
    assert_eq!(run.trace.install_count(), 11);
    for (name, v) in check_invariants(&run) {
        assert!(v.is_empty(), "{name}: {v:?}");
    }
}
