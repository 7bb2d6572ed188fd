//! Population-level properties of the event-driven engine.

use branchsim::motion::{ContactProcess, ErgodicCtmc, KilledOu};
use branchsim::stats::Accumulator;
use branchsim::{
    run_replica, run_replicas_map, survival_indicator, BranchingLaw, MotionModel, SimulationConfig,
    State,
};
use proptest::prelude::*;

fn ctmc() -> MotionModel {
    ErgodicCtmc::default_five_state().into()
}

#[test]
fn mean_population_grows_at_the_malthusian_rate() {
    let law = BranchingLaw::binary(0.2, 1.0).unwrap();
    let cfg = SimulationConfig::at_times(vec![1.0, 2.0], 31);
    let sizes = run_replicas_map(&ctmc(), &law, &State::Site(0), &cfg, 10_000, |_, s| {
        [s[0].size() as f64, s[1].size() as f64]
    })
    .unwrap();
    for (j, t) in [1.0, 2.0f64].into_iter().enumerate() {
        let mut acc = Accumulator::default();
        sizes.iter().for_each(|r| acc.push(r[j]));
        let e = acc.estimate();
        let exact = (0.6 * t).exp();
        assert!(
            (e.value - exact).abs() < 4.0 * e.std_error,
            "t={t}: {e} vs {exact}"
        );
    }
}

#[test]
fn childless_branching_only_kills() {
    // With m = 0 the population is the initial particle until it branches or
    // is absorbed: P(alive at t) = e^{-rt} P_x(X_t > 0).
    let law = BranchingLaw::new([(0, 1.0)], 0.7).unwrap();
    let ou = KilledOu::new(1.0).unwrap();
    let m: MotionModel = ou.clone().into();
    let cfg = SimulationConfig::at_times(vec![0.5, 1.0], 32);
    let n = 40_000;
    let rows = run_replicas_map(&m, &law, &State::RealPos(0.8), &cfg, n, |_, s| {
        assert!(s.iter().all(|x| x.size() <= 1));
        assert!(s.iter().all(|x| x.absorbed_count + x.dead_count <= 1));
        [s[0].size(), s[1].size()]
    })
    .unwrap();
    for (j, t) in [0.5, 1.0f64].into_iter().enumerate() {
        let p = (-0.7 * t).exp() * ou.survival(0.8, t);
        let f = rows.iter().filter(|r| r[j] == 1).count() as f64 / n as f64;
        assert!(
            (f - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(),
            "t={t}: {f} vs {p}"
        );
    }
}

#[test]
fn contact_process_particles_are_configurations() {
    let cp = ContactProcess::new(2, 1.5, None).unwrap();
    let x0 = cp.single_site();
    let m: MotionModel = cp.into();
    let law = BranchingLaw::binary(0.2, 1.0).unwrap();
    let cfg = SimulationConfig::at_times(vec![0.5, 1.0], 33);
    for i in 0..50 {
        let snaps = run_replica(
            &m,
            &law,
            &x0,
            &SimulationConfig {
                replica_index: i,
                ..cfg.clone()
            },
        )
        .unwrap();
        for s in &snaps {
            assert!(s
                .live_states
                .iter()
                .all(|x| matches!(x, State::Lattice(c) if !c.is_empty())));
        }
    }
}

#[test]
fn capped_runs_are_flagged_and_not_extinct() {
    let law = BranchingLaw::new([(3, 1.0)], 5.0).unwrap();
    let cfg = SimulationConfig {
        population_cap: 100,
        ..SimulationConfig::at_times(vec![1.0, 2.0], 34)
    };
    let snaps = run_replica(&ctmc(), &law, &State::Site(0), &cfg).unwrap();
    assert!(snaps.iter().all(|s| s.truncated && !s.is_extinct()));
    assert_eq!(survival_indicator(&snaps), vec![true, true]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extinction_and_absorption_are_permanent(seed in any::<u64>(), p0 in 0.05f64..0.6) {
        let law = BranchingLaw::binary(p0, 1.5).unwrap();
        let m: MotionModel = KilledOu::new(1.0).unwrap().into();
        let times: Vec<f64> = (1..=10).map(|i| 0.3 * i as f64).collect();
        let snaps = run_replica(&m, &law, &State::RealPos(0.5), &SimulationConfig::at_times(times, seed)).unwrap();
        let alive = survival_indicator(&snaps);
        prop_assert!(alive.windows(2).all(|w| w[0] || !w[1]));
        prop_assert!(snaps.windows(2).all(|w| w[0].absorbed_count <= w[1].absorbed_count
            && w[0].dead_count <= w[1].dead_count));
        prop_assert!(snaps.iter().all(|s| s.live_states.iter().all(|x| matches!(x, State::RealPos(v) if *v > 0.0))));
    }

    #[test]
    fn identical_seeds_give_identical_runs(seed in any::<u64>(), replica in 0u64..1000) {
        let law = BranchingLaw::binary(0.2, 1.0).unwrap();
        let cfg = SimulationConfig { replica_index: replica, ..SimulationConfig::at_times(vec![0.5, 1.5], seed) };
        let a = run_replica(&ctmc(), &law, &State::Site(1), &cfg).unwrap();
        let b = run_replica(&ctmc(), &law, &State::Site(1), &cfg).unwrap();
        prop_assert_eq!(a, b);
    }
}
