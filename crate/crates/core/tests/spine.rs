//! Spine estimators against closed forms.

use branchsim::motion::{ErgodicCtmc, GaltonWatson, KilledDriftBm, KilledOu};
use branchsim::spine::{doob_weighted_expectation, many_to_one, many_to_two};
use branchsim::{BranchingLaw, Error, MotionModel, RandomStream, State, TestSet};

#[test]
fn many_to_one_recovers_killed_ou_survival() {
    let law = BranchingLaw::binary(0.2, 2.0).unwrap();
    let ou = KilledOu::new(1.0).unwrap();
    let m: MotionModel = ou.clone().into();
    let mut rng = RandomStream::new(41);
    for t in [0.5, 1.5] {
        let e = many_to_one(
            &m,
            &law,
            &State::RealPos(1.0),
            &|_| 1.0,
            t,
            200_000,
            &mut rng,
        )
        .unwrap();
        let exact = (1.2 * t).exp() * ou.survival(1.0, t);
        assert!(
            (e.value - exact).abs() < 4.0 * e.std_error,
            "t={t}: {e} vs {exact}"
        );
    }
}

#[test]
fn many_to_one_of_h_is_the_eigenvalue_decay() {
    // E_x[Σ h(u_t)] = h(x) e^{(r(m1-1) - λ)t}.
    let law = BranchingLaw::binary(0.2, 1.0).unwrap();
    let m: MotionModel = GaltonWatson::new(vec![(-1, 0.6), (1, 0.4)]).unwrap().into();
    let e = m.eigen_data().unwrap();
    let h = |s: &State| e.h(s);
    let mut rng = RandomStream::new(42);
    let x0 = State::Count(3);
    let got = many_to_one(&m, &law, &x0, &h, 1.0, 200_000, &mut rng).unwrap();
    let exact = 3.0 * (0.6 - e.lambda()).exp();
    assert!(
        (got.value - exact).abs() < 4.0 * got.std_error,
        "{got} vs {exact}"
    );
}

#[test]
fn many_to_two_of_h_is_the_martingale_second_moment() {
    // E_x[(Σ h(u_t))²] = h(x)² e^{2(a - λ)t} E[D_t²], and for h ≡ 1 on the
    // chain E[D_t²] = 1 + c(1 - e^{-at})/a exactly.
    let law = BranchingLaw::new([(0, 0.1), (1, 0.3), (3, 0.6)], 0.8).unwrap();
    let m: MotionModel = ErgodicCtmc::default_five_state().into();
    let mut rng = RandomStream::new(43);
    let t = 2.0;
    let e = many_to_two(
        &m,
        &law,
        &State::Site(4),
        &|_| 1.0,
        &|_| 1.0,
        t,
        1000,
        &mut rng,
    )
    .unwrap();
    let (a, c) = (law.growth_rate(), law.pair_weight_rate());
    let exact = (2.0 * a * t).exp() * (1.0 + c * -(-a * t).exp_m1() / a);
    assert!((e.estimate.value - exact).abs() < 1e-9 * exact);
}

#[test]
fn many_to_two_disjoint_sets_have_no_diagonal() {
    // f g = 0 pointwise, so only pairs of distinct particles contribute and
    // the estimate vanishes as t → 0.
    let law = BranchingLaw::binary(0.2, 1.0).unwrap();
    let m: MotionModel = KilledDriftBm::new(1.0).unwrap().into();
    let b1 = TestSet::interval(0.0, 1.0).unwrap();
    let b2 = TestSet::interval(1.0, f64::INFINITY).unwrap();
    let (f, g) = (|s: &State| b1.indicator(s), |s: &State| b2.indicator(s));
    let mut rng = RandomStream::new(44);
    let e = many_to_two(
        &m,
        &law,
        &State::RealPos(1.0),
        &f,
        &g,
        1e-6,
        10_000,
        &mut rng,
    )
    .unwrap();
    assert!(e.estimate.value.abs() < 1e-4);
}

#[test]
fn doob_weighting_rejects_a_degenerate_target() {
    let m: MotionModel = KilledOu::new(1.0).unwrap().into();
    let e = m.eigen_data().unwrap();
    let mut rng = RandomStream::new(45);
    // Almost every path is absorbed at t = 40 from x = 1e-3.
    let r = doob_weighted_expectation(&m, &e, &State::RealPos(1e-3), &|_| 1.0, 40.0, 200, &mut rng);
    assert!(
        matches!(r, Err(Error::LowEffectiveSampleSize { .. })),
        "{r:?}"
    );
}
