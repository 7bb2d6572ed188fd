//! Cross-checks of the motion samplers against closed forms and quadrature.

use branchsim::motion::{ErgodicCtmc, GaltonWatson, KilledDriftBm, KilledOu, TransientOu};
use branchsim::quad::integrate;
use branchsim::stats::ks_distance;
use branchsim::{MotionModel, RandomStream, State};

/// 0.1% critical value of the one-sample KS statistic.
fn ks_critical(n: usize) -> f64 {
    1.95 / (n as f64).sqrt()
}

fn motions() -> Vec<(MotionModel, State)> {
    vec![
        (ErgodicCtmc::default_five_state().into(), State::Site(3)),
        (
            GaltonWatson::new(vec![(-1, 0.6), (1, 0.4)]).unwrap().into(),
            State::Count(2),
        ),
        (KilledOu::new(1.0).unwrap().into(), State::RealPos(0.7)),
        (TransientOu::new(0.5, 1.0).unwrap().into(), State::Real(0.4)),
        (KilledDriftBm::new(1.0).unwrap().into(), State::RealPos(1.5)),
    ]
}

#[test]
fn single_particle_martingale_has_mean_one() {
    let n = 200_000;
    for (m, x0) in motions() {
        let e = m.eigen_data().unwrap();
        let mut rng = RandomStream::new(11);
        for t in [0.5, 2.0] {
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let xt = m.advance(&x0, t, &mut rng);
                let w = e.martingale_weight(&x0, &xt, t).unwrap();
                s1 += w;
                s2 += w * w;
            }
            let mean = s1 / n as f64;
            let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
            assert!(
                (mean - 1.0).abs() < 4.0 * se.max(1e-12),
                "{} t={t}: {mean} ± {se}",
                m.name()
            );
        }
    }
}

#[test]
fn killed_drift_bm_survival_matches_closed_form() {
    let bm = KilledDriftBm::new(1.0).unwrap();
    let m: MotionModel = bm.clone().into();
    let mut rng = RandomStream::new(12);
    let n = 100_000;
    for x in [0.5, 1.0, 2.0] {
        for t in [0.5, 1.0, 2.0] {
            let alive = (0..n)
                .filter(|_| !m.advance(&State::RealPos(x), t, &mut rng).is_absorbed())
                .count() as f64
                / n as f64;
            let p = bm.survival(x, t);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((alive - p).abs() < 4.0 * se, "x={x} t={t}: {alive} vs {p}");
        }
    }
}

#[test]
fn killed_drift_bm_survival_is_the_integrated_density() {
    let bm = KilledDriftBm::new(0.8).unwrap();
    let m: MotionModel = bm.clone().into();
    for (x, t) in [(0.5f64, 0.5f64), (1.0, 1.0), (2.0, 3.0)] {
        let xs = State::RealPos(x);
        let mass = integrate(
            |y| {
                m.transition_density(&xs, &State::RealPos(y.max(1e-300)), t)
                    .unwrap()
            },
            0.0,
            x + 12.0 * t.sqrt() + 1.0,
            1e-13,
            1e-11,
        )
        .value;
        assert!((mass - bm.survival(x, t)).abs() < 1e-8, "x={x} t={t}");
    }
}

/// KS distance of surviving samples at time t to the normalized density.
fn ks_against_density(
    m: &MotionModel,
    x0: &State,
    t: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> (f64, usize) {
    let mut rng = RandomStream::new(13);
    let samples: Vec<f64> = (0..n)
        .filter_map(|_| m.advance(x0, t, &mut rng).scalar())
        .collect();
    let state = |y: f64| match x0 {
        State::Real(_) => State::Real(y),
        _ => State::RealPos(y.max(1e-300)),
    };
    let dens = |y: f64| m.transition_density(x0, &state(y), t).unwrap();
    let total = integrate(dens, lo, hi, 1e-14, 1e-12).value;
    let cdf = |x: f64| integrate(dens, lo, x.clamp(lo, hi), 1e-14, 1e-12).value / total;
    (ks_distance(&samples, cdf), samples.len())
}

#[test]
fn diffusion_samplers_match_their_densities() {
    let cases: Vec<(MotionModel, State, f64, f64, f64)> = vec![
        (
            KilledOu::new(1.0).unwrap().into(),
            State::RealPos(0.7),
            0.8,
            0.0,
            8.0,
        ),
        (
            TransientOu::new(0.5, 1.0).unwrap().into(),
            State::Real(0.4),
            1.0,
            -12.0,
            12.0,
        ),
        (
            KilledDriftBm::new(1.0).unwrap().into(),
            State::RealPos(1.5),
            1.0,
            0.0,
            12.0,
        ),
    ];
    for (m, x0, t, lo, hi) in cases {
        let (ks, n) = ks_against_density(&m, &x0, t, lo, hi, 20_000);
        assert!(ks < ks_critical(n), "{}: KS {ks} over {n}", m.name());
    }
}

#[test]
fn tilted_samplers_agree_with_doob_weighting() {
    // E~[X_t] by the h-transform sampler and by weighting P-paths with M_t.
    let n = 200_000;
    for (m, x0) in motions().into_iter().skip(2) {
        let e = m.eigen_data().unwrap();
        let mut rng = RandomStream::new(14);
        let t = 1.0;
        let (mut a1, mut a2, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let y = m.sample_tilted(&x0, t, &mut rng).unwrap().scalar().unwrap();
            a1 += y;
            a2 += y * y;
            let xt = m.advance(&x0, t, &mut rng);
            let w = e.martingale_weight(&x0, &xt, t).unwrap() * xt.scalar().unwrap_or(0.0);
            b1 += w;
            b2 += w * w;
        }
        let nf = n as f64;
        let (ma, mb) = (a1 / nf, b1 / nf);
        let se = ((a2 / nf - ma * ma) / nf + (b2 / nf - mb * mb) / nf).sqrt();
        assert!(
            (ma - mb).abs() < 4.0 * se,
            "{}: {ma} vs {mb} (se {se})",
            m.name()
        );
    }
}

#[test]
fn galton_watson_conditioned_law_approaches_nu() {
    let gw = GaltonWatson::new(vec![(-1, 0.6), (1, 0.4)]).unwrap();
    let nu = gw.nu().unwrap().to_vec();
    let m: MotionModel = gw.into();
    let p = |j: u64| {
        m.transition_density(&State::Count(3), &State::Count(j), 60.0)
            .unwrap()
    };
    let p1 = p(1);
    for j in 2..=6u64 {
        let got = p(j) / p1;
        let expect = nu[j as usize - 1] / nu[0];
        assert!(
            (got - expect).abs() < 1e-2 * expect,
            "j={j}: {got} vs {expect}"
        );
    }
}

#[test]
fn ctmc_transition_density_matches_simulation() {
    let m: MotionModel = ErgodicCtmc::default_five_state().into();
    let mut rng = RandomStream::new(15);
    let n = 100_000;
    let mut counts = [0usize; 5];
    for _ in 0..n {
        let State::Site(i) = m.advance(&State::Site(0), 0.7, &mut rng) else {
            panic!()
        };
        counts[i] += 1;
    }
    for (j, &c) in counts.iter().enumerate() {
        let p = m
            .transition_density(&State::Site(0), &State::Site(j), 0.7)
            .unwrap();
        let f = c as f64 / n as f64;
        assert!(
            (f - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(),
            "site {j}: {f} vs {p}"
        );
    }
}
