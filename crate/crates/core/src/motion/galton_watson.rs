//! Subcritical continuous-time Galton–Watson chain on {1, 2, ...} absorbed at 0.
//!
//! From n the chain jumps to n + y at rate n ρ(y), y ∈ {-1, 0, 1, ...}.
//! With λ = -Σ y ρ(y) > 0 the function h(n) = n satisfies Lh = -λh.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::Motion;
use crate::eigen::{EigenData, Scaling};
use crate::error::{Error, Result, Violations};
use crate::rng::RandomStream;
use crate::state::State;
use crate::test_set::TestSet;

const MIN_TRUNCATION: usize = 200;
const MAX_TRUNCATION: usize = 1600;

#[derive(Clone, Debug)]
pub struct GaltonWatson {
    rho: Vec<(i64, f64)>,
    cumulative: Vec<f64>,
    lambda: f64,
    sigma2: f64,
    /// ν(k) for k = 1..=nu.len(), normalized by Σ k ν(k) = 1.
    nu: Option<Arc<Vec<f64>>>,
}

impl GaltonWatson {
    /// Checks Σ y ρ(y) < 0, ρ(-1) ∈ (0, 1) and solves for ν.
    pub fn new(rho: Vec<(i64, f64)>) -> Result<Self> {
        let mut gw = Self::new_unchecked(rho);
        let mut v = Violations::default();
        for &(y, p) in &gw.rho {
            v.check(y >= -1, || format!("jump size {y} is below -1"));
            v.check(p.is_finite() && p >= 0.0, || {
                format!("ρ({y}) = {p} is not a probability")
            });
        }
        v.check(gw.rho.windows(2).all(|w| w[0].0 != w[1].0), || {
            "jump sizes must be distinct".into()
        });
        let total: f64 = gw.rho.iter().map(|r| r.1).sum();
        v.check((total - 1.0).abs() <= 1e-12, || {
            format!("ρ sums to {total}, not 1")
        });
        let down = gw.rho_at(-1);
        v.check(down > 0.0 && down < 1.0, || {
            format!("ρ(-1) = {down} must lie in (0, 1)")
        });
        v.check(gw.lambda > 0.0, || {
            format!("Σ y ρ(y) = {} must be negative", -gw.lambda)
        });
        v.into_result()?;
        gw.nu = Some(Arc::new(solve_nu(&gw.rho, gw.lambda)?));
        Ok(gw)
    }

    /// Builds the chain without checking the subcriticality hypotheses. The
    /// result can be simulated but has no eigendata.
    pub fn new_unchecked(mut rho: Vec<(i64, f64)>) -> Self {
        rho.sort_by_key(|r| r.0);
        let mut acc = 0.0;
        let cumulative = rho
            .iter()
            .map(|r| {
                acc += r.1;
                acc
            })
            .collect();
        let lambda = -rho.iter().map(|&(y, p)| y as f64 * p).sum::<f64>();
        let sigma2 = rho.iter().map(|&(y, p)| (y * y) as f64 * p).sum();
        GaltonWatson {
            rho,
            cumulative,
            lambda,
            sigma2,
            nu: None,
        }
    }

    pub fn rho(&self) -> &[(i64, f64)] {
        &self.rho
    }

    fn rho_at(&self, y: i64) -> f64 {
        self.rho.iter().find(|r| r.0 == y).map_or(0.0, |r| r.1)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// σ_ρ² = Σ y² ρ(y).
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Truncated eigenmeasure, `nu()[k - 1] = ν(k)`.
    pub fn nu(&self) -> Option<&[f64]> {
        self.nu.as_deref().map(Vec::as_slice)
    }

    fn jump(&self, rng: &mut RandomStream) -> i64 {
        let u = rng.uniform() * self.cumulative.last().copied().unwrap_or(1.0);
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.rho[idx.min(self.rho.len() - 1)].0
    }
}

/// Outgoing jumps of the chain from `n`: `(Count(n + y), n ρ(y))`, with
/// `Absorbed` in place of `Count(0)`.
pub fn gw_event_rates(n: u64, rho: &[(i64, f64)]) -> Vec<(State, f64)> {
    rho.iter()
        .filter(|r| r.1 > 0.0)
        .map(|&(y, p)| {
            let target = (n as i64 + y).max(0) as u64;
            (State::count(target), n as f64 * p)
        })
        .collect()
}

/// Solves ν(Q + λI) = 0 on {1..N} with the last equation replaced by
/// Σ k ν(k) = 1, doubling N until the tail is negligible.
fn solve_nu(rho: &[(i64, f64)], lambda: f64) -> Result<Vec<f64>> {
    let mut n = MIN_TRUNCATION;
    loop {
        let nu = solve_truncated(rho, lambda, n)?;
        let tail: f64 = nu[n * 9 / 10..]
            .iter()
            .enumerate()
            .map(|(i, v)| (n * 9 / 10 + i + 1) as f64 * v.abs())
            .sum();
        if tail < 1e-10 || n >= MAX_TRUNCATION {
            if tail >= 1e-10 {
                log::warn!("Galton–Watson ν truncated at {n} with tail mass {tail:.2e}");
            }
            return Ok(nu.into_iter().map(|v| v.max(0.0)).collect());
        }
        n *= 2;
    }
}

fn solve_truncated(rho: &[(i64, f64)], lambda: f64, n: usize) -> Result<Vec<f64>> {
    // a[(j, k)] = Q(k, j) + λ δ_jk, unknowns ν(1..=n).
    let mut a = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        a[(k - 1, k - 1)] += lambda - k as f64;
        for &(y, p) in rho {
            let j = k as i64 + y;
            if j >= 1 && j <= n as i64 {
                a[(j as usize - 1, k - 1)] += k as f64 * p;
            }
        }
    }
    for k in 1..=n {
        a[(n - 1, k - 1)] = k as f64;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    a.lu()
        .solve(&b)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::config("Galton–Watson eigenmeasure system is singular"))
}

fn truncated_generator(rho: &[(i64, f64)], n: usize) -> DMatrix<f64> {
    let mut q = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        q[(k - 1, k - 1)] -= k as f64;
        for &(y, p) in rho {
            let j = k as i64 + y;
            if j >= 1 && j <= n as i64 {
                q[(k - 1, j as usize - 1)] += k as f64 * p;
            }
        }
    }
    q
}

impl Motion for GaltonWatson {
    fn name(&self) -> &'static str {
        "galton-watson"
    }

    fn is_jump_process(&self) -> bool {
        true
    }

    fn validate_state(&self, x: &State) -> Result<()> {
        match x {
            State::Count(n) if *n >= 1 => Ok(()),
            _ => Err(Error::invalid(format!(
                "galton-watson needs Count(n >= 1), got {x:?}"
            ))),
        }
    }

    fn advance(&self, x: &State, dt: f64, rng: &mut RandomStream) -> State {
        let State::Count(mut n) = *x else {
            return x.clone();
        };
        let mut t = 0.0;
        loop {
            t += rng.exponential(n as f64);
            if t > dt {
                return State::Count(n);
            }
            let next = n as i64 + self.jump(rng);
            if next <= 0 {
                return State::Absorbed;
            }
            n = next as u64;
        }
    }

    fn jump_rates(&self, x: &State) -> Option<Vec<(State, f64)>> {
        match *x {
            State::Count(n) => Some(gw_event_rates(n, &self.rho)),
            _ => Some(Vec::new()),
        }
    }

    fn transition_density(&self, x: &State, y: &State, t: f64) -> Option<f64> {
        let (State::Count(i), State::Count(j)) = (x, y) else {
            return None;
        };
        let n = (*i.max(j) as usize + MIN_TRUNCATION).min(4 * MIN_TRUNCATION);
        if *i as usize > n || *j as usize > n {
            return None;
        }
        let p = (truncated_generator(&self.rho, n) * t).exp();
        Some(p[(*i as usize - 1, *j as usize - 1)].max(0.0))
    }

    fn eigen_data(&self) -> Result<EigenData> {
        let nu = self
            .nu
            .clone()
            .ok_or_else(|| Error::Unavailable("eigendata of an unchecked chain".into()))?;
        let mass_nu = nu.clone();
        let mass = move |set: &TestSet| -> Result<f64> {
            Ok(mass_nu
                .iter()
                .enumerate()
                .filter(|(i, _)| set.contains(&State::Count(*i as u64 + 1)))
                .map(|(_, v)| v)
                .sum())
        };
        let density = move |s: &State| match *s {
            State::Count(k) if k >= 1 => Some(nu.get(k as usize - 1).copied().unwrap_or(0.0)),
            _ => None,
        };
        Ok(EigenData::new(
            self.lambda,
            Arc::new(|s: &State| s.scalar().unwrap_or(0.0)),
            Arc::new(mass),
            Scaling::One,
        )
        .with_density(Arc::new(density)))
    }

    /// E_n[M_t^2] = 1 + σ_ρ² (e^{λt} - 1) / (λ n).
    fn log_martingale_second_moment(&self, x: &State, s: f64) -> Option<f64> {
        let State::Count(n) = *x else { return None };
        if !(self.lambda > 0.0) {
            return None;
        }
        Some((self.sigma2 * (self.lambda * s).exp_m1() / (self.lambda * n as f64)).ln_1p())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn birth_death() -> GaltonWatson {
        GaltonWatson::new(vec![(-1, 0.6), (1, 0.4)]).unwrap()
    }

    #[test]
    fn event_rates_by_substitution() {
        let rho = [(-1, 0.6), (1, 0.4)];
        let r = gw_event_rates(1, &rho);
        assert_eq!(r, vec![(State::Absorbed, 0.6), (State::Count(2), 0.4)]);
        let r = gw_event_rates(5, &rho);
        assert!((r[0].1 - 3.0).abs() < 1e-15 && (r[1].1 - 2.0).abs() < 1e-15);
        let total: f64 = gw_event_rates(7, &[(-1, 0.5), (0, 0.2), (2, 0.3)])
            .iter()
            .map(|r| r.1)
            .sum();
        assert!((total - 7.0).abs() < 1e-12);
    }

    #[test]
    fn hypotheses_are_enforced() {
        assert!(GaltonWatson::new(vec![(-1, 0.4), (1, 0.6)]).is_err());
        assert!(GaltonWatson::new(vec![(-1, 1.0)]).is_err());
        let Err(Error::Config(list)) = GaltonWatson::new(vec![(-2, 0.5), (1, 0.6)]) else {
            panic!()
        };
        assert!(list.len() >= 2, "{list:?}");
    }

    #[test]
    fn birth_death_nu_is_geometric() {
        // ν(k) = (1 - q)^2 q^{k-1}, q = b/d.
        let gw = birth_death();
        let q: f64 = 0.4 / 0.6;
        let nu = gw.nu().unwrap();
        for k in 1..30 {
            let expect = (1.0 - q).powi(2) * q.powi(k as i32 - 1);
            assert!((nu[k - 1] - expect).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn nu_is_a_left_eigenvector_for_general_jumps() {
        let gw = GaltonWatson::new(vec![(-1, 0.7), (0, 0.1), (2, 0.2)]).unwrap();
        let nu = gw.nu().unwrap();
        let n = nu.len();
        let q = truncated_generator(gw.rho(), n);
        for j in 0..50 {
            let lhs: f64 = (0..n).map(|k| nu[k] * q[(k, j)]).sum::<f64>() + gw.lambda() * nu[j];
            assert!(lhs.abs() < 1e-12, "j={j} residual {lhs}");
        }
    }

    #[test]
    fn transition_density_conserves_mass_with_killing() {
        let gw = birth_death();
        let p: f64 = (1..=150u64)
            .map(|j| {
                gw.transition_density(&State::Count(2), &State::Count(j), 1.0)
                    .unwrap()
            })
            .sum();
        let mut rng = RandomStream::new(1);
        let n = 100_000;
        let alive = (0..n)
            .filter(|_| !gw.advance(&State::Count(2), 1.0, &mut rng).is_absorbed())
            .count() as f64
            / n as f64;
        assert!(p < 1.0);
        assert!(
            (p - alive).abs() < 4.0 * (alive * (1.0 - alive) / n as f64).sqrt(),
            "{p} {alive}"
        );
    }

    #[test]
    fn second_moment_closed_form_matches_simulation() {
        let gw = birth_death();
        let mut rng = RandomStream::new(5);
        let n = 200_000;
        let t = 1.5;
        let mean: f64 = (0..n)
            .map(|_| match gw.advance(&State::Count(3), t, &mut rng) {
                State::Count(k) => ((k as f64) / 3.0 * (gw.lambda() * t).exp()).powi(2),
                _ => 0.0,
            })
            .sum::<f64>()
            / n as f64;
        let exact = gw
            .log_martingale_second_moment(&State::Count(3), t)
            .unwrap()
            .exp();
        assert!((mean - exact).abs() < 0.02 * exact, "{mean} vs {exact}");
    }
}
