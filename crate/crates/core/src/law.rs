//! Offspring law and branching rate.

use crate::error::{Error, Result, Violations};
use crate::rng::RandomStream;

/// Offspring distribution together with the constant branching rate r.
///
/// Construction only checks that the pmf is a probability vector. The
/// supercriticality conditions `m1 > 1`, `m2 < inf` and `r(m1 - 1) > lambda`
/// depend on the motion and are checked by [`BranchingLaw::check_supercritical`]
/// when an experiment is configured; degenerate laws such as `P(m = 1) = 1`
/// remain usable by the engine.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchingLaw {
    pmf: Vec<(u32, f64)>,
    cumulative: Vec<f64>,
    rate: f64,
    m1: f64,
    m2: f64,
}

impl BranchingLaw {
    pub fn new(pmf: impl IntoIterator<Item = (u32, f64)>, rate: f64) -> Result<Self> {
        let mut pmf: Vec<(u32, f64)> = pmf.into_iter().collect();
        pmf.sort_by_key(|&(k, _)| k);
        let mut v = Violations::default();
        v.check(!pmf.is_empty(), || "offspring pmf is empty".into());
        v.check(rate.is_finite() && rate > 0.0, || {
            format!("branching rate must be positive and finite, got {rate}")
        });
        v.check(pmf.windows(2).all(|w| w[0].0 != w[1].0), || {
            "offspring counts must be distinct".into()
        });
        for &(k, p) in &pmf {
            v.check(p.is_finite() && p >= 0.0, || {
                format!("P(m = {k}) = {p} is not a probability")
            });
        }
        let total: f64 = pmf.iter().map(|&(_, p)| p).sum();
        v.check((total - 1.0).abs() <= 1e-12, || {
            format!("offspring probabilities sum to {total}, not 1")
        });
        v.into_result()?;

        let mut acc = 0.0;
        let cumulative = pmf
            .iter()
            .map(|&(_, p)| {
                acc += p;
                acc
            })
            .collect();
        let m1 = pmf.iter().map(|&(k, p)| k as f64 * p).sum();
        let m2 = pmf.iter().map(|&(k, p)| (k as f64).powi(2) * p).sum();
        Ok(BranchingLaw {
            pmf,
            cumulative,
            rate,
            m1,
            m2,
        })
    }

    /// Binary splitting: 0 children with probability `p0`, 2 otherwise.
    pub fn binary(p0: f64, rate: f64) -> Result<Self> {
        Self::new([(0, p0), (2, 1.0 - p0)], rate)
    }

    pub fn pmf(&self) -> &[(u32, f64)] {
        &self.pmf
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// E[m].
    pub fn m1(&self) -> f64 {
        self.m1
    }

    /// E[m^2].
    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn variance(&self) -> f64 {
        self.m2 - self.m1 * self.m1
    }

    /// Malthusian growth rate r(m1 - 1).
    pub fn growth_rate(&self) -> f64 {
        self.rate * (self.m1 - 1.0)
    }

    /// Rate (m2 - m1) r of the exponential splitting time of the two-spine.
    pub fn split_rate(&self) -> f64 {
        self.rate * (self.m2 - self.m1)
    }

    /// Coefficient [Var(m) + (m1 - 1)^2] r of the two-spine weight
    /// exp(coef * (E ∧ t)).
    pub fn pair_weight_rate(&self) -> f64 {
        (self.variance() + (self.m1 - 1.0).powi(2)) * self.rate
    }

    /// Offspring probability generating function.
    pub fn pgf(&self, s: f64) -> f64 {
        self.pmf.iter().map(|&(k, p)| p * s.powi(k as i32)).sum()
    }

    pub fn pgf_derivative(&self, s: f64) -> f64 {
        self.pmf
            .iter()
            .filter(|&&(k, _)| k > 0)
            .map(|&(k, p)| p * k as f64 * s.powi(k as i32 - 1))
            .sum()
    }

    pub fn sample_offspring(&self, rng: &mut RandomStream) -> u32 {
        let u = rng.uniform();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.pmf[idx.min(self.pmf.len() - 1)].0
    }

    /// Lists every violation of m1 > 1 and r(m1 - 1) > lambda.
    pub fn check_supercritical(&self, lambda: f64) -> Result<()> {
        let mut v = Violations::default();
        v.check(self.m1 > 1.0, || format!("m1 = {} must exceed 1", self.m1));
        v.check(self.m2.is_finite(), || "m2 must be finite".into());
        v.check(self.growth_rate() > lambda, || {
            format!(
                "r(m1 - 1) = {} must exceed the motion's lambda = {lambda}",
                self.growth_rate()
            )
        });
        v.into_result()
    }

    /// Rejects laws whose two-spine never splits.
    pub fn require_split(&self) -> Result<()> {
        if self.split_rate() > 0.0 {
            Ok(())
        } else {
            Err(Error::config(format!(
                "(m2 - m1) r = {} must be positive for the two-spine",
                self.split_rate()
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_binary_law() {
        let law = BranchingLaw::binary(0.2, 1.0).unwrap();
        assert!((law.m1() - 1.6).abs() < 1e-15);
        assert!((law.m2() - 3.2).abs() < 1e-15);
        assert!((law.split_rate() - 1.6).abs() < 1e-15);
        // Var(m) + (m1 - 1)^2 = m2 - 2 m1 + 1
        assert!((law.pair_weight_rate() - (3.2 - 3.2 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn pair_weight_differs_from_split_rate() {
        let law = BranchingLaw::new([(1, 0.5), (3, 0.5)], 2.0).unwrap();
        // m1 = 2, m2 = 5, Var = 1: weight (1 + 1) * 2 = 4, split (5 - 2) * 2 = 6
        assert!((law.pair_weight_rate() - 4.0).abs() < 1e-12);
        assert!((law.split_rate() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_pmf_with_all_violations() {
        let err = BranchingLaw::new([(1, 0.5), (1, 0.6)], -1.0).unwrap_err();
        let Error::Config(list) = err else { panic!() };
        assert_eq!(list.len(), 3, "{list:?}");
    }

    #[test]
    fn supercriticality_is_checked_against_lambda() {
        let law = BranchingLaw::binary(0.2, 1.0).unwrap();
        assert!(law.check_supercritical(0.5).is_ok());
        assert!(law.check_supercritical(0.61).is_err());
        let flat = BranchingLaw::new([(1, 1.0)], 1.0).unwrap();
        let Err(Error::Config(list)) = flat.check_supercritical(0.0) else {
            panic!()
        };
        assert_eq!(list.len(), 2);
        assert!(flat.require_split().is_err());
    }

    #[test]
    fn offspring_frequencies_match_pmf() {
        let law = BranchingLaw::new([(0, 0.1), (1, 0.3), (4, 0.6)], 1.0).unwrap();
        let mut rng = RandomStream::new(3);
        let n = 200_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[law.sample_offspring(&mut rng) as usize] += 1;
        }
        for &(k, p) in law.pmf() {
            let f = counts[k as usize] as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((f - p).abs() < 5.0 * se, "k={k} f={f} p={p}");
        }
        assert_eq!(counts[2] + counts[3], 0);
    }
}
