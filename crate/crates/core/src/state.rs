//! Points of a motion's state space.

use std::fmt;

/// A point of a motion's state space, or the absorbed marker.
///
/// Absorption is always represented by [`State::Absorbed`]: a killed
/// diffusion never holds `RealPos(0.0)`, a Galton–Watson chain never holds
/// `Count(0)` and the contact process never holds an empty configuration.
/// Use the checked constructors to get this mapping for free.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    /// Strictly positive position of a diffusion killed at 0.
    RealPos(f64),
    /// Position on the whole real line.
    Real(f64),
    /// Positive population size.
    Count(u64),
    /// State index of a finite chain.
    Site(usize),
    /// Non-empty contact-process configuration modulo translations.
    Lattice(LatticeConfig),
    Absorbed,
}

impl State {
    /// `RealPos(x)` for `x > 0`, `Absorbed` otherwise.
    pub fn real_pos(x: f64) -> State {
        if x > 0.0 {
            State::RealPos(x)
        } else {
            State::Absorbed
        }
    }

    /// `Count(n)` for `n >= 1`, `Absorbed` for 0.
    pub fn count(n: u64) -> State {
        if n == 0 {
            State::Absorbed
        } else {
            State::Count(n)
        }
    }

    pub fn is_absorbed(&self) -> bool {
        matches!(self, State::Absorbed)
    }

    /// Numeric coordinate for one-dimensional states.
    pub fn scalar(&self) -> Option<f64> {
        match *self {
            State::RealPos(x) | State::Real(x) => Some(x),
            State::Count(n) => Some(n as f64),
            State::Site(i) => Some(i as f64),
            State::Lattice(_) | State::Absorbed => None,
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::RealPos(x) | State::Real(x) => write!(f, "{x}"),
            State::Count(n) => write!(f, "{n}"),
            State::Site(i) => write!(f, "site {i}"),
            State::Lattice(c) => write!(f, "{c}"),
            State::Absorbed => f.write_str("absorbed"),
        }
    }
}

/// A finite non-empty subset of Z^d in canonical form: translated so that the
/// coordinate-wise minimum is the origin, sites sorted lexicographically and
/// without duplicates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticeConfig {
    dim: usize,
    sites: Vec<Vec<i64>>,
}

impl LatticeConfig {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sites(&self) -> &[Vec<i64>] {
        &self.sites
    }

    /// Number of infected sites.
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: &[i64]) -> bool {
        self.sites
            .binary_search_by(|s| s.as_slice().cmp(site))
            .is_ok()
    }
}

impl fmt::Display for LatticeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, s) in self.sites.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s:?}")?;
        }
        f.write_str("}")
    }
}

/// Canonical representative of the translation class of `sites` in Z^`dim`.
///
/// Returns [`State::Absorbed`] for the empty configuration. Panics if a site
/// does not have `dim` coordinates.
pub fn canonicalize(dim: usize, sites: &[Vec<i64>]) -> State {
    if sites.is_empty() {
        return State::Absorbed;
    }
    let mut min = vec![i64::MAX; dim];
    for s in sites {
        assert_eq!(s.len(), dim, "site {s:?} is not in Z^{dim}");
        for (m, &c) in min.iter_mut().zip(s) {
            *m = (*m).min(c);
        }
    }
    let mut out: Vec<Vec<i64>> = sites
        .iter()
        .map(|s| s.iter().zip(&min).map(|(c, m)| c - m).collect())
        .collect();
    out.sort_unstable();
    out.dedup();
    State::Lattice(LatticeConfig { dim, sites: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn checked_constructors_map_boundary_to_absorbed() {
        assert_eq!(State::real_pos(0.0), State::Absorbed);
        assert_eq!(State::real_pos(-1.0), State::Absorbed);
        assert_eq!(State::real_pos(0.5), State::RealPos(0.5));
        assert_eq!(State::count(0), State::Absorbed);
        assert_eq!(State::count(3), State::Count(3));
        assert_eq!(canonicalize(2, &[]), State::Absorbed);
    }

    #[test]
    fn canonical_shift_to_origin() {
        let c = canonicalize(2, &[vec![3, 3], vec![3, 4]]);
        let State::Lattice(c) = c else { panic!() };
        assert_eq!(c.sites(), &[vec![0, 0], vec![0, 1]]);
    }

    fn config() -> impl Strategy<Value = Vec<Vec<i64>>> {
        prop::collection::vec(prop::collection::vec(-20i64..20, 2), 1..8)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn canonicalize_is_idempotent(sites in config()) {
            let once = canonicalize(2, &sites);
            let State::Lattice(c) = &once else { unreachable!() };
            let twice = canonicalize(2, c.sites());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn canonicalize_is_translation_invariant(sites in config(), dx in -50i64..50, dy in -50i64..50) {
            let shifted: Vec<Vec<i64>> = sites.iter().map(|s| vec![s[0] + dx, s[1] + dy]).collect();
            prop_assert_eq!(canonicalize(2, &sites), canonicalize(2, &shifted));
        }
    }
}
