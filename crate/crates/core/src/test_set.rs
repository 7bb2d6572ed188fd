//! Test sets B, B' used to count particles and to evaluate the eigenmeasure.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::state::State;

pub type MembershipFn = Arc<dyn Fn(&State) -> bool + Send + Sync>;

/// A measurable set of non-absorbed states. Membership of
/// [`State::Absorbed`] is always false.
#[derive(Clone)]
pub enum TestSet {
    /// Open interval (a, b) of the scalar coordinate; either end may be
    /// infinite.
    Interval { a: f64, b: f64 },
    /// Explicit list of discrete states.
    FiniteSet(Vec<State>),
    /// Arbitrary membership oracle, with an optional known eigenmeasure mass.
    Predicate {
        name: String,
        test: MembershipFn,
        nu_mass: Option<f64>,
    },
}

impl TestSet {
    pub fn interval(a: f64, b: f64) -> Result<TestSet> {
        if a.is_nan() || b.is_nan() || a >= b {
            return Err(Error::invalid(format!("interval ({a}, {b}) is empty")));
        }
        Ok(TestSet::Interval { a, b })
    }

    pub fn finite(states: impl IntoIterator<Item = State>) -> TestSet {
        TestSet::FiniteSet(states.into_iter().collect())
    }

    pub fn predicate(
        name: impl Into<String>,
        test: impl Fn(&State) -> bool + Send + Sync + 'static,
        nu_mass: Option<f64>,
    ) -> TestSet {
        TestSet::Predicate {
            name: name.into(),
            test: Arc::new(test),
            nu_mass,
        }
    }

    /// The whole state space J.
    pub fn everything() -> TestSet {
        TestSet::predicate("J", |_| true, None)
    }

    pub fn contains(&self, s: &State) -> bool {
        if s.is_absorbed() {
            return false;
        }
        match self {
            TestSet::Interval { a, b } => s.scalar().is_some_and(|x| *a < x && x < *b),
            TestSet::FiniteSet(list) => list.contains(s),
            TestSet::Predicate { test, .. } => test(s),
        }
    }

    pub fn indicator(&self, s: &State) -> f64 {
        if self.contains(s) {
            1.0
        } else {
            0.0
        }
    }

    /// Number of states in `states` that belong to the set.
    pub fn count_in<'a>(&self, states: impl IntoIterator<Item = &'a State>) -> usize {
        states.into_iter().filter(|s| self.contains(s)).count()
    }
}

impl fmt::Debug for TestSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestSet::Interval { a, b } => write!(f, "({a}, {b})"),
            TestSet::FiniteSet(list) => f.debug_set().entries(list).finish(),
            TestSet::Predicate { name, nu_mass, .. } => f
                .debug_struct("Predicate")
                .field("name", name)
                .field("nu_mass", nu_mass)
                .finish(),
        }
    }
}

impl fmt::Display for TestSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestSet::Interval { a, b } => write!(f, "({a},{b})"),
            TestSet::FiniteSet(list) => {
                f.write_str("{")?;
                for (i, s) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{s}")?;
                }
                f.write_str("}")
            }
            TestSet::Predicate { name, .. } => f.write_str(name),
        }
    }
}
