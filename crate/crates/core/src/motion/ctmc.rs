//! Irreducible finite-state chain without absorption: λ = 0, h ≡ 1 and ν the
//! stationary law.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::Motion;
use crate::eigen::{EigenData, Scaling};
use crate::error::{Error, Result, Violations};
use crate::rng::RandomStream;
use crate::state::State;
use crate::test_set::TestSet;

#[derive(Clone, Debug)]
pub struct ErgodicCtmc {
    q: DMatrix<f64>,
    stationary: Arc<Vec<f64>>,
}

impl ErgodicCtmc {
    /// Validates the rate matrix (square, non-negative off-diagonal, zero row
    /// sums, irreducible) and solves νQ = 0.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut v = Violations::default();
        v.check(n >= 1, || "rate matrix is empty".into());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                v.push(format!("row {i} has {} entries, expected {n}", row.len()));
                continue;
            }
            for (j, &q) in row.iter().enumerate() {
                v.check(q.is_finite(), || format!("Q[{i}][{j}] = {q} is not finite"));
                v.check(i == j || q >= 0.0, || {
                    format!("Q[{i}][{j}] = {q} is a negative rate")
                });
            }
            let sum: f64 = row.iter().sum();
            v.check(sum.abs() <= 1e-9, || {
                format!("row {i} sums to {sum}, not 0")
            });
        }
        v.into_result()?;
        let q = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        if !strongly_connected(&q) {
            return Err(Error::config("rate matrix is not irreducible"));
        }
        let stationary = Arc::new(stationary_law(&q)?);
        Ok(ErgodicCtmc { q, stationary })
    }

    /// Five-state test bed.
    pub fn default_five_state() -> Self {
        Self::new(vec![
            vec![-1.0, 0.5, 0.3, 0.2, 0.0],
            vec![0.4, -1.2, 0.5, 0.0, 0.3],
            vec![0.0, 0.6, -1.5, 0.6, 0.3],
            vec![0.2, 0.0, 0.7, -1.1, 0.2],
            vec![0.5, 0.3, 0.0, 0.4, -1.2],
        ])
        .expect("default rate matrix is valid")
    }

    pub fn len(&self) -> usize {
        self.q.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.q.nrows() == 0
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }
}

fn strongly_connected(q: &DMatrix<f64>) -> bool {
    let n = q.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let rate = if forward { q[(i, j)] } else { q[(j, i)] };
                if j != i && rate > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

fn stationary_law(q: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = q.nrows();
    let mut a = q.transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let nu = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::config("stationary system is singular"))?;
    Ok(nu.iter().map(|v| v.max(0.0)).collect())
}

impl Motion for ErgodicCtmc {
    fn name(&self) -> &'static str {
        "ergodic-ctmc"
    }

    fn is_jump_process(&self) -> bool {
        true
    }

    fn validate_state(&self, x: &State) -> Result<()> {
        match *x {
            State::Site(i) if i < self.len() => Ok(()),
            _ => Err(Error::invalid(format!(
                "ergodic-ctmc needs Site(i) with i < {}, got {x:?}",
                self.len()
            ))),
        }
    }

    fn advance(&self, x: &State, dt: f64, rng: &mut RandomStream) -> State {
        let State::Site(mut i) = *x else {
            return x.clone();
        };
        let n = self.len();
        let mut t = 0.0;
        loop {
            let exit = -self.q[(i, i)];
            t += rng.exponential(exit);
            if t > dt {
                return State::Site(i);
            }
            let target = rng.uniform() * exit;
            let mut acc = 0.0;
            let mut next = i;
            for j in (0..n).filter(|&j| j != i) {
                acc += self.q[(i, j)];
                next = j;
                if target < acc {
                    break;
                }
            }
            i = next;
        }
    }

    fn jump_rates(&self, x: &State) -> Option<Vec<(State, f64)>> {
        let State::Site(i) = *x else {
            return Some(Vec::new());
        };
        Some(
            (0..self.len())
                .filter(|&j| j != i && self.q[(i, j)] > 0.0)
                .map(|j| (State::Site(j), self.q[(i, j)]))
                .collect(),
        )
    }

    /// Entry (x, y) of exp(Qt).
    fn transition_density(&self, x: &State, y: &State, t: f64) -> Option<f64> {
        let (&State::Site(i), &State::Site(j)) = (x, y) else {
            return None;
        };
        if i >= self.len() || j >= self.len() {
            return None;
        }
        Some((&self.q * t).exp()[(i, j)].max(0.0))
    }

    fn eigen_data(&self) -> Result<EigenData> {
        let nu = self.stationary.clone();
        let mass_nu = nu.clone();
        let mass = move |set: &TestSet| -> Result<f64> {
            Ok(mass_nu
                .iter()
                .enumerate()
                .filter(|(i, _)| set.contains(&State::Site(*i)))
                .map(|(_, v)| v)
                .sum())
        };
        let density = move |s: &State| match *s {
            State::Site(i) => Some(nu.get(i).copied().unwrap_or(0.0)),
            _ => None,
        };
        Ok(
            EigenData::new(0.0, Arc::new(|_: &State| 1.0), Arc::new(mass), Scaling::One)
                .with_density(Arc::new(density)),
        )
    }

    fn sample_tilted(&self, x: &State, t: f64, rng: &mut RandomStream) -> Option<State> {
        Some(self.advance(x, t, rng))
    }

    fn log_martingale_second_moment(&self, _x: &State, _s: f64) -> Option<f64> {
        Some(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_law_solves_balance() {
        let m = ErgodicCtmc::default_five_state();
        let nu = m.stationary();
        assert!((nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 0..5 {
            let flow: f64 = (0..5).map(|i| nu[i] * m.rates()[(i, j)]).sum();
            assert!(flow.abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_reducible_and_malformed_matrices() {
        assert!(ErgodicCtmc::new(vec![vec![-1.0, 1.0], vec![0.0, 0.0]]).is_err());
        let Err(Error::Config(list)) = ErgodicCtmc::new(vec![vec![-1.0, 0.5], vec![-0.1, 0.0]])
        else {
            panic!()
        };
        assert!(list.len() >= 2, "{list:?}");
    }

    #[test]
    fn transition_matrix_rows_sum_to_one() {
        let m = ErgodicCtmc::default_five_state();
        for i in 0..5 {
            let s: f64 = (0..5)
                .map(|j| {
                    m.transition_density(&State::Site(i), &State::Site(j), 0.7)
                        .unwrap()
                })
                .sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn simulated_occupation_matches_matrix_exponential() {
        let m = ErgodicCtmc::default_five_state();
        let mut rng = RandomStream::new(11);
        let n = 200_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            let State::Site(j) = m.advance(&State::Site(0), 1.3, &mut rng) else {
                panic!()
            };
            counts[j] += 1;
        }
        for (j, &c) in counts.iter().enumerate() {
            let p = m
                .transition_density(&State::Site(0), &State::Site(j), 1.3)
                .unwrap();
            let f = c as f64 / n as f64;
            assert!(
                (f - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-9,
                "j={j}"
            );
        }
    }
}
