//! Event-driven simulation of the branching particle system.
//!
//! Each particle carries its own Exp(r) branching clock; a global min-heap
//! keyed by `(next_branch_time, id)` orders events. Motions advance lazily:
//! a particle's state is brought up to date only at its own branching event
//! and at snapshot times, using the motion's exact sampler over the elapsed
//! interval. Jump motions are advanced by Gillespie simulation over the same
//! interval, which is equivalent in law to racing motion jumps against the
//! branching clock since the two are independent.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Result, Violations};
use crate::law::BranchingLaw;
use crate::motion::MotionModel;
use crate::rng::RandomStream;
use crate::state::State;

pub const DEFAULT_POPULATION_CAP: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub birth_time: f64,
    pub state: State,
    pub next_branch_time: f64,
    /// Time at which `state` was last brought up to date.
    pub last_update: f64,
}

/// Min-heap adapter: the particle with the earliest clock, ties broken by id.
struct Scheduled(Particle);

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .next_branch_time
            .total_cmp(&self.0.next_branch_time)
            .then_with(|| other.0.id.cmp(&self.0.id))
    }
}

/// The population ξ_t at one snapshot time.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationSnapshot {
    pub time: f64,
    /// Live, non-absorbed states ordered by particle id.
    pub live_states: Vec<State>,
    /// Particles absorbed so far.
    pub absorbed_count: u64,
    /// Branching events with zero offspring so far.
    pub dead_count: u64,
    /// The population cap was hit at or before this time; `live_states` is
    /// then the population at the moment the cap was hit.
    pub truncated: bool,
}

impl PopulationSnapshot {
    /// |ξ_t|.
    pub fn size(&self) -> usize {
        self.live_states.len()
    }

    pub fn is_extinct(&self) -> bool {
        !self.truncated && self.live_states.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub horizon: f64,
    pub snapshot_times: Vec<f64>,
    pub population_cap: usize,
    pub seed: u64,
    pub replica_index: u64,
}

impl SimulationConfig {
    /// Snapshots at `times`, horizon at the last of them.
    pub fn at_times(times: Vec<f64>, seed: u64) -> Self {
        SimulationConfig {
            horizon: times.last().copied().unwrap_or(0.0),
            snapshot_times: times,
            population_cap: DEFAULT_POPULATION_CAP,
            seed,
            replica_index: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Violations::default();
        v.check(self.horizon.is_finite() && self.horizon > 0.0, || {
            format!("horizon {} must be positive", self.horizon)
        });
        v.check(!self.snapshot_times.is_empty(), || {
            "snapshot_times is empty".into()
        });
        v.check(self.snapshot_times.windows(2).all(|w| w[0] < w[1]), || {
            "snapshot_times must be strictly increasing".into()
        });
        v.check(
            self.snapshot_times
                .iter()
                .all(|&t| t > 0.0 && t <= self.horizon),
            || format!("snapshot_times must lie in (0, {}]", self.horizon),
        );
        v.check(self.population_cap >= 1, || {
            "population cap must be at least 1".into()
        });
        v.into_result()
    }
}

/// Simulates one replica and returns a snapshot at every configured time.
pub fn run_replica(
    motion: &MotionModel,
    law: &BranchingLaw,
    x0: &State,
    cfg: &SimulationConfig,
) -> Result<Vec<PopulationSnapshot>> {
    cfg.validate()?;
    motion.validate_state(x0)?;
    Ok(simulate(motion, law, x0, cfg))
}

fn simulate(
    motion: &MotionModel,
    law: &BranchingLaw,
    x0: &State,
    cfg: &SimulationConfig,
) -> Vec<PopulationSnapshot> {
    let mut rng = RandomStream::for_replica(cfg.seed, cfg.replica_index);
    let r = law.rate();
    let mut heap = BinaryHeap::new();
    heap.push(Scheduled(Particle {
        id: 0,
        parent_id: None,
        birth_time: 0.0,
        state: x0.clone(),
        next_branch_time: rng.exponential(r),
        last_update: 0.0,
    }));
    let mut next_id = 1u64;
    let mut absorbed = 0u64;
    let mut dead = 0u64;
    let mut truncated = false;
    let mut frozen: Vec<State> = Vec::new();
    let mut out = Vec::with_capacity(cfg.snapshot_times.len());

    for &ts in &cfg.snapshot_times {
        while !truncated {
            match heap.peek() {
                Some(p) if p.0.next_branch_time <= ts => {}
                _ => break,
            }
            let Scheduled(p) = heap.pop().expect("peeked");
            let t = p.next_branch_time;
            let state = motion.advance(&p.state, t - p.last_update, &mut rng);
            if state.is_absorbed() {
                absorbed += 1;
                continue;
            }
            let k = law.sample_offspring(&mut rng);
            if k == 0 {
                dead += 1;
            }
            for _ in 0..k {
                heap.push(Scheduled(Particle {
                    id: next_id,
                    parent_id: Some(p.id),
                    birth_time: t,
                    state: state.clone(),
                    next_branch_time: t + rng.exponential(r),
                    last_update: t,
                }));
                next_id += 1;
            }
            if heap.len() > cfg.population_cap {
                truncated = true;
                let mut live: Vec<Particle> = heap.drain().map(|s| s.0).collect();
                live.sort_by_key(|p| p.id);
                frozen = live.into_iter().map(|p| p.state).collect();
            }
        }
        if truncated {
            out.push(PopulationSnapshot {
                time: ts,
                live_states: frozen.clone(),
                absorbed_count: absorbed,
                dead_count: dead,
                truncated: true,
            });
            continue;
        }
        let mut live: Vec<Particle> = Vec::with_capacity(heap.len());
        for Scheduled(mut p) in heap.drain() {
            p.state = motion.advance(&p.state, ts - p.last_update, &mut rng);
            p.last_update = ts;
            if p.state.is_absorbed() {
                absorbed += 1;
            } else {
                live.push(p);
            }
        }
        live.sort_by_key(|p| p.id);
        out.push(PopulationSnapshot {
            time: ts,
            live_states: live.iter().map(|p| p.state.clone()).collect(),
            absorbed_count: absorbed,
            dead_count: dead,
            truncated: false,
        });
        heap.extend(live.into_iter().map(Scheduled));
    }
    out
}

/// Runs replicas `0..n` in parallel, mapping each replica's snapshots through
/// `f` as soon as it finishes. Results are returned in replica order.
pub fn run_replicas_map<T, F>(
    motion: &MotionModel,
    law: &BranchingLaw,
    x0: &State,
    cfg: &SimulationConfig,
    n: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, Vec<PopulationSnapshot>) -> T + Sync,
{
    cfg.validate()?;
    motion.validate_state(x0)?;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let cfg = SimulationConfig {
                replica_index: i,
                ..cfg.clone()
            };
            f(i, simulate(motion, law, x0, &cfg))
        })
        .collect())
}

/// |ξ_t| > 0 at each snapshot; truncated snapshots count as surviving.
pub fn survival_indicator(snapshots: &[PopulationSnapshot]) -> Vec<bool> {
    snapshots
        .iter()
        .map(|s| s.truncated || !s.live_states.is_empty())
        .collect()
}
