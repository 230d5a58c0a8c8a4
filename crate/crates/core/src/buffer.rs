//! Transitions and the FIFO replay buffer shared by every learner.

use rand::seq::index;
use rand::Rng;

use crate::env::{observation, Action, Pose, StepKpis, StepResult, TrajectoryEnv};
use crate::error::{usage, Result};

/// One `(s, a, r, s', done)` record with the localization needed to branch
/// model rollouts from `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Raw action delta.
    pub action: Action,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Threshold breach only; running out of episode length still bootstraps.
    pub done: bool,
    pub pose: Pose,
    /// Footpoint arc position at `s`.
    pub arc: f64,
    pub kpis: StepKpis,
}

impl Transition {
    /// Steps `env` once and records the transition from the pre-step state.
    pub fn record(env: &mut TrajectoryEnv, action: Action) -> Result<(Transition, StepResult)> {
        let Some(snap) = env.snapshot() else {
            return usage("step called before reset");
        };
        let r = env.step(action)?;
        let b = env.task().config.action_bound;
        let t = Transition {
            obs: observation(&snap.vehicle, &snap.deviation),
            action: Action::new(action.lat.clamp(-b, b), action.long.clamp(-b, b)),
            reward: r.reward,
            next_obs: r.observation.clone(),
            done: r.terminated,
            pose: snap.pose,
            arc: snap.footpoint.arc,
            kpis: r.info.kpis,
        };
        Ok((t, r))
    }
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    /// Slot overwritten next once full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::new(),
            capacity,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    /// `n` distinct indices drawn uniformly.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if n > self.items.len() {
            return usage(format!("batch of {n} requested from a buffer holding {}", self.items.len()));
        }
        Ok(index::sample(rng, self.items.len(), n).into_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        Ok(self.sample_indices(n, rng)?.into_iter().map(|i| &self.items[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(r: f64) -> Transition {
        Transition {
            obs: vec![r],
            action: Action::ZERO,
            reward: r,
            next_obs: vec![r],
            done: false,
            pose: Pose::default(),
            arc: 0.0,
            kpis: StepKpis::default(),
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3);
        for k in 0..5 {
            b.push(t(k as f64));
        }
        assert_eq!(b.len(), 3);
        let order: Vec<f64> = b.iter().map(|t| t.reward).collect();
        assert_eq!(order, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn batches_have_no_repeats() {
        let mut b = ReplayBuffer::new(50);
        for k in 0..50 {
            b.push(t(k as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let mut idx = b.sample_indices(50, &mut rng).unwrap();
            idx.sort();
            assert_eq!(idx, (0..50).collect::<Vec<_>>());
        }
        assert!(b.sample_indices(51, &mut rng).is_err());
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(100);
        for k in 0..100 {
            b.push(t(k as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 100];
        let draws = 100_000;
        for _ in 0..draws / 10 {
            for i in b.sample_indices(10, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let p = 0.01;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 5.0 * sd, "{c}");
        }
    }
}
