//! Dyna-style learning: a SAC learner trained on real transitions mixed with
//! short branched rollouts of the learned ensemble.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::agent::{ActorCritic, BatchSource, UpdateStats};
use crate::buffer::{ReplayBuffer, Transition};
use crate::env::{observation, StepKpis, Task};
use crate::error::{config, usage, Result};
use crate::kv::KvMap;
use crate::model::{
    rate_dataset, split_predict_sampled, DynamicsModel, MemberSelect, ModelState, ModelTrainConfig,
    ProbabilisticEnsemble, TrainReport,
};

#[derive(Clone, Debug, PartialEq)]
pub struct MbpoConfig {
    /// Steps per branch.
    pub rollout_length: usize,
    /// Branches per retrain.
    pub rollouts: usize,
    pub capacity: usize,
    /// Share of real transitions in each learner batch.
    pub real_fraction: f64,
}

impl Default for MbpoConfig {
    fn default() -> Self {
        Self {
            rollout_length: 3,
            rollouts: 400,
            capacity: 100_000,
            real_fraction: 0.05,
        }
    }
}

impl MbpoConfig {
    pub fn validate(&self, batch_size: usize) -> Result<()> {
        if self.rollout_length == 0 || self.rollouts == 0 {
            return config("mbpo.rollout_length and mbpo.rollouts must be positive");
        }
        if !(0.0..=1.0).contains(&self.real_fraction) {
            return config("mbpo.real_fraction must lie in [0, 1]");
        }
        if self.capacity < batch_size {
            return config(format!(
                "mbpo.capacity {} is below the learner batch size {batch_size}",
                self.capacity
            ));
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &mut KvMap) -> Result<()> {
        kv.take("mbpo.rollout_length", &mut self.rollout_length)?;
        kv.take("mbpo.rollouts", &mut self.rollouts)?;
        kv.take("mbpo.capacity", &mut self.capacity)?;
        kv.take("mbpo.real_fraction", &mut self.real_fraction)?;
        Ok(())
    }

    pub fn write_kv(&self, kv: &mut KvMap) {
        kv.insert("mbpo.rollout_length", self.rollout_length);
        kv.insert("mbpo.rollouts", self.rollouts);
        kv.insert("mbpo.capacity", self.capacity);
        kv.insert("mbpo.real_fraction", self.real_fraction);
    }
}

/// Real transitions in a batch of `n`.
pub fn real_share(n: usize, real_fraction: f64) -> usize {
    ((real_fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// `⌈ρ·n⌉` real and the rest synthetic transitions, shuffled.
pub fn mixed_batch<'a, R: Rng + ?Sized>(
    real: &'a ReplayBuffer,
    synthetic: &'a ReplayBuffer,
    n: usize,
    real_fraction: f64,
    rng: &mut R,
) -> Result<Vec<&'a Transition>> {
    let k = real_share(n, real_fraction);
    let mut out = real.sample(k, rng)?;
    out.extend(synthetic.sample(n - k, rng)?);
    out.shuffle(rng);
    Ok(out)
}

/// Batch source over a real and a synthetic buffer.
pub struct Mixed<'a> {
    pub real: &'a ReplayBuffer,
    pub synthetic: &'a ReplayBuffer,
    pub real_fraction: f64,
}

impl BatchSource for Mixed<'_> {
    fn can_draw(&self, n: usize) -> bool {
        let k = real_share(n, self.real_fraction);
        self.real.len() >= k && self.synthetic.len() >= n - k
    }

    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        mixed_batch(self.real, self.synthetic, n, self.real_fraction, rng)
    }
}

/// Rolls `cfg.rollouts` branches of up to `cfg.rollout_length` steps from
/// uniformly drawn real states, each step with a freshly drawn ensemble
/// member and a policy sample. Branches stop after an imagined breach.
/// Returns the number of transitions appended.
pub fn branch_rollouts<M: DynamicsModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    task: &Task,
    real: &ReplayBuffer,
    policy: &ActorCritic,
    cfg: &MbpoConfig,
    synthetic: &mut ReplayBuffer,
    rng: &mut R,
) -> Result<usize> {
    if real.is_empty() {
        return usage("branch rollouts need at least one real transition");
    }
    let members = model.num_members();
    let mut added = 0;
    for _ in 0..cfg.rollouts {
        let start = real.get(rng.random_range(0..real.len()));
        let mut s = ModelState::from_transition(start);
        let (_, d0) = task.match_trajectory(&s.pose, &s.vehicle, Some(s.arc));
        if task.breached(&d0) {
            continue;
        }
        let mut obs = start.obs.clone();
        for _ in 0..cfg.rollout_length {
            let a = policy.act(&obs, false, rng)?;
            let m = rng.random_range(0..members);
            let out = split_predict_sampled(model, task, &s, a, MemberSelect::Member(m), rng)?;
            let next_obs = observation(&out.state.vehicle, &out.deviation);
            synthetic.push(Transition {
                obs,
                action: out.state.vehicle.history[0],
                reward: out.reward,
                next_obs: next_obs.clone(),
                done: out.breached,
                pose: s.pose,
                arc: s.arc,
                kpis: StepKpis::new(&out.state.vehicle, &out.deviation, out.state.vehicle.history[0]),
            });
            added += 1;
            if out.breached {
                break;
            }
            obs = next_obs;
            s = out.state;
        }
    }
    Ok(added)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MbpoStepStats {
    pub model_report: Option<TrainReport>,
    pub synthetic_added: usize,
    pub update: UpdateStats,
}

/// The MBPO state machine: ensemble, learner and synthetic buffer.
#[derive(Clone, Debug)]
pub struct Mbpo {
    pub config: MbpoConfig,
    pub train: ModelTrainConfig,
    pub model: ProbabilisticEnsemble,
    pub learner: ActorCritic,
    pub synthetic: ReplayBuffer,
    steps: u64,
    trainings: u64,
}

impl Mbpo {
    pub fn new(
        config: MbpoConfig,
        train: ModelTrainConfig,
        model: ProbabilisticEnsemble,
        learner: ActorCritic,
    ) -> Result<Self> {
        config.validate(learner.config().batch_size)?;
        train.validate()?;
        Ok(Self {
            synthetic: ReplayBuffer::new(config.capacity),
            config,
            train,
            model,
            learner,
            steps: 0,
            trainings: 0,
        })
    }

    /// Real steps observed and ensemble trainings so far.
    pub fn counts(&self) -> (u64, u64) {
        (self.steps, self.trainings)
    }

    /// Stores the real transition; every `retrain_every` steps retrains the
    /// ensemble on the real buffer and regenerates branches.
    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        task: &Task,
        real: &mut ReplayBuffer,
        transition: Transition,
        rng: &mut R,
    ) -> Result<MbpoStepStats> {
        real.push(transition);
        self.steps += 1;
        let mut stats = MbpoStepStats::default();
        if self.steps.is_multiple_of(self.train.retrain_every as u64) {
            let (x, y, n) = rate_dataset(real.iter(), task.config.dt);
            stats.model_report = Some(self.model.train(&x, &y, n, &self.train, rng)?);
            self.trainings += 1;
            stats.synthetic_added =
                branch_rollouts(&self.model, task, real, &self.learner, &self.config, &mut self.synthetic, rng)?;
        }
        Ok(stats)
    }

    /// Learner update on mixed batches.
    pub fn learn<R: Rng + ?Sized>(&mut self, real: &ReplayBuffer, rng: &mut R) -> Result<UpdateStats> {
        let source = Mixed {
            real,
            synthetic: &self.synthetic,
            real_fraction: self.config.real_fraction,
        };
        self.learner.update(&source, rng)
    }

    pub fn mbpo_step<R: Rng + ?Sized>(
        &mut self,
        task: &Task,
        real: &mut ReplayBuffer,
        transition: Transition,
        rng: &mut R,
    ) -> Result<MbpoStepStats> {
        let mut stats = self.observe(task, real, transition, rng)?;
        stats.update = self.learn(real, rng)?;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests;
