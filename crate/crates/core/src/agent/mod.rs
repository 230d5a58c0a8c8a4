//! Off-policy actor-critic learners. SAC and REDQ are the same machinery
//! with different critic counts, in-target subset sizes and update ratios.

mod losses;

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

pub use losses::{
    critic_inputs, critic_loss, critic_subset, policy_loss, policy_mean_action, sample_policy, td_targets,
    temperature_loss, CriticReduce, PolicyLoss, PolicyObjective, PolicySamples,
};

use crate::buffer::{ReplayBuffer, Transition};
use crate::env::Action;
use crate::error::{config, usage, Error, Result};
use crate::kv::KvMap;
use crate::nn::checkpoint::{read_params, write_params};
use crate::nn::{soft_update, AdamConfig, AdamState, Head, MlpParams};

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    /// Critic count N.
    pub critics: usize,
    /// In-target subset size M.
    pub subset: usize,
    /// Critic rounds per environment step.
    pub utd: usize,
    pub gamma: f64,
    pub tau: f64,
    pub target_entropy: f64,
    pub batch_size: usize,
    pub reg_lat: f64,
    pub reg_long: f64,
    pub policy_layers: usize,
    pub policy_nodes: usize,
    pub critic_layers: usize,
    pub critic_nodes: usize,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub temperature_lr: f64,
    pub initial_temperature: f64,
    pub policy_reduce: CriticReduce,
    /// Multiplies environment rewards and the action penalty before learning.
    pub reward_scale: f64,
}

impl AgentConfig {
    pub fn sac() -> Self {
        Self {
            critics: 2,
            subset: 2,
            utd: 1,
            gamma: 0.99,
            tau: 0.005,
            target_entropy: -2.0,
            batch_size: 512,
            reg_lat: 100.0,
            reg_long: 100.0,
            policy_layers: 3,
            policy_nodes: 512,
            critic_layers: 3,
            critic_nodes: 512,
            policy_lr: 3e-4,
            critic_lr: 3e-4,
            temperature_lr: 3e-4,
            initial_temperature: 1.0,
            policy_reduce: CriticReduce::Min,
            reward_scale: 0.01,
        }
    }

    pub fn redq() -> Self {
        Self {
            critics: 10,
            subset: 2,
            utd: 20,
            policy_reduce: CriticReduce::Mean,
            ..Self::sac()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.subset && self.subset <= self.critics) {
            return config(format!(
                "agent.subset must lie in 1..=agent.critics, got {} of {}",
                self.subset, self.critics
            ));
        }
        if self.utd == 0 || self.batch_size == 0 {
            return config("agent.utd and agent.batch_size must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return config("agent.gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return config("agent.tau must lie in (0, 1]");
        }
        if self.policy_nodes == 0 || self.critic_nodes == 0 {
            return config("agent hidden layer widths must be positive");
        }
        if !(self.reg_lat >= 0.0 && self.reg_long >= 0.0) {
            return config("agent action regularisation weights must be non-negative");
        }
        for (k, v) in [
            ("policy_lr", self.policy_lr),
            ("critic_lr", self.critic_lr),
            ("temperature_lr", self.temperature_lr),
            ("initial_temperature", self.initial_temperature),
            ("reward_scale", self.reward_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return config(format!("agent.{k} must be positive, got {v}"));
            }
        }
        if !self.target_entropy.is_finite() {
            return config("agent.target_entropy must be finite");
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &mut KvMap) -> Result<()> {
        kv.take("agent.critics", &mut self.critics)?;
        kv.take("agent.subset", &mut self.subset)?;
        kv.take("agent.utd", &mut self.utd)?;
        kv.take("agent.gamma", &mut self.gamma)?;
        kv.take("agent.tau", &mut self.tau)?;
        kv.take("agent.target_entropy", &mut self.target_entropy)?;
        kv.take("agent.batch_size", &mut self.batch_size)?;
        kv.take("agent.reg_lat", &mut self.reg_lat)?;
        kv.take("agent.reg_long", &mut self.reg_long)?;
        kv.take("agent.policy_layers", &mut self.policy_layers)?;
        kv.take("agent.policy_nodes", &mut self.policy_nodes)?;
        kv.take("agent.critic_layers", &mut self.critic_layers)?;
        kv.take("agent.critic_nodes", &mut self.critic_nodes)?;
        kv.take("agent.policy_lr", &mut self.policy_lr)?;
        kv.take("agent.critic_lr", &mut self.critic_lr)?;
        kv.take("agent.temperature_lr", &mut self.temperature_lr)?;
        kv.take("agent.initial_temperature", &mut self.initial_temperature)?;
        kv.take("agent.policy_reduce", &mut self.policy_reduce)?;
        kv.take("agent.reward_scale", &mut self.reward_scale)?;
        Ok(())
    }

    pub fn write_kv(&self, kv: &mut KvMap) {
        kv.insert("agent.critics", self.critics);
        kv.insert("agent.subset", self.subset);
        kv.insert("agent.utd", self.utd);
        kv.insert("agent.gamma", self.gamma);
        kv.insert("agent.tau", self.tau);
        kv.insert("agent.target_entropy", self.target_entropy);
        kv.insert("agent.batch_size", self.batch_size);
        kv.insert("agent.reg_lat", self.reg_lat);
        kv.insert("agent.reg_long", self.reg_long);
        kv.insert("agent.policy_layers", self.policy_layers);
        kv.insert("agent.policy_nodes", self.policy_nodes);
        kv.insert("agent.critic_layers", self.critic_layers);
        kv.insert("agent.critic_nodes", self.critic_nodes);
        kv.insert("agent.policy_lr", self.policy_lr);
        kv.insert("agent.critic_lr", self.critic_lr);
        kv.insert("agent.temperature_lr", self.temperature_lr);
        kv.insert("agent.initial_temperature", self.initial_temperature);
        kv.insert("agent.policy_reduce", self.policy_reduce.tag());
        kv.insert("agent.reward_scale", self.reward_scale);
    }
}

/// Anything a learner can draw training batches from.
pub trait BatchSource {
    /// Whether a batch of `n` can be drawn.
    fn can_draw(&self, n: usize) -> bool;
    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>>;
}

impl BatchSource for ReplayBuffer {
    fn can_draw(&self, n: usize) -> bool {
        self.len() >= n
    }

    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        self.sample(n, rng)
    }
}

/// A batch in network units.
#[derive(Clone, Debug)]
pub struct Batch {
    pub size: usize,
    pub obs: Vec<f64>,
    /// Normalised actions, `size × 2`.
    pub actions: Vec<f64>,
    /// Scaled rewards.
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub done: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_rounds: usize,
    pub policy_updates: usize,
    pub critic_loss: f64,
    pub policy_loss: f64,
    pub temperature: f64,
    pub entropy: f64,
}

#[derive(Clone, Debug)]
pub struct ActorCritic {
    config: AgentConfig,
    action_bound: f64,
    obs_scale: Vec<f64>,
    policy: MlpParams,
    critics: Vec<MlpParams>,
    targets: Vec<MlpParams>,
    log_temperature: f64,
    policy_opt: AdamState,
    critic_opts: Vec<AdamState>,
    temperature_opt: AdamState,
    critic_rounds: u64,
    policy_updates: u64,
}

fn standard_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

impl ActorCritic {
    /// `obs_scale` holds one divisor per observation entry; `action_bound`
    /// maps normalised actions to raw deltas.
    pub fn new<R: Rng + ?Sized>(cfg: AgentConfig, obs_scale: Vec<f64>, action_bound: f64, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if obs_scale.is_empty() || obs_scale.iter().any(|s| !(*s > 0.0)) {
            return config("observation scale entries must be positive");
        }
        if !(action_bound > 0.0) {
            return config("action bound must be positive");
        }
        let od = obs_scale.len();
        let policy = MlpParams::with_hidden(
            od,
            cfg.policy_layers,
            cfg.policy_nodes,
            4,
            Head::squashed_gaussian(),
            rng,
        )?;
        let mut critics = Vec::with_capacity(cfg.critics);
        for _ in 0..cfg.critics {
            critics.push(MlpParams::with_hidden(
                od + 2,
                cfg.critic_layers,
                cfg.critic_nodes,
                1,
                Head::Linear,
                rng,
            )?);
        }
        Ok(Self::from_parts(cfg, obs_scale, action_bound, policy, critics.clone(), critics, None))
    }

    fn from_parts(
        config: AgentConfig,
        obs_scale: Vec<f64>,
        action_bound: f64,
        policy: MlpParams,
        critics: Vec<MlpParams>,
        targets: Vec<MlpParams>,
        log_temperature: Option<f64>,
    ) -> Self {
        let policy_opt = AdamState::new(policy.num_params(), AdamConfig::with_step_size(config.policy_lr));
        let critic_opts = critics
            .iter()
            .map(|c| AdamState::new(c.num_params(), AdamConfig::with_step_size(config.critic_lr)))
            .collect();
        Self {
            log_temperature: log_temperature.unwrap_or(config.initial_temperature.ln()),
            temperature_opt: AdamState::new(1, AdamConfig::with_step_size(config.temperature_lr)),
            config,
            action_bound,
            obs_scale,
            policy,
            critics,
            targets,
            policy_opt,
            critic_opts,
            critic_rounds: 0,
            policy_updates: 0,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn action_bound(&self) -> f64 {
        self.action_bound
    }

    pub fn policy(&self) -> &MlpParams {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut MlpParams {
        &mut self.policy
    }

    pub fn critics(&self) -> &[MlpParams] {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut [MlpParams] {
        &mut self.critics
    }

    pub fn targets(&self) -> &[MlpParams] {
        &self.targets
    }

    pub fn targets_mut(&mut self) -> &mut [MlpParams] {
        &mut self.targets
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature.exp()
    }

    pub fn log_temperature(&self) -> f64 {
        self.log_temperature
    }

    pub fn set_log_temperature(&mut self, v: f64) {
        self.log_temperature = v;
    }

    /// Critic rounds and policy updates performed so far.
    pub fn update_counts(&self) -> (u64, u64) {
        (self.critic_rounds, self.policy_updates)
    }

    pub fn scale_observation(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter().zip(&self.obs_scale).map(|(o, s)| o / s).collect()
    }

    /// Raw action delta for a raw observation; `deterministic` uses the
    /// policy mean.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<Action> {
        if obs.len() != self.obs_scale.len() {
            return usage(format!("observation has {} entries, agent expects {}", obs.len(), self.obs_scale.len()));
        }
        let x = self.scale_observation(obs);
        let a = if deterministic {
            policy_mean_action(&self.policy, &x)?
        } else {
            sample_policy(&self.policy, &x, &standard_normals(2, rng), 1)?.actions
        };
        Ok(Action::new(self.action_bound * a[0], self.action_bound * a[1]))
    }

    /// Raw actions for many raw observations at once, sampled.
    pub fn act_batch<R: Rng + ?Sized>(&self, obs: &[f64], n: usize, rng: &mut R) -> Result<Vec<Action>> {
        let x: Vec<f64> = obs
            .chunks(self.obs_scale.len())
            .flat_map(|o| self.scale_observation(o))
            .collect();
        let s = sample_policy(&self.policy, &x, &standard_normals(2 * n, rng), n)?;
        Ok(s.actions
            .chunks(2)
            .map(|a| Action::new(self.action_bound * a[0], self.action_bound * a[1]))
            .collect())
    }

    pub fn make_batch(&self, items: &[&Transition]) -> Batch {
        let size = items.len();
        let od = self.obs_scale.len();
        let mut b = Batch {
            size,
            obs: Vec::with_capacity(size * od),
            actions: Vec::with_capacity(2 * size),
            rewards: Vec::with_capacity(size),
            next_obs: Vec::with_capacity(size * od),
            done: Vec::with_capacity(size),
        };
        for t in items {
            b.obs.extend(self.scale_observation(&t.obs));
            b.actions.push(t.action.lat / self.action_bound);
            b.actions.push(t.action.long / self.action_bound);
            b.rewards.push(self.config.reward_scale * t.reward);
            b.next_obs.extend(self.scale_observation(&t.next_obs));
            b.done.push(if t.done { 1.0 } else { 0.0 });
        }
        b
    }

    /// TD targets with a fresh random subset of target critics.
    pub fn compute_target<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<Vec<f64>> {
        let subset = critic_subset(self.config.critics, self.config.subset, rng);
        let noise = standard_normals(2 * batch.size, rng);
        td_targets(
            &self.policy,
            &self.targets,
            &subset,
            &batch.rewards,
            &batch.next_obs,
            &batch.done,
            &noise,
            self.config.gamma,
            self.temperature(),
        )
    }

    /// One Adam step per online critic towards `targets`; returns the mean loss.
    pub fn critic_update(&mut self, batch: &Batch, targets: &[f64]) -> Result<f64> {
        let x = critic_inputs(&batch.obs, &batch.actions, batch.size);
        let mut total = 0.0;
        for (c, opt) in self.critics.iter_mut().zip(&mut self.critic_opts) {
            let (l, g) = critic_loss(c, &x, targets)?;
            opt.step(c.params_mut(), &g)?;
            total += l;
        }
        Ok(total / self.critics.len() as f64)
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        for (c, t) in self.critics.iter().zip(&mut self.targets) {
            soft_update(c, t, self.config.tau)?;
        }
        Ok(())
    }

    fn objective(&self) -> PolicyObjective {
        let s = self.config.reward_scale;
        PolicyObjective {
            temperature: self.temperature(),
            reduce: self.config.policy_reduce,
            reg_weights: [s * self.config.reg_lat, s * self.config.reg_long],
            action_bound: self.action_bound,
        }
    }

    /// One Adam step on the policy; returns the loss and the sampled log-densities.
    pub fn policy_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<(f64, Vec<f64>)> {
        let noise = standard_normals(2 * batch.size, rng);
        let out = policy_loss(&self.policy, &self.critics, &batch.obs, &noise, batch.size, &self.objective())?;
        self.policy_opt.step(self.policy.params_mut(), &out.grads)?;
        Ok((out.loss, out.log_probs))
    }

    pub fn temperature_update(&mut self, log_probs: &[f64]) -> Result<()> {
        let (_, g) = temperature_loss(self.log_temperature, log_probs, self.config.target_entropy);
        let mut p = [self.log_temperature];
        self.temperature_opt.step(&mut p, &[g])?;
        self.log_temperature = p[0];
        Ok(())
    }

    /// `G` critic rounds followed by one policy and one temperature update.
    /// Does nothing while the source holds fewer than a batch of transitions.
    pub fn update<S: BatchSource, R: Rng + ?Sized>(&mut self, source: &S, rng: &mut R) -> Result<UpdateStats> {
        let n = self.config.batch_size;
        let mut stats = UpdateStats {
            temperature: self.temperature(),
            ..UpdateStats::default()
        };
        if !source.can_draw(n) {
            return Ok(stats);
        }
        let mut batch = None;
        for _ in 0..self.config.utd {
            let b = self.make_batch(&source.draw(n, rng)?);
            let y = self.compute_target(&b, rng)?;
            stats.critic_loss = self.critic_update(&b, &y)?;
            self.soft_update_targets()?;
            self.critic_rounds += 1;
            stats.critic_rounds += 1;
            batch = Some(b);
        }
        let b = batch.expect("utd is positive");
        let (loss, log_probs) = self.policy_update(&b, rng)?;
        self.temperature_update(&log_probs)?;
        self.policy_updates += 1;
        stats.policy_updates = 1;
        stats.policy_loss = loss;
        stats.temperature = self.temperature();
        stats.entropy = -log_probs.iter().sum::<f64>() / log_probs.len() as f64;
        Ok(stats)
    }

    /// Stores the transition, then updates.
    pub fn agent_step<R: Rng + ?Sized>(
        &mut self,
        transition: Transition,
        buffer: &mut ReplayBuffer,
        rng: &mut R,
    ) -> Result<UpdateStats> {
        buffer.push(transition);
        self.update(buffer, rng)
    }

    /// Layout: magic, `u64` manifest length, manifest as key-value text, then
    /// the policy, the online critics and the target critics in the network
    /// checkpoint format. Optimiser state is not stored.
    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut kv = KvMap::default();
        self.config.write_kv(&mut kv);
        kv.insert("agent.log_temperature", format!("{:e}", self.log_temperature));
        kv.insert("agent.action_bound", self.action_bound);
        kv.insert(
            "agent.obs_scale",
            self.obs_scale.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(","),
        );
        let text = kv.to_text();
        w.write_all(AGENT_MAGIC)?;
        w.write_all(&(text.len() as u64).to_le_bytes())?;
        w.write_all(text.as_bytes())?;
        write_params(&self.policy, w)?;
        for c in self.critics.iter().chain(&self.targets) {
            write_params(c, w)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != AGENT_MAGIC {
            return Err(Error::Parse("not an agent checkpoint".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 20 {
            return Err(Error::Parse("implausible manifest length".into()));
        }
        let mut text = vec![0u8; len];
        r.read_exact(&mut text)?;
        let text = String::from_utf8(text).map_err(|_| Error::Parse("manifest is not UTF-8".into()))?;
        let mut kv = KvMap::parse(&text)?;
        let mut cfg = AgentConfig::sac();
        cfg.apply_kv(&mut kv)?;
        cfg.validate()?;
        let mut log_temperature = 0.0;
        let mut action_bound = 0.0;
        kv.take("agent.log_temperature", &mut log_temperature)?;
        kv.take("agent.action_bound", &mut action_bound)?;
        let scale = kv
            .take_string("agent.obs_scale")
            .ok_or_else(|| Error::Parse("manifest lacks agent.obs_scale".into()))?;
        kv.finish()?;
        let obs_scale = scale
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("obs scale entry {s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let policy = read_params(r)?;
        let mut nets = Vec::with_capacity(2 * cfg.critics);
        for _ in 0..2 * cfg.critics {
            nets.push(read_params(r)?);
        }
        let targets = nets.split_off(cfg.critics);
        if policy.input_dim() != obs_scale.len() || policy.output_dim() != 4 {
            return Err(Error::Parse("policy shape disagrees with the manifest".into()));
        }
        if nets.iter().chain(&targets).any(|c| c.input_dim() != obs_scale.len() + 2 || c.output_dim() != 1) {
            return Err(Error::Parse("critic shape disagrees with the manifest".into()));
        }
        Ok(Self::from_parts(cfg, obs_scale, action_bound, policy, nets, targets, Some(log_temperature)))
    }
}

const AGENT_MAGIC: &[u8; 8] = b"TRLAC001";
