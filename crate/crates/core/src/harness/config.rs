use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::agent::AgentConfig;
use crate::env::{EnvConfig, TrackSpec};
use crate::error::{config, Error, Result};
use crate::kv::KvMap;
use crate::mbpo::MbpoConfig;
use crate::model::{EnsembleConfig, ModelTrainConfig};
use crate::planner::PlannerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algo {
    Sac,
    Redq,
    PetsMppi,
    Mbpo,
}

impl Algo {
    pub const ALL: [Algo; 4] = [Algo::Sac, Algo::Redq, Algo::PetsMppi, Algo::Mbpo];

    pub fn tag(&self) -> &'static str {
        match self {
            Algo::Sac => "sac",
            Algo::Redq => "redq",
            Algo::PetsMppi => "pets-mppi",
            Algo::Mbpo => "mbpo",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Algo::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}; expected sac, redq, pets-mppi or mbpo"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Full,
    Desk,
}

impl Preset {
    pub fn tag(&self) -> &'static str {
        match self {
            Preset::Full => "full",
            Preset::Desk => "desk",
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            _ => Err(format!("unknown preset {s:?}; expected full or desk")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub algo: Algo,
    /// Environment steps of one run, exploration included.
    pub steps: usize,
    pub exploration_steps: usize,
    pub seeds: Vec<u64>,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Zero means the full step budget.
    pub replay_capacity: usize,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub planner: PlannerConfig,
    pub model: EnsembleConfig,
    pub model_train: ModelTrainConfig,
    pub mbpo: MbpoConfig,
}

impl ExperimentConfig {
    /// Full-scale settings.
    pub fn full(algo: Algo) -> Self {
        let agent = match algo {
            Algo::Redq => AgentConfig::redq(),
            Algo::Mbpo => AgentConfig {
                utd: 20,
                ..AgentConfig::sac()
            },
            _ => AgentConfig::sac(),
        };
        Self {
            preset: Preset::Full,
            algo,
            steps: if algo == Algo::Sac { 3_000_000 } else { 300_000 },
            exploration_steps: 5000,
            seeds: (0..7).collect(),
            eval_every: 5000,
            eval_episodes: 5,
            replay_capacity: 0,
            env: EnvConfig::default(),
            agent,
            planner: PlannerConfig::default(),
            model: EnsembleConfig::default(),
            model_train: ModelTrainConfig::default(),
            mbpo: MbpoConfig::default(),
        }
    }

    /// Desk-scale settings: 2×64 networks, 500-step episodes on the short
    /// loop, SAC 150k and the others 30k steps.
    pub fn desk(algo: Algo) -> Self {
        let mut c = Self::full(algo);
        c.preset = Preset::Desk;
        c.steps = if algo == Algo::Sac { 150_000 } else { 30_000 };
        c.seeds = (0..5).collect();
        c.env.episode_length = 500;
        c.env.track = TrackSpec::desk();
        c.agent.policy_layers = 2;
        c.agent.policy_nodes = 64;
        c.agent.critic_layers = 2;
        c.agent.critic_nodes = 64;
        c.model.hidden_layers = 2;
        c.model.hidden_nodes = 64;
        c
    }

    pub fn preset(preset: Preset, algo: Algo) -> Self {
        match preset {
            Preset::Full => Self::full(algo),
            Preset::Desk => Self::desk(algo),
        }
    }

    pub fn replay_capacity(&self) -> usize {
        if self.replay_capacity == 0 {
            self.steps.max(1)
        } else {
            self.replay_capacity
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < self.exploration_steps {
            return config(format!(
                "train.steps ({}) must not be below train.exploration_steps ({})",
                self.steps, self.exploration_steps
            ));
        }
        if self.steps == 0 {
            return config("train.steps must be positive");
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return config("train.eval_every and train.eval_episodes must be positive");
        }
        if self.seeds.is_empty() {
            return config("train.seeds must list at least one seed");
        }
        self.env.validate()?;
        self.agent.validate()?;
        self.planner.validate()?;
        self.model.validate()?;
        self.model_train.validate()?;
        self.mbpo.validate(self.agent.batch_size)?;
        if self.planner.action_bound != self.env.action_bound {
            return config("planner and environment action bounds differ");
        }
        Ok(())
    }

    /// Builds a config from key-value text. `preset` and `train.algo` pick the
    /// defaults (full and sac unless given); `algo` overrides the file.
    pub fn from_text(text: &str, algo: Option<Algo>) -> Result<Self> {
        let mut kv = KvMap::parse(text)?;
        let mut preset = Preset::Full;
        kv.take("preset", &mut preset)?;
        let mut file_algo = Algo::Sac;
        kv.take("train.algo", &mut file_algo)?;
        let mut c = Self::preset(preset, algo.unwrap_or(file_algo));
        c.apply_kv(&mut kv)?;
        kv.finish()?;
        c.planner.action_bound = c.env.action_bound;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path, algo: Option<Algo>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(&text, algo)
    }

    fn apply_kv(&mut self, kv: &mut KvMap) -> Result<()> {
        kv.take("train.steps", &mut self.steps)?;
        kv.take("train.exploration_steps", &mut self.exploration_steps)?;
        if let Some(s) = kv.take_string("train.seeds") {
            self.seeds = s
                .split(',')
                .map(|v| v.trim().parse::<u64>().map_err(|e| Error::Config(format!("train.seeds entry {v:?}: {e}"))))
                .collect::<Result<_>>()?;
        }
        kv.take("train.eval_every", &mut self.eval_every)?;
        kv.take("train.eval_episodes", &mut self.eval_episodes)?;
        kv.take("train.replay_capacity", &mut self.replay_capacity)?;
        self.env.apply_kv(kv)?;
        self.agent.apply_kv(kv)?;
        self.planner.apply_kv(kv)?;
        self.model.apply_kv(kv)?;
        self.model_train.apply_kv(kv)?;
        self.mbpo.apply_kv(kv)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::default();
        kv.insert("preset", self.preset.tag());
        kv.insert("train.algo", self.algo);
        kv.insert("train.steps", self.steps);
        kv.insert("train.exploration_steps", self.exploration_steps);
        kv.insert(
            "train.seeds",
            self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        );
        kv.insert("train.eval_every", self.eval_every);
        kv.insert("train.eval_episodes", self.eval_episodes);
        kv.insert("train.replay_capacity", self.replay_capacity);
        self.env.write_kv(&mut kv);
        self.agent.write_kv(&mut kv);
        self.planner.write_kv(&mut kv);
        self.model.write_kv(&mut kv);
        self.model_train.write_kv(&mut kv);
        self.mbpo.write_kv(&mut kv);
        kv
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }

    /// Steps after which an evaluation runs: 0, every multiple of
    /// `eval_every` past the exploration phase, and the final step.
    pub fn eval_steps(&self) -> Vec<usize> {
        let mut s = vec![0];
        let mut k = self.eval_every;
        while k <= self.steps {
            if k > self.exploration_steps {
                s.push(k);
            }
            k += self.eval_every;
        }
        if self.steps > self.exploration_steps && s.last() != Some(&self.steps) {
            s.push(self.steps);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults() {
        let c = ExperimentConfig::full(Algo::Redq);
        assert_eq!((c.steps, c.exploration_steps, c.env.episode_length), (300_000, 5000, 2000));
        assert_eq!((c.agent.critics, c.agent.utd, c.agent.batch_size), (10, 20, 512));
        assert_eq!((c.agent.policy_layers, c.agent.policy_nodes), (3, 512));
        assert_eq!(ExperimentConfig::full(Algo::Sac).steps, 3_000_000);
        let m = ExperimentConfig::full(Algo::Mbpo);
        assert_eq!((m.agent.critics, m.agent.utd), (2, 20));
        assert_eq!((m.model.members, m.model.hidden_layers, m.model.hidden_nodes), (5, 4, 256));
        assert_eq!((m.model_train.epochs, m.model_train.patience, m.model_train.retrain_every), (100, 5, 500));
        let p = ExperimentConfig::full(Algo::PetsMppi);
        assert_eq!((p.planner.population, p.planner.horizon, p.planner.iterations), (200, 10, 2));
        for a in Algo::ALL {
            ExperimentConfig::full(a).validate().unwrap();
            ExperimentConfig::desk(a).validate().unwrap();
        }
    }

    #[test]
    fn desk_budget_ratio() {
        assert_eq!(ExperimentConfig::desk(Algo::Sac).steps, 150_000);
        assert_eq!(ExperimentConfig::desk(Algo::Mbpo).steps, 30_000);
        assert_eq!(ExperimentConfig::desk(Algo::Redq).env.episode_length, 500);
    }

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::desk(Algo::PetsMppi);
        c.seeds = vec![3, 9];
        c.planner.temperature = 7.5;
        let back = ExperimentConfig::from_text(&c.to_text(), None).unwrap();
        assert_eq!(back, c);
        let sac = ExperimentConfig::from_text(&c.to_text(), Some(Algo::Sac)).unwrap();
        assert_eq!(sac.algo, Algo::Sac);
    }

    #[test]
    fn startup_errors_name_the_problem() {
        let e = ExperimentConfig::from_text("train.algo = ppo\n", None).unwrap_err().to_string();
        assert!(e.contains("ppo"), "{e}");
        let e = ExperimentConfig::from_text("agent.critc = 3\n", None).unwrap_err().to_string();
        assert!(e.contains("agent.critc"), "{e}");
        let e = ExperimentConfig::from_text("train.steps = 10\n", None).unwrap_err().to_string();
        assert!(e.contains("train.steps"), "{e}");
    }

    #[test]
    fn eval_schedule() {
        let mut c = ExperimentConfig::desk(Algo::Redq);
        c.steps = 5000;
        assert_eq!(c.eval_steps(), vec![0]);
        c.steps = 12_000;
        assert_eq!(c.eval_steps(), vec![0, 10_000, 12_000]);
        c.steps = 15_000;
        assert_eq!(c.eval_steps(), vec![0, 10_000, 15_000]);
        c.exploration_steps = 0;
        assert_eq!(c.eval_steps(), vec![0, 5000, 10_000, 15_000]);
    }
}
