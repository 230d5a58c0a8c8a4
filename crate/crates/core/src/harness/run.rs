use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Algo, ExperimentConfig};
use super::eval::{evaluate, Controller, EvalRecord, Episode, METRICS_HEADER};
use crate::agent::ActorCritic;
use crate::buffer::{ReplayBuffer, Transition};
use crate::env::{Task, TrajectoryEnv};
use crate::error::{Error, Result};
use crate::mbpo::Mbpo;
use crate::model::{rate_dataset, ProbabilisticEnsemble, MODEL_INPUT_DIM};

/// Learner state of one run.
#[derive(Clone, Debug)]
pub enum Learner {
    Actor(ActorCritic),
    Pets { model: ProbabilisticEnsemble },
    Mbpo(Box<Mbpo>),
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(cfg: &ExperimentConfig, task: &Task, rng: &mut R) -> Result<Self> {
        let actor = |rng: &mut R| {
            ActorCritic::new(cfg.agent.clone(), task.observation_scale(), task.config.action_bound, rng)
        };
        let ensemble = |rng: &mut R| ProbabilisticEnsemble::new(MODEL_INPUT_DIM, 10, cfg.model.clone(), rng);
        Ok(match cfg.algo {
            Algo::Sac | Algo::Redq => Learner::Actor(actor(rng)?),
            Algo::PetsMppi => Learner::Pets { model: ensemble(rng)? },
            Algo::Mbpo => {
                let model = ensemble(rng)?;
                let agent = actor(rng)?;
                Learner::Mbpo(Box::new(Mbpo::new(cfg.mbpo.clone(), cfg.model_train.clone(), model, agent)?))
            }
        })
    }

    /// The evaluation controller. A planner without a trained model falls
    /// back to random actions.
    pub fn controller<'a>(&'a self, cfg: &'a ExperimentConfig) -> Controller<'a, ProbabilisticEnsemble> {
        match self {
            Learner::Actor(a) => Controller::Actor(a),
            Learner::Mbpo(m) => Controller::Actor(&m.learner),
            Learner::Pets { model } if model.is_trained() => Controller::Planner {
                model,
                config: &cfg.planner,
            },
            Learner::Pets { .. } => Controller::Random,
        }
    }

    /// Layout: magic, `u64` manifest length, the experiment config as
    /// key-value text, then the actor-critic or ensemble checkpoint.
    pub fn write_checkpoint<W: Write>(&self, cfg: &ExperimentConfig, w: &mut W) -> Result<()> {
        let text = cfg.to_text();
        w.write_all(RUN_MAGIC)?;
        w.write_all(&(text.len() as u64).to_le_bytes())?;
        w.write_all(text.as_bytes())?;
        match self {
            Learner::Actor(a) => a.write(w),
            Learner::Mbpo(m) => m.learner.write(w),
            Learner::Pets { model } => model.write(w),
        }
    }

    pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(ExperimentConfig, Self)> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != RUN_MAGIC {
            return Err(Error::Parse("not a run checkpoint".into()));
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
        let cfg = ExperimentConfig::from_text(&text, None)?;
        let learner = match cfg.algo {
            Algo::PetsMppi => Learner::Pets {
                model: ProbabilisticEnsemble::read(r)?,
            },
            _ => Learner::Actor(ActorCritic::read(r)?),
        };
        Ok((cfg, learner))
    }
}

const RUN_MAGIC: &[u8; 8] = b"TRLRUN01";

/// Output of one seeded run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<EvalRecord>,
    pub env_steps: usize,
    pub learner: Learner,
    pub metrics_path: Option<PathBuf>,
}

pub fn metrics_file_name(algo: Algo, seed: u64) -> String {
    format!("{}_seed{seed}.csv", algo.tag())
}

/// Deterministic evaluation rng for a run and step.
fn eval_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(step as u64 + 1);
    r
}

/// Trains one seed for exactly `cfg.steps` environment steps: uniform random
/// actions during exploration, then the algorithm's own choice. Evaluations
/// follow [`ExperimentConfig::eval_steps`] and are appended to the metrics
/// file in `out` as they finish. On a training failure a diagnostic file is
/// written next to the metrics before the error is returned.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, out: Option<&Path>) -> Result<RunOutput> {
    cfg.validate()?;
    let mut writer = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(metrics_file_name(cfg.algo, seed));
            let mut w = BufWriter::new(File::create(&path)?);
            writeln!(w, "{METRICS_HEADER}")?;
            w.flush()?;
            Some((w, path))
        }
        None => None,
    };
    let mut run = Run::new(cfg, seed)?;
    let mut records = Vec::new();
    let schedule = cfg.eval_steps();
    let mut next_eval = 0;
    let mut emit = |run: &Run, step: usize, records: &mut Vec<EvalRecord>| -> Result<()> {
        let recs = run.evaluate(step)?;
        if let Some((w, _)) = writer.as_mut() {
            for r in &recs {
                writeln!(w, "{}", r.csv_row())?;
            }
            w.flush()?;
        }
        records.extend(recs);
        Ok(())
    };
    if schedule[0] == 0 {
        emit(&run, 0, &mut records)?;
        next_eval = 1;
    }
    for step in 1..=cfg.steps {
        if let Err(e) = run.step(step) {
            if let Some(dir) = out {
                let diag = dir.join(format!("{}_seed{seed}.diag.txt", cfg.algo.tag()));
                std::fs::write(&diag, format!("step {step}\nerror {e}\n\n{}", cfg.to_text()))?;
            }
            return Err(e);
        }
        if schedule.get(next_eval) == Some(&step) {
            emit(&run, step, &mut records)?;
            next_eval += 1;
        }
    }
    Ok(RunOutput {
        records,
        env_steps: run.env_steps,
        learner: run.learner,
        metrics_path: writer.map(|(_, p)| p),
    })
}

/// Live state of a training run.
pub struct Run<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    task: Task,
    env: TrajectoryEnv,
    buffer: ReplayBuffer,
    pub learner: Learner,
    rng: ChaCha8Rng,
    plan_episode: Option<crate::planner::PlanState>,
    pub env_steps: usize,
}

impl<'a> Run<'a> {
    pub fn new(cfg: &'a ExperimentConfig, seed: u64) -> Result<Self> {
        let task = Task::new(cfg.env.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let learner = Learner::new(cfg, &task, &mut rng)?;
        let mut env = TrajectoryEnv::new(task.clone());
        env.reset(seed);
        Ok(Self {
            cfg,
            seed,
            task,
            env,
            buffer: ReplayBuffer::new(cfg.replay_capacity()),
            learner,
            rng,
            plan_episode: None,
            env_steps: 0,
        })
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn evaluate(&self, step: usize) -> Result<Vec<EvalRecord>> {
        let c = self.learner.controller(self.cfg);
        evaluate(&c, &self.task, self.cfg.eval_episodes, step, self.seed, &mut eval_rng(self.seed, step))
    }

    /// Environment step number `step` (1-based) followed by learning.
    pub fn step(&mut self, step: usize) -> Result<()> {
        let explore = step <= self.cfg.exploration_steps;
        let action = if explore {
            let b = self.task.config.action_bound;
            crate::env::Action::new(self.rng.random_range(-b..=b), self.rng.random_range(-b..=b))
        } else {
            match &self.learner {
                Learner::Actor(a) => a.act(&self.env.observation().expect("env is reset"), false, &mut self.rng)?,
                Learner::Mbpo(m) => m.learner.act(&self.env.observation().expect("env is reset"), false, &mut self.rng)?,
                Learner::Pets { model } => {
                    let c = Controller::Planner {
                        model,
                        config: &self.cfg.planner,
                    };
                    let mut ep = Episode::new(&c);
                    if let Some(p) = self.plan_episode.take() {
                        ep.set_plan(p);
                    }
                    let a = ep.act(&self.env, &mut self.rng)?;
                    self.plan_episode = Some(ep.into_plan());
                    a
                }
            }
        };
        let (t, r) = Transition::record(&mut self.env, action)?;
        self.env_steps += 1;
        match &mut self.learner {
            Learner::Actor(a) => {
                self.buffer.push(t);
                if !explore {
                    a.update(&self.buffer, &mut self.rng)?;
                }
            }
            Learner::Pets { model } => {
                self.buffer.push(t);
                if step.is_multiple_of(self.cfg.model_train.retrain_every) {
                    let (x, y, n) = rate_dataset(self.buffer.iter(), self.task.config.dt);
                    model.train(&x, &y, n, &self.cfg.model_train, &mut self.rng)?;
                }
            }
            Learner::Mbpo(m) => {
                m.observe(&self.task, &mut self.buffer, t, &mut self.rng)?;
                if !explore {
                    m.learn(&self.buffer, &mut self.rng)?;
                }
            }
        }
        if r.done() {
            self.env.reset(self.seed);
            self.plan_episode = None;
        }
        Ok(())
    }
}

/// Every seed of the config in turn; metrics go to `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<RunOutput>> {
    cfg.seeds.iter().map(|&s| run_seed(cfg, s, Some(out))).collect()
}
