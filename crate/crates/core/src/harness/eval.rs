use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::agent::ActorCritic;
use crate::env::{Action, Task, TrajectoryEnv};
use crate::error::{Error, Result};
use crate::model::{DynamicsModel, ModelState, RolloutConfig};
use crate::planner::{plan_action, ModelReturns, PlanState, PlannerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Cross-track threshold exceeded.
    Threshold,
    /// Episode length reached.
    Length,
}

impl Termination {
    pub fn tag(&self) -> &'static str {
        match self {
            Termination::Threshold => "threshold",
            Termination::Length => "length",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Termination {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "threshold" => Ok(Termination::Threshold),
            "length" => Ok(Termination::Length),
            _ => Err(format!("unknown termination {s:?}")),
        }
    }
}

/// One evaluation episode. KPIs are sums of absolute per-step values
/// divided by the distance driven (at least 1 m).
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub seed: u64,
    pub ret: f64,
    pub ect: f64,
    pub egamma: f64,
    pub ex: f64,
    pub ay: f64,
    pub alat: f64,
    pub along: f64,
    pub laps: f64,
    pub termination: Termination,
}

pub const METRICS_HEADER: &str = "step,seed,return,ect_mean,egamma_mean,ex_mean,ay_mean,alat_mean,along_mean,laps,termination";

impl EvalRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.seed,
            self.ret,
            self.ect,
            self.egamma,
            self.ex,
            self.ay,
            self.alat,
            self.along,
            self.laps,
            self.termination
        )
    }

    pub fn parse_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 11 {
            return Err(Error::Parse(format!("metrics row needs 11 fields, got {}: {line:?}", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse::<f64>().map_err(|e| Error::Parse(format!("field {i} {:?}: {e}", f[i])))
        };
        Ok(Self {
            step: f[0].parse().map_err(|e| Error::Parse(format!("step {:?}: {e}", f[0])))?,
            seed: f[1].parse().map_err(|e| Error::Parse(format!("seed {:?}: {e}", f[1])))?,
            ret: num(2)?,
            ect: num(3)?,
            egamma: num(4)?,
            ex: num(5)?,
            ay: num(6)?,
            alat: num(7)?,
            along: num(8)?,
            laps: num(9)?,
            termination: f[10].parse().map_err(Error::Parse)?,
        })
    }
}

/// Who picks actions during evaluation and training rollouts.
pub enum Controller<'a, M: DynamicsModel + ?Sized> {
    /// Uniform random deltas inside the action bound.
    Random,
    /// Policy mean action.
    Actor(&'a ActorCritic),
    /// MPPI over the given model.
    Planner {
        model: &'a M,
        config: &'a PlannerConfig,
    },
}

/// Warm-started controller state for one episode.
pub struct Episode<'a, M: DynamicsModel + ?Sized> {
    pub controller: &'a Controller<'a, M>,
    plan: PlanState,
}

impl<'a, M: DynamicsModel + ?Sized> Episode<'a, M> {
    pub fn new(controller: &'a Controller<'a, M>) -> Self {
        let h = match controller {
            Controller::Planner { config, .. } => config.horizon,
            _ => 1,
        };
        Self {
            controller,
            plan: PlanState::zeros(h),
        }
    }

    pub fn set_plan(&mut self, plan: PlanState) {
        self.plan = plan;
    }

    pub fn into_plan(self) -> PlanState {
        self.plan
    }

    pub fn act<R: Rng + ?Sized>(&mut self, env: &TrajectoryEnv, rng: &mut R) -> Result<Action> {
        let task = env.task();
        let b = task.config.action_bound;
        match self.controller {
            Controller::Random => Ok(Action::new(rng.random_range(-b..=b), rng.random_range(-b..=b))),
            Controller::Actor(agent) => {
                let obs = env.observation().ok_or_else(|| Error::Usage("environment not reset".into()))?;
                agent.act(&obs, true, rng)
            }
            Controller::Planner { model, config } => {
                let snap = env.snapshot().ok_or_else(|| Error::Usage("environment not reset".into()))?;
                let est = ModelReturns {
                    model: *model,
                    task,
                    state: ModelState::from_snapshot(&snap),
                    rollout: rollout_config(config),
                };
                let (a, next) = plan_action(&est, &self.plan, config, rng)?;
                self.plan = next;
                Ok(a)
            }
        }
    }
}

pub fn rollout_config(p: &PlannerConfig) -> RolloutConfig {
    RolloutConfig {
        particles: p.particles,
        sample_noise: p.sample_noise,
        fast: p.fast,
    }
}

/// Runs `episodes` episodes from the start line with exploration disabled.
/// Nothing is learned or stored.
pub fn evaluate<M: DynamicsModel + ?Sized, R: Rng + ?Sized>(
    controller: &Controller<'_, M>,
    task: &Task,
    episodes: usize,
    step: usize,
    seed: u64,
    rng: &mut R,
) -> Result<Vec<EvalRecord>> {
    let mut out = Vec::with_capacity(episodes);
    let mut env = TrajectoryEnv::new(task.clone());
    for _ in 0..episodes {
        env.reset(seed);
        let mut ep = Episode::new(controller);
        let mut ret = 0.0;
        let mut sums = [0.0; 6];
        let mut distance = 0.0;
        let termination = loop {
            let a = ep.act(&env, rng)?;
            let r = env.step(a)?;
            ret += r.reward;
            let k = &r.info.kpis;
            for (s, v) in sums
                .iter_mut()
                .zip([k.cross_track, k.course, k.velocity, k.lat_accel, k.action_lat, k.action_long])
            {
                *s += v.abs();
            }
            distance += r.info.distance;
            if r.terminated {
                break Termination::Threshold;
            }
            if r.truncated {
                break Termination::Length;
            }
        };
        let norm = distance.max(1.0);
        out.push(EvalRecord {
            step,
            seed,
            ret,
            ect: sums[0] / norm,
            egamma: sums[1] / norm,
            ex: sums[2] / norm,
            ay: sums[3] / norm,
            alat: sums[4] / norm,
            along: sums[5] / norm,
            laps: distance / task.track.length(),
            termination,
        });
    }
    Ok(out)
}
