//! Split prediction: learned rates for the vehicle-frame dynamics, exact
//! control bookkeeping, pose integration and trajectory matching.

use rand::Rng;
use rand_distr::StandardNormal;

use super::dynamics::{predict_rates, write_model_input, DynamicsModel, MemberSelect, MODEL_INPUT_DIM};
use crate::buffer::Transition;
use crate::env::{
    advance_pose, apply_action, find_footpoint, reward_from_errors, tracking_errors, Action, DeviationState,
    EnvSnapshot, Footpoint, Pose, Task, VehicleState, DYN_DIM,
};
use crate::error::{config, Result};

/// Everything a model rollout carries between steps.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModelState {
    pub vehicle: VehicleState,
    pub pose: Pose,
    /// Footpoint arc of the previous step, used as the search hint.
    pub arc: f64,
}

impl ModelState {
    pub fn from_snapshot(s: &EnvSnapshot) -> Self {
        Self {
            vehicle: s.vehicle,
            pose: s.pose,
            arc: s.footpoint.arc,
        }
    }

    pub fn from_transition(t: &Transition) -> Self {
        Self {
            vehicle: VehicleState::from_slice(&t.obs),
            pose: t.pose,
            arc: t.arc,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitOutcome {
    pub state: ModelState,
    pub footpoint: Footpoint,
    pub deviation: DeviationState,
    pub reward: f64,
    pub breached: bool,
}

fn clamp_action(task: &Task, a: Action) -> Action {
    let b = task.config.action_bound;
    Action::new(a.lat.clamp(-b, b), a.long.clamp(-b, b))
}

/// Vehicle state after one interval: controls and history follow the exact
/// accumulation rule, the dynamic fields are integrated from `rates`.
fn next_vehicle(task: &Task, v: &VehicleState, a: Action, rates: &[f64]) -> VehicleState {
    let dt = task.config.dt;
    let mut next = apply_action(v, a);
    let d = v.dynamic();
    let mut x: [f64; DYN_DIM] = std::array::from_fn(|k| d[k] + dt * rates[k]);
    let smax = task.config.vehicle.steer_max;
    x[5] = x[5].max(0.0);
    x[9] = x[9].clamp(-smax, smax);
    next.set_dynamic(&x);
    next
}

/// One split step from given rates.
pub fn split_step(task: &Task, s: &ModelState, a: Action, rates: &[f64]) -> SplitOutcome {
    let a = clamp_action(task, a);
    let vehicle = next_vehicle(task, &s.vehicle, a, rates);
    let pose = advance_pose(&s.pose, &s.vehicle, &vehicle, task.config.dt);
    let (footpoint, deviation) = task.match_trajectory(&pose, &vehicle, Some(s.arc));
    SplitOutcome {
        state: ModelState {
            vehicle,
            pose,
            arc: footpoint.arc,
        },
        footpoint,
        reward: task.reward(&vehicle, &deviation),
        breached: task.breached(&deviation),
        deviation,
    }
}

/// Reward-only variant: skips the waypoint encoding, which the reward does not use.
fn split_step_fast(task: &Task, s: &mut ModelState, a: Action, rates: &[f64]) -> (f64, bool) {
    let vehicle = next_vehicle(task, &s.vehicle, a, rates);
    let pose = advance_pose(&s.pose, &s.vehicle, &vehicle, task.config.dt);
    let fp = find_footpoint(pose.x, pose.y, &task.track, Some(s.arc), task.config.window);
    let e = tracking_errors(&pose, vehicle.vx, &fp);
    *s = ModelState {
        vehicle,
        pose,
        arc: fp.arc,
    };
    (
        reward_from_errors(&e, vehicle.ay, &task.config.weights),
        e.cross_track.abs() > task.config.threshold,
    )
}

/// Split prediction with the mean rates of `select`.
pub fn split_predict<M: DynamicsModel + ?Sized>(
    model: &M,
    task: &Task,
    s: &ModelState,
    a: Action,
    select: MemberSelect,
) -> Result<SplitOutcome> {
    let a = clamp_action(task, a);
    let (mean, _) = predict_rates(model, &s.vehicle, a, select)?;
    Ok(split_step(task, s, a, &mean))
}

/// Split prediction with rates drawn from the predicted Gaussian.
pub fn split_predict_sampled<M: DynamicsModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    task: &Task,
    s: &ModelState,
    a: Action,
    select: MemberSelect,
    rng: &mut R,
) -> Result<SplitOutcome> {
    let a = clamp_action(task, a);
    let (mean, var) = predict_rates(model, &s.vehicle, a, select)?;
    let rates: [f64; DYN_DIM] = std::array::from_fn(|k| mean[k] + var[k].sqrt() * rng.sample::<f64, _>(StandardNormal));
    Ok(split_step(task, s, a, &rates))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutConfig {
    /// Particles per action sequence; particle `p` follows member `p mod M`.
    pub particles: usize,
    /// Draw rates from the member variance instead of using the mean.
    pub sample_noise: bool,
    /// Skip the waypoint encoding of the deviation state.
    pub fast: bool,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            particles: 5,
            sample_noise: true,
            fast: true,
        }
    }
}

/// Undiscounted returns of every particle for every sequence.
///
/// `sequences` holds `K` row-major sequences of `horizon` actions. The result
/// has `K·P` entries, sequence-major. Each particle keeps its member for the
/// whole horizon; a particle that breaches the threshold keeps that step's
/// reward and earns nothing afterwards.
pub fn propagate_particles<M: DynamicsModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    task: &Task,
    init: &ModelState,
    sequences: &[Action],
    horizon: usize,
    cfg: &RolloutConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if horizon == 0 || cfg.particles == 0 {
        return config("rollouts need a positive horizon and particle count");
    }
    if sequences.is_empty() || !sequences.len().is_multiple_of(horizon) {
        return config(format!("{} actions do not form sequences of length {horizon}", sequences.len()));
    }
    let k = sequences.len() / horizon;
    let p = cfg.particles;
    let n = k * p;
    let members = model.num_members();
    let mut states = vec![*init; n];
    let mut alive = vec![true; n];
    let mut returns = vec![0.0; n];
    let mut inputs = Vec::new();
    let mut idx = Vec::new();
    for t in 0..horizon {
        for m in 0..members {
            idx.clear();
            inputs.clear();
            for j in 0..n {
                if alive[j] && (j % p) % members == m {
                    let a = clamp_action(task, sequences[(j / p) * horizon + t]);
                    write_model_input(&states[j].vehicle, a, &mut inputs);
                    idx.push(j);
                }
            }
            if idx.is_empty() {
                continue;
            }
            debug_assert_eq!(inputs.len(), idx.len() * MODEL_INPUT_DIM);
            let (mean, var) = model.predict_member(m, &inputs, idx.len())?;
            for (r, &j) in idx.iter().enumerate() {
                let mut rates = [0.0; DYN_DIM];
                rates.copy_from_slice(&mean[r * DYN_DIM..(r + 1) * DYN_DIM]);
                if cfg.sample_noise {
                    for kk in 0..DYN_DIM {
                        rates[kk] += var[r * DYN_DIM + kk].sqrt() * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                let a = clamp_action(task, sequences[(j / p) * horizon + t]);
                let (rew, breached) = if cfg.fast {
                    split_step_fast(task, &mut states[j], a, &rates)
                } else {
                    let o = split_step(task, &states[j], a, &rates);
                    states[j] = o.state;
                    (o.reward, o.breached)
                };
                returns[j] += rew;
                if breached {
                    alive[j] = false;
                }
            }
        }
    }
    Ok(returns)
}

/// Mean particle return of each of the `K` sequences.
pub fn evaluate_sequences<M: DynamicsModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    task: &Task,
    init: &ModelState,
    sequences: &[Action],
    horizon: usize,
    cfg: &RolloutConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let r = propagate_particles(model, task, init, sequences, horizon, cfg, rng)?;
    Ok(r.chunks(cfg.particles).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect())
}
