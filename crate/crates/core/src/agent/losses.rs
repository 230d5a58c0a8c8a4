//! Loss functions of the actor-critic learners with their exact gradients.
//!
//! Observations and actions are already in network units here: scaled
//! observations, normalised actions in (−1, 1).

use rand::seq::index;
use rand::Rng;

use crate::error::{config, Error, Result};
use crate::nn::dist::clamp_log_std;
use crate::nn::{squashed_gaussian_sample, Head, MlpParams};

/// How the critic ensemble is reduced inside the policy objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CriticReduce {
    Mean,
    Min,
}

impl CriticReduce {
    pub fn tag(&self) -> &'static str {
        match self {
            CriticReduce::Mean => "mean",
            CriticReduce::Min => "min",
        }
    }
}

impl std::str::FromStr for CriticReduce {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mean" => Ok(CriticReduce::Mean),
            "min" => Ok(CriticReduce::Min),
            _ => Err(format!("expected `mean` or `min`, got {s:?}")),
        }
    }
}

/// Row-major concatenation of `[obs, action]` per sample.
pub fn critic_inputs(obs: &[f64], actions: &[f64], batch: usize) -> Vec<f64> {
    let od = obs.len() / batch;
    let ad = actions.len() / batch;
    let mut x = Vec::with_capacity(batch * (od + ad));
    for b in 0..batch {
        x.extend_from_slice(&obs[b * od..(b + 1) * od]);
        x.extend_from_slice(&actions[b * ad..(b + 1) * ad]);
    }
    x
}

/// `mean_b (Q(x_b) − y_b)²` and its parameter gradient.
pub fn critic_loss(critic: &MlpParams, inputs: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    let batch = targets.len();
    let tape = critic.forward_tape(inputs, batch)?;
    let q = tape.output();
    let mut loss = 0.0;
    let mut g = Vec::with_capacity(batch);
    for (qi, y) in q.iter().zip(targets) {
        let e = qi - y;
        loss += e * e / batch as f64;
        g.push(2.0 * e / batch as f64);
    }
    if !loss.is_finite() {
        return Err(Error::Training(format!("non-finite critic loss {loss}")));
    }
    Ok((loss, critic.backward(&tape, &g)?.params))
}

fn log_std_bounds(policy: &MlpParams) -> Result<(f64, f64)> {
    match policy.head() {
        Head::SquashedGaussian {
            log_std_min,
            log_std_max,
        } => Ok((log_std_min, log_std_max)),
        h => config(format!("policy needs a squashed-Gaussian head, found {h:?}")),
    }
}

/// Policy draws for a batch with the given standard-normal noise.
pub struct PolicySamples {
    /// Normalised actions in (−1, 1), `batch × act_dim`.
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
}

pub fn sample_policy(policy: &MlpParams, obs: &[f64], noise: &[f64], batch: usize) -> Result<PolicySamples> {
    let (lo, hi) = log_std_bounds(policy)?;
    let out = policy.predict_batch(obs, batch)?;
    let d = policy.output_dim() / 2;
    let mut actions = Vec::with_capacity(batch * d);
    let mut log_probs = Vec::with_capacity(batch);
    for b in 0..batch {
        let row = &out[b * 2 * d..(b + 1) * 2 * d];
        let (ls, _) = clamp_log_std(&row[d..], lo, hi);
        let s = squashed_gaussian_sample(&row[..d], &ls, &noise[b * d..(b + 1) * d]);
        actions.extend_from_slice(&s.action);
        log_probs.push(s.log_prob);
    }
    Ok(PolicySamples { actions, log_probs })
}

/// `tanh` of the policy mean: the deterministic action.
pub fn policy_mean_action(policy: &MlpParams, obs: &[f64]) -> Result<Vec<f64>> {
    let out = policy.forward(obs)?;
    let d = policy.output_dim() / 2;
    Ok(out[..d].iter().map(|m| m.tanh()).collect())
}

/// Everything the policy objective needs besides the networks.
#[derive(Clone, Copy, Debug)]
pub struct PolicyObjective {
    pub temperature: f64,
    pub reduce: CriticReduce,
    /// Penalty weights on the squared raw action, per dimension.
    pub reg_weights: [f64; 2],
    /// Raw action = bound · normalised action.
    pub action_bound: f64,
}

pub struct PolicyLoss {
    pub loss: f64,
    pub grads: Vec<f64>,
    pub log_probs: Vec<f64>,
}

/// `mean_b [α log π(a_b|s_b) − Q̄(s_b, a_b) + Σ_k w_k (bound·a_bk)²]` with
/// reparameterised `a_b`, and its gradient with respect to the policy
/// parameters. `Q̄` is the mean or minimum over `critics`.
pub fn policy_loss(
    policy: &MlpParams,
    critics: &[MlpParams],
    obs: &[f64],
    noise: &[f64],
    batch: usize,
    obj: &PolicyObjective,
) -> Result<PolicyLoss> {
    let (lo, hi) = log_std_bounds(policy)?;
    let d = policy.output_dim() / 2;
    if d != 2 {
        return config(format!("policy objective expects a 2-d action, got {d}"));
    }
    if critics.is_empty() {
        return config("policy objective needs at least one critic");
    }
    let tape = policy.forward_tape(obs, batch)?;
    let out = tape.output();
    let mut samples = Vec::with_capacity(batch);
    let mut masks = Vec::with_capacity(batch);
    let mut actions = Vec::with_capacity(batch * d);
    for b in 0..batch {
        let row = &out[b * 2 * d..(b + 1) * 2 * d];
        let (ls, mask) = clamp_log_std(&row[d..], lo, hi);
        let s = squashed_gaussian_sample(&row[..d], &ls, &noise[b * d..(b + 1) * d]);
        actions.extend_from_slice(&s.action);
        samples.push(s);
        masks.push(mask);
    }
    let x = critic_inputs(obs, &actions, batch);
    let in_dim = critics[0].input_dim();
    let n = critics.len();
    let mut q = vec![0.0; n * batch];
    let mut tapes = Vec::with_capacity(n);
    for (i, c) in critics.iter().enumerate() {
        let t = c.forward_tape(&x, batch)?;
        q[i * batch..(i + 1) * batch].copy_from_slice(t.output());
        tapes.push(t);
    }
    // dL/dQ_i per sample
    let mut dq = vec![0.0; n * batch];
    let mut qbar = vec![0.0; batch];
    for b in 0..batch {
        match obj.reduce {
            CriticReduce::Mean => {
                for i in 0..n {
                    qbar[b] += q[i * batch + b] / n as f64;
                    dq[i * batch + b] = -1.0 / (n as f64 * batch as f64);
                }
            }
            CriticReduce::Min => {
                let i = (0..n).min_by(|a, c| q[a * batch + b].total_cmp(&q[c * batch + b])).unwrap();
                qbar[b] = q[i * batch + b];
                dq[i * batch + b] = -1.0 / batch as f64;
            }
        }
    }
    let mut d_act = vec![0.0; batch * d];
    for (i, c) in critics.iter().enumerate() {
        let gx = c.input_gradient(&tapes[i], &dq[i * batch..(i + 1) * batch])?;
        for b in 0..batch {
            for k in 0..d {
                d_act[b * d + k] += gx[b * in_dim + in_dim - d + k];
            }
        }
    }
    let bound2 = obj.action_bound * obj.action_bound;
    let mut loss = 0.0;
    let mut grad_out = vec![0.0; out.len()];
    let mut log_probs = Vec::with_capacity(batch);
    for b in 0..batch {
        let s = &samples[b];
        let mut reg = 0.0;
        for k in 0..d {
            let a = s.action[k];
            let w = obj.reg_weights[k.min(1)];
            reg += w * bound2 * a * a;
            d_act[b * d + k] += w * bound2 * 2.0 * a / batch as f64;
        }
        loss += (obj.temperature * s.log_prob - qbar[b] + reg) / batch as f64;
        log_probs.push(s.log_prob);
        let (dm, dls) = s.backward(&d_act[b * d..(b + 1) * d], obj.temperature / batch as f64);
        let g = &mut grad_out[b * 2 * d..(b + 1) * 2 * d];
        for k in 0..d {
            g[k] = dm[k];
            g[d + k] = if masks[b][k] { dls[k] } else { 0.0 };
        }
    }
    if !loss.is_finite() {
        return Err(Error::Training(format!("non-finite policy loss {loss}")));
    }
    let grads = policy.backward(&tape, &grad_out)?.params;
    Ok(PolicyLoss { loss, grads, log_probs })
}

/// Dual objective `mean_b [−exp(log α)·(log π_b + H̄)]` and its derivative in `log α`.
pub fn temperature_loss(log_alpha: f64, log_probs: &[f64], target_entropy: f64) -> (f64, f64) {
    let alpha = log_alpha.exp();
    let m = log_probs.iter().map(|l| l + target_entropy).sum::<f64>() / log_probs.len() as f64;
    (-alpha * m, -alpha * m)
}

/// Distinct random subset of `size` critics out of `n`.
pub fn critic_subset<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Vec<usize> {
    let mut s = index::sample(rng, n, size).into_vec();
    s.sort_unstable();
    s
}

/// `y_b = r_b + γ(1 − done_b)·(min_{i∈S} Q'_i(s'_b, a'_b) − α log π(a'_b|s'_b))`
/// with `a'` drawn from the current policy and `S` the given subset of target critics.
#[allow(clippy::too_many_arguments)]
pub fn td_targets(
    policy: &MlpParams,
    targets: &[MlpParams],
    subset: &[usize],
    rewards: &[f64],
    next_obs: &[f64],
    done: &[f64],
    noise: &[f64],
    gamma: f64,
    temperature: f64,
) -> Result<Vec<f64>> {
    let batch = rewards.len();
    let s = sample_policy(policy, next_obs, noise, batch)?;
    let x = critic_inputs(next_obs, &s.actions, batch);
    let mut qmin = vec![f64::INFINITY; batch];
    for &i in subset {
        let q = targets[i].predict_batch(&x, batch)?;
        for (m, v) in qmin.iter_mut().zip(q) {
            *m = m.min(v);
        }
    }
    Ok((0..batch)
        .map(|b| rewards[b] + gamma * (1.0 - done[b]) * (qmin[b] - temperature * s.log_probs[b]))
        .collect())
}
