//! Model-predictive path-integral planning over action-delta sequences.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::env::{Action, Task};
use crate::error::{config, Result};
use crate::kv::KvMap;
use crate::model::{evaluate_sequences, DynamicsModel, ModelState, RolloutConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerConfig {
    /// Candidate sequences per iteration.
    pub population: usize,
    pub horizon: usize,
    pub iterations: usize,
    /// Softmax temperature, reward units.
    pub temperature: f64,
    /// Standard deviation of the raw perturbations, action units.
    pub noise_std: f64,
    /// Low-pass coefficient of the perturbations over time, in `[0, 1)`.
    pub smoothing: f64,
    pub particles: usize,
    pub sample_noise: bool,
    /// Skip the waypoint encoding inside rollouts.
    pub fast: bool,
    pub action_bound: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            population: 200,
            horizon: 10,
            iterations: 2,
            temperature: 20.0,
            noise_std: 0.08,
            smoothing: 0.7,
            particles: 5,
            sample_noise: true,
            fast: true,
            action_bound: 0.2,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.horizon == 0 || self.iterations == 0 || self.particles == 0 {
            return config("planner population, horizon, iterations and particles must be positive");
        }
        if !(self.temperature > 0.0 && self.noise_std > 0.0 && self.action_bound > 0.0) {
            return config("planner temperature, noise_std and action bound must be positive");
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return config("planner.smoothing must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &mut KvMap) -> Result<()> {
        kv.take("planner.population", &mut self.population)?;
        kv.take("planner.horizon", &mut self.horizon)?;
        kv.take("planner.iterations", &mut self.iterations)?;
        kv.take("planner.temperature", &mut self.temperature)?;
        kv.take("planner.noise_std", &mut self.noise_std)?;
        kv.take("planner.smoothing", &mut self.smoothing)?;
        kv.take("planner.particles", &mut self.particles)?;
        kv.take("planner.sample_noise", &mut self.sample_noise)?;
        kv.take("planner.fast", &mut self.fast)?;
        Ok(())
    }

    pub fn write_kv(&self, kv: &mut KvMap) {
        kv.insert("planner.population", self.population);
        kv.insert("planner.horizon", self.horizon);
        kv.insert("planner.iterations", self.iterations);
        kv.insert("planner.temperature", self.temperature);
        kv.insert("planner.noise_std", self.noise_std);
        kv.insert("planner.smoothing", self.smoothing);
        kv.insert("planner.particles", self.particles);
        kv.insert("planner.sample_noise", self.sample_noise);
        kv.insert("planner.fast", self.fast);
    }
}

/// Nominal sequence of action deltas.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanState {
    pub actions: Vec<Action>,
}

impl PlanState {
    pub fn zeros(horizon: usize) -> Self {
        Self {
            actions: vec![Action::ZERO; horizon],
        }
    }

    /// Drops the first action and appends a zero delta.
    pub fn shifted(&self) -> Self {
        let mut actions = self.actions[1..].to_vec();
        actions.push(Action::ZERO);
        Self { actions }
    }
}

/// Scores candidate sequences (`K` row-major sequences of `horizon` actions).
pub trait ReturnEstimator {
    fn returns<R: Rng + ?Sized>(&self, candidates: &[Action], horizon: usize, rng: &mut R) -> Result<Vec<f64>>;
}

/// Particle rollouts of a dynamics model from one state.
pub struct ModelReturns<'a, M: ?Sized> {
    pub model: &'a M,
    pub task: &'a Task,
    pub state: ModelState,
    pub rollout: RolloutConfig,
}

impl<M: DynamicsModel + ?Sized> ReturnEstimator for ModelReturns<'_, M> {
    fn returns<R: Rng + ?Sized>(&self, candidates: &[Action], horizon: usize, rng: &mut R) -> Result<Vec<f64>> {
        evaluate_sequences(self.model, self.task, &self.state, candidates, horizon, &self.rollout, rng)
    }
}

/// `w_k ∝ exp((R_k − max R)/λ)`, normalised to sum to one.
pub fn mppi_weights(returns: &[f64], temperature: f64) -> Vec<f64> {
    let max = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = returns.iter().map(|r| ((r - max) / temperature).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Perturbed, clamped copies of `plan`; returns `population·horizon` actions.
pub fn sample_candidates<R: Rng + ?Sized>(plan: &PlanState, cfg: &PlannerConfig, rng: &mut R) -> Vec<Action> {
    let h = plan.actions.len();
    let b = cfg.action_bound;
    let beta = cfg.smoothing;
    // stationary spread of the filtered noise, used to seed the recursion
    let stationary = cfg.noise_std * ((1.0 - beta) / (1.0 + beta)).sqrt();
    let mut out = Vec::with_capacity(cfg.population * h);
    for _ in 0..cfg.population {
        let mut eps: [f64; 2] = std::array::from_fn(|_| stationary * rng.sample::<f64, _>(StandardNormal));
        for a in &plan.actions {
            for e in eps.iter_mut() {
                let nu: f64 = cfg.noise_std * rng.sample::<f64, _>(StandardNormal);
                *e = beta * *e + (1.0 - beta) * nu;
            }
            out.push(Action::new((a.lat + eps[0]).clamp(-b, b), (a.long + eps[1]).clamp(-b, b)));
        }
    }
    out
}

/// Reward-weighted average of the candidates.
pub fn weighted_plan(candidates: &[Action], weights: &[f64], horizon: usize) -> PlanState {
    let mut actions = vec![Action::ZERO; horizon];
    for (k, w) in weights.iter().enumerate() {
        for (t, a) in actions.iter_mut().enumerate() {
            let c = candidates[k * horizon + t];
            a.lat += w * c.lat;
            a.long += w * c.long;
        }
    }
    PlanState { actions }
}

pub fn mppi_iterate<E: ReturnEstimator + ?Sized, R: Rng + ?Sized>(
    estimator: &E,
    plan: &PlanState,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Result<PlanState> {
    let h = plan.actions.len();
    let candidates = sample_candidates(plan, cfg, rng);
    let returns = estimator.returns(&candidates, h, rng)?;
    if returns.len() != cfg.population {
        return config(format!("estimator scored {} of {} candidates", returns.len(), cfg.population));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(crate::Error::Training("non-finite planner return".into()));
    }
    let w = mppi_weights(&returns, cfg.temperature);
    let b = cfg.action_bound;
    let mut next = weighted_plan(&candidates, &w, h);
    for a in &mut next.actions {
        // rounding of the convex combination may step past the bound
        a.lat = a.lat.clamp(-b, b);
        a.long = a.long.clamp(-b, b);
    }
    Ok(next)
}

/// Runs the configured number of iterations and returns the first action
/// together with the warm start for the next control step.
pub fn plan_action<E: ReturnEstimator + ?Sized, R: Rng + ?Sized>(
    estimator: &E,
    prev: &PlanState,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Result<(Action, PlanState)> {
    let mut plan = prev.clone();
    for _ in 0..cfg.iterations {
        plan = mppi_iterate(estimator, &plan, cfg, rng)?;
    }
    Ok((plan.actions[0], plan.shifted()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Return `−Σ_t (a_t^lat − target)²`.
    pub(crate) struct Quadratic(pub f64);

    impl ReturnEstimator for Quadratic {
        fn returns<R: Rng + ?Sized>(&self, c: &[Action], h: usize, _: &mut R) -> Result<Vec<f64>> {
            Ok(c.chunks(h).map(|s| -s.iter().map(|a| (a.lat - self.0).powi(2)).sum::<f64>()).collect())
        }
    }

    struct Flat;

    impl ReturnEstimator for Flat {
        fn returns<R: Rng + ?Sized>(&self, c: &[Action], h: usize, _: &mut R) -> Result<Vec<f64>> {
            Ok(vec![1.0; c.len() / h])
        }
    }

    #[test]
    fn uniform_scores_keep_the_plan() {
        let cfg = PlannerConfig {
            population: 20_000,
            ..Default::default()
        };
        let plan = PlanState {
            actions: (0..10).map(|t| Action::new(0.01 * t as f64, -0.05)).collect(),
        };
        let next = mppi_iterate(&Flat, &plan, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (a, b) in next.actions.iter().zip(&plan.actions) {
            assert!((a.lat - b.lat).abs() < 2e-3 && (a.long - b.long).abs() < 2e-3);
        }
    }

    #[test]
    fn single_candidate_is_the_plan() {
        let cfg = PlannerConfig {
            population: 1,
            noise_std: 0.5,
            ..Default::default()
        };
        let plan = PlanState::zeros(10);
        let mut r1 = ChaCha8Rng::seed_from_u64(4);
        let mut r2 = r1.clone();
        let next = mppi_iterate(&Quadratic(0.1), &plan, &cfg, &mut r1).unwrap();
        let cand = sample_candidates(&plan, &cfg, &mut r2);
        assert_eq!(next.actions, cand);
        assert!(next.actions.iter().all(|a| a.within(0.2)));
    }

    #[test]
    fn tiny_temperature_selects_argmax() {
        let cfg = PlannerConfig {
            temperature: 1e-9,
            ..Default::default()
        };
        let plan = PlanState::zeros(10);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = r1.clone();
        let next = mppi_iterate(&Quadratic(0.1), &plan, &cfg, &mut r1).unwrap();
        let cand = sample_candidates(&plan, &cfg, &mut r2);
        let ret = Quadratic(0.1).returns(&cand, 10, &mut r2).unwrap();
        let best = (0..ret.len()).max_by(|a, b| ret[*a].total_cmp(&ret[*b])).unwrap();
        assert_eq!(next.actions, cand[best * 10..(best + 1) * 10].to_vec());
    }

    #[test]
    fn plan_action_is_reproducible_and_shifts() {
        let cfg = PlannerConfig::default();
        let plan = PlanState::zeros(10);
        let a = plan_action(&Quadratic(0.1), &plan, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = plan_action(&Quadratic(0.1), &plan, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.actions.len(), 10);
        assert_eq!(a.1.actions[9], Action::ZERO);
        assert!(a.0.within(0.2));
    }

    /// Settings under which the quadratic toy converges in two iterations.
    pub(crate) fn toy_config() -> PlannerConfig {
        PlannerConfig {
            temperature: 0.08,
            noise_std: 0.6,
            smoothing: 0.9,
            ..Default::default()
        }
    }

    #[test]
    fn quadratic_toy_converges_in_two_iterations() {
        let cfg = toy_config();
        let mut hits = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut plan = PlanState::zeros(10);
            for _ in 0..2 {
                plan = mppi_iterate(&Quadratic(0.1), &plan, &cfg, &mut rng).unwrap();
            }
            if (plan.actions[0].lat - 0.1).abs() < 0.02 {
                hits += 1;
            }
        }
        assert!(hits >= 190, "{hits}/200");
    }

    struct Shifted(f64);

    impl ReturnEstimator for Shifted {
        fn returns<R: Rng + ?Sized>(&self, c: &[Action], h: usize, rng: &mut R) -> Result<Vec<f64>> {
            Ok(Quadratic(0.1).returns(c, h, rng)?.into_iter().map(|r| r + self.0).collect())
        }
    }

    proptest! {
        #[test]
        fn constant_return_shift_leaves_plan_unchanged(seed in 0u64..1000, c in -1e4f64..1e4) {
            let cfg = PlannerConfig { temperature: 0.05, ..Default::default() };
            let plan = PlanState::zeros(10);
            let a = mppi_iterate(&Shifted(0.0), &plan, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = mppi_iterate(&Shifted(c), &plan, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for (x, y) in a.actions.iter().zip(&b.actions) {
                prop_assert!((x.lat - y.lat).abs() <= 1e-9 && (x.long - y.long).abs() <= 1e-9);
            }
        }

        #[test]
        fn weights_are_a_distribution(r in prop::collection::vec(-1e4f64..1e4, 1..50), lam in 1e-3f64..1e3) {
            let w = mppi_weights(&r, lam);
            prop_assert!(w.iter().all(|v| *v >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn plans_stay_in_bounds(seed in 0u64..1000, sigma in 0.01f64..2.0, target in -1.0f64..1.0) {
            let cfg = PlannerConfig { population: 16, noise_std: sigma, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut plan = PlanState::zeros(10);
            for _ in 0..3 {
                plan = mppi_iterate(&Quadratic(target), &plan, &cfg, &mut rng).unwrap();
                prop_assert!(plan.actions.iter().all(|a| a.within(0.2)));
            }
        }
    }
}
