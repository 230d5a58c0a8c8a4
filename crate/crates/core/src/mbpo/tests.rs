use super::*;
use crate::agent::AgentConfig;
use crate::env::{Action, EnvConfig, EnvSnapshot, Pose, TrajectoryEnv, VehicleState};
use crate::model::{EnsembleConfig, OracleDynamics, MODEL_INPUT_DIM};
use crate::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tagged(reward: f64, n: usize) -> ReplayBuffer {
    let mut b = ReplayBuffer::new(n);
    for _ in 0..n {
        b.push(Transition {
            obs: vec![],
            action: Action::ZERO,
            reward,
            next_obs: vec![],
            done: false,
            pose: Pose::default(),
            arc: 0.0,
            kpis: Default::default(),
        });
    }
    b
}

#[test]
fn mixing_counts() {
    let real = tagged(1.0, 600);
    let synth = tagged(2.0, 600);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (rho, k) in [(0.05, 26), (1.0, 512), (0.0, 0), (0.5, 256)] {
        let b = mixed_batch(&real, &synth, 512, rho, &mut rng).unwrap();
        assert_eq!(b.len(), 512);
        assert_eq!(b.iter().filter(|t| t.reward == 1.0).count(), k, "rho {rho}");
    }
    assert_eq!(real_share(512, 0.05), 26);
    let m = Mixed {
        real: &real,
        synthetic: &tagged(2.0, 100),
        real_fraction: 0.05,
    };
    assert!(m.can_draw(106) && !m.can_draw(107));
}

struct Fixture {
    task: Task,
    env: TrajectoryEnv,
    real: ReplayBuffer,
    agent: ActorCritic,
}

fn fixture(seed: u64) -> Fixture {
    let task = Task::new(EnvConfig::default()).unwrap();
    let mut env = TrajectoryEnv::new(task.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut real = ReplayBuffer::new(1000);
    env.reset(seed);
    for _ in 0..60 {
        let a = Action::new(rng.random_range(-0.2..0.2), rng.random_range(-0.05..0.2));
        let (t, r) = Transition::record(&mut env, a).unwrap();
        real.push(t);
        if r.done() {
            env.reset(seed);
        }
    }
    let mut cfg = AgentConfig::sac();
    cfg.policy_layers = 1;
    cfg.policy_nodes = 8;
    cfg.critic_layers = 1;
    cfg.critic_nodes = 8;
    cfg.batch_size = 4;
    let agent = ActorCritic::new(cfg, task.observation_scale(), task.config.action_bound, &mut rng).unwrap();
    Fixture { task, env, real, agent }
}

fn oracle(task: &Task) -> OracleDynamics {
    OracleDynamics::new(task.config.vehicle.clone(), task.config.dt, task.config.substeps)
}

#[test]
fn oracle_branches_reproduce_env_steps() {
    let mut f = fixture(1);
    let cfg = MbpoConfig {
        rollout_length: 1,
        rollouts: 100,
        ..MbpoConfig::default()
    };
    let mut synth = ReplayBuffer::new(1000);
    let real_len = f.real.len();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = branch_rollouts(&oracle(&f.task), &f.task, &f.real, &f.agent, &cfg, &mut synth, &mut rng).unwrap();
    assert_eq!(n, 100);
    assert_eq!(synth.len(), 100);
    assert_eq!(f.real.len(), real_len);
    for t in synth.iter() {
        let vehicle = VehicleState::from_slice(&t.obs);
        let (footpoint, deviation) = f.task.match_trajectory(&t.pose, &vehicle, Some(t.arc));
        f.env.restore(EnvSnapshot {
            vehicle,
            pose: t.pose,
            footpoint,
            deviation,
            step: 0,
            done: false,
        });
        let (real, _) = Transition::record(&mut f.env, t.action).unwrap();
        assert_eq!(real.obs, t.obs);
        for (a, b) in real.next_obs.iter().zip(&t.next_obs) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
        assert!((real.reward - t.reward).abs() <= 1e-9);
        assert_eq!(real.done, t.done);
    }
}

#[test]
fn synthetic_rewards_are_computed_from_own_state() {
    let f = fixture(3);
    let cfg = MbpoConfig {
        rollout_length: 3,
        rollouts: 30,
        ..MbpoConfig::default()
    };
    let mut synth = ReplayBuffer::new(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ens = ProbabilisticEnsemble::new(MODEL_INPUT_DIM, 10, small_ensemble(), &mut rng).unwrap();
    let (x, y, n) = rate_dataset(f.real.iter(), f.task.config.dt);
    ens.train(&x, &y, n, &quick_train(), &mut rng).unwrap();
    branch_rollouts(&ens, &f.task, &f.real, &f.agent, &cfg, &mut synth, &mut rng).unwrap();
    assert!(synth.len() >= 30);
    for t in synth.iter() {
        let v = VehicleState::from_slice(&t.next_obs);
        let d = crate::env::DeviationState::from_slice(&t.next_obs[crate::env::VEHICLE_DIM..]);
        let r = f.task.reward(&v, &d);
        assert!((r - t.reward).abs() <= 1e-12 * r.abs().max(1.0), "{r} vs {}", t.reward);
    }
}

#[test]
fn breached_branch_state_emits_nothing() {
    let f = fixture(5);
    let mut t = f.real.get(10).clone();
    let n = (t.pose.yaw + std::f64::consts::FRAC_PI_2).sin_cos();
    t.pose.x += 5.0 * n.1;
    t.pose.y += 5.0 * n.0;
    let mut real = ReplayBuffer::new(1);
    real.push(t);
    let mut synth = ReplayBuffer::new(10);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = MbpoConfig {
        rollouts: 5,
        ..MbpoConfig::default()
    };
    let n = branch_rollouts(&oracle(&f.task), &f.task, &real, &f.agent, &cfg, &mut synth, &mut rng).unwrap();
    assert_eq!(n, 0);
    assert!(synth.is_empty());
}

#[test]
fn untrained_model_and_empty_buffer_are_usage_errors() {
    let f = fixture(7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ens = ProbabilisticEnsemble::new(MODEL_INPUT_DIM, 10, small_ensemble(), &mut rng).unwrap();
    let mut synth = ReplayBuffer::new(10);
    let cfg = MbpoConfig::default();
    let e = branch_rollouts(&ens, &f.task, &f.real, &f.agent, &cfg, &mut synth, &mut rng).unwrap_err();
    assert!(matches!(e, Error::Usage(_)));
    let e = branch_rollouts(&oracle(&f.task), &f.task, &ReplayBuffer::new(3), &f.agent, &cfg, &mut synth, &mut rng)
        .unwrap_err();
    assert!(matches!(e, Error::Usage(_)));
}

fn small_ensemble() -> EnsembleConfig {
    EnsembleConfig {
        members: 2,
        hidden_layers: 1,
        hidden_nodes: 8,
        ..EnsembleConfig::default()
    }
}

fn quick_train() -> ModelTrainConfig {
    ModelTrainConfig {
        epochs: 2,
        patience: 1,
        batch_size: 16,
        retrain_every: 5,
        holdout_fraction: 0.2,
    }
}

#[test]
fn retrain_cadence_and_update_ratio() {
    let f = fixture(9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let ens = ProbabilisticEnsemble::new(MODEL_INPUT_DIM, 10, small_ensemble(), &mut rng).unwrap();
    let mut learner_cfg = f.agent.config().clone();
    learner_cfg.utd = 20;
    let learner = ActorCritic::new(learner_cfg, f.task.observation_scale(), 0.2, &mut rng).unwrap();
    let cfg = MbpoConfig {
        rollout_length: 2,
        rollouts: 10,
        capacity: 15,
        real_fraction: 0.25,
    };
    let mut mb = Mbpo::new(cfg, quick_train(), ens, learner).unwrap();
    let mut real = ReplayBuffer::new(1000);
    let items: Vec<Transition> = f.real.iter().cloned().collect();
    let mut last_synth = 0;
    for (i, t) in items.into_iter().take(20).enumerate() {
        let step = i + 1;
        let s = mb.mbpo_step(&f.task, &mut real, t, &mut rng).unwrap();
        assert_eq!(s.model_report.is_some(), step % 5 == 0, "step {step}");
        assert_eq!(mb.counts(), (step as u64, (step / 5) as u64));
        if step >= 5 {
            assert_eq!(s.update.critic_rounds, 20);
        } else {
            assert_eq!(s.update.critic_rounds, 0);
        }
        assert!(mb.synthetic.len() >= last_synth && mb.synthetic.len() <= 15);
        last_synth = mb.synthetic.len();
    }
    assert_eq!(real.len(), 20);
    assert_eq!(last_synth, 15);
}

#[test]
fn config_checks() {
    assert!(MbpoConfig::default().validate(512).is_ok());
    let c = MbpoConfig {
        capacity: 100,
        ..MbpoConfig::default()
    };
    assert!(c.validate(512).is_err());
    let mut kv = KvMap::default();
    let c = MbpoConfig {
        rollout_length: 5,
        ..MbpoConfig::default()
    };
    c.write_kv(&mut kv);
    let mut back = MbpoConfig::default();
    back.apply_kv(&mut kv).unwrap();
    assert_eq!(back, c);
}
