//! MPPI on the exact vehicle model: with no model error the planner should
//! drive the desk track at close to the per-step optimum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajrl::env::Task;
use trajrl::harness::{evaluate, Algo, Controller, ExperimentConfig, Termination};
use trajrl::model::OracleDynamics;
use trajrl::planner::PlannerConfig;

#[test]
fn oracle_mppi_completes_desk_laps() {
    let cfg = ExperimentConfig::desk(Algo::PetsMppi);
    let task = Task::new(cfg.env.clone()).unwrap();
    let oracle = OracleDynamics::new(task.config.vehicle.clone(), task.config.dt, task.config.substeps);
    let planner = PlannerConfig {
        particles: 1,
        sample_noise: false,
        ..PlannerConfig::default()
    };
    let c = Controller::Planner {
        model: &oracle,
        config: &planner,
    };
    let r = evaluate(&c, &task, 1, 0, 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let optimum = cfg.env.episode_length as f64 * 50.0;
    assert_eq!(r[0].termination, Termination::Length);
    assert!(r[0].laps >= 1.0, "{:?}", r[0]);
    assert!(r[0].ret >= 0.8 * optimum, "return {} vs optimum {optimum}", r[0].ret);
}
