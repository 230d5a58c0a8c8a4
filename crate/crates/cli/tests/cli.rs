use std::path::Path;
use std::process::Command;

const TINY: &str = "preset = desk
train.steps = 120
train.exploration_steps = 100
train.eval_every = 60
train.eval_episodes = 2
env.episode_length = 40
agent.batch_size = 16
agent.utd = 1
agent.policy_layers = 1
agent.policy_nodes = 8
agent.critic_layers = 1
agent.critic_nodes = 8
model.members = 2
model.hidden_layers = 1
model.hidden_nodes = 8
model.epochs = 2
model.batch_size = 16
model.retrain_every = 50
planner.population = 8
planner.horizon = 3
planner.particles = 1
mbpo.rollouts = 10
mbpo.capacity = 100
mbpo.real_fraction = 0.5
";

fn trajrl(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_trajrl")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn train_eval_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let runs = dir.path().join("runs");
    for algo in ["sac", "pets-mppi"] {
        for seed in ["0", "1"] {
            trajrl(&["train", "--config", p(&cfg), "--algo", algo, "--seed", seed, "--out", p(&runs)]);
        }
    }
    let metrics = std::fs::read_to_string(runs.join("sac_seed1.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next(),
        Some("step,seed,return,ect_mean,egamma_mean,ex_mean,ay_mean,alat_mean,along_mean,laps,termination")
    );
    // evaluations at 0 and 120, two episodes each
    assert_eq!(lines.count(), 4);

    let ckpt = runs.join("pets-mppi_seed0.ckpt");
    let out = trajrl(&["eval", "--checkpoint", p(&ckpt), "--episodes", "3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(1).all(|l| l.starts_with("120,0,")));

    let plots = dir.path().join("plots");
    trajrl(&["plot", "--in", p(&runs), "--out", p(&plots)]);
    let returns = std::fs::read_to_string(plots.join("returns.csv")).unwrap();
    assert!(returns.starts_with("algo,step,seeds,return_mean,return_sd"));
    assert!(returns.lines().any(|l| l.starts_with("sac,120,2,")));
    assert!(returns.lines().any(|l| l.starts_with("pets-mppi,0,2,")));
}

#[test]
fn config_dump_is_stable() {
    let out = trajrl(&["config", "--preset", "desk", "--algo", "redq"]);
    let again = Command::new(env!("CARGO_BIN_EXE_trajrl")).args(["config", "--preset", "desk", "--algo", "redq"]).output().unwrap();
    assert_eq!(out.stdout, again.stdout);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("agent.critics = 10\n"));
    assert!(text.contains("train.algo = redq\n"));
}

#[test]
fn bad_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "agent.critcs = 3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_trajrl"))
        .args(["train", "--config", p(&cfg), "--out", p(dir.path())])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("agent.critcs"));
}
