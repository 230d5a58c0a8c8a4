//! Browser bindings: track explorer, an MPPI driver planning on the exact
//! vehicle model, and open-loop step responses of the surrogate vehicle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajrl::env::{integrate, Action, Pose, Task, TrackSpec, TrajectoryEnv, VehicleState};
use trajrl::harness::{Controller, Episode};
use trajrl::model::OracleDynamics;
use trajrl::planner::{PlanState, PlannerConfig};
use wasm_bindgen::prelude::*;

fn loop_task(straight: f64, episode_length: usize) -> trajrl::Result<Task> {
    let mut cfg = trajrl::env::EnvConfig {
        episode_length,
        ..Default::default()
    };
    cfg.track = TrackSpec::benchmark_loop(straight);
    Task::new(cfg)
}

fn js(e: trajrl::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct TrackView {
    task: Task,
}

#[wasm_bindgen]
impl TrackView {
    /// Benchmark loop with straights of the given length, m.
    #[wasm_bindgen(constructor)]
    pub fn new(straight: f64) -> Result<TrackView, JsError> {
        Self::build(straight).map_err(js)
    }

    pub fn length(&self) -> f64 {
        self.task.track.length()
    }

    /// Flattened `x, y, speed` per waypoint.
    pub fn points(&self) -> Vec<f64> {
        self.task.track.points().iter().flat_map(|w| [w.x, w.y, w.speed]).collect()
    }

    /// `[foot x, foot y, arc, signed cross-track error, target speed]` for a
    /// point on the plane, with no search hint.
    pub fn footpoint(&self, x: f64, y: f64) -> Vec<f64> {
        let (fp, d) = self.task.match_trajectory(&Pose::new(x, y, 0.0), &VehicleState::default(), None);
        vec![fp.x, fp.y, fp.arc, d.errors.cross_track, fp.speed]
    }
}

impl TrackView {
    pub fn build(straight: f64) -> trajrl::Result<Self> {
        Ok(Self {
            task: loop_task(straight, 1)?,
        })
    }
}

/// Closed-loop MPPI on the exact surrogate model.
#[wasm_bindgen]
pub struct Drive {
    env: TrajectoryEnv,
    model: OracleDynamics,
    planner: PlannerConfig,
    plan: Option<PlanState>,
    rng: ChaCha8Rng,
    ret: f64,
    distance: f64,
    done: bool,
}

#[wasm_bindgen]
impl Drive {
    #[wasm_bindgen(constructor)]
    pub fn new(straight: f64, temperature: f64, noise_std: f64, seed: u64) -> Result<Drive, JsError> {
        Self::build(straight, temperature, noise_std, seed).map_err(js)
    }

    /// One control interval. Returns
    /// `[x, y, yaw, vx, cross-track error, reward, return, laps, done]`.
    pub fn step(&mut self) -> Result<Vec<f64>, JsError> {
        self.advance().map_err(js)
    }
}

impl Drive {
    pub fn build(straight: f64, temperature: f64, noise_std: f64, seed: u64) -> trajrl::Result<Self> {
        let task = loop_task(straight, 5000)?;
        let model = OracleDynamics::new(task.config.vehicle.clone(), task.config.dt, task.config.substeps);
        let planner = PlannerConfig {
            temperature,
            noise_std,
            particles: 1,
            sample_noise: false,
            ..PlannerConfig::default()
        };
        planner.validate()?;
        let mut env = TrajectoryEnv::new(task);
        env.reset(seed);
        Ok(Self {
            env,
            model,
            planner,
            plan: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ret: 0.0,
            distance: 0.0,
            done: false,
        })
    }

    pub fn advance(&mut self) -> trajrl::Result<Vec<f64>> {
        if !self.done {
            let c = Controller::Planner {
                model: &self.model,
                config: &self.planner,
            };
            let mut ep = Episode::new(&c);
            if let Some(p) = self.plan.take() {
                ep.set_plan(p);
            }
            let a = ep.act(&self.env, &mut self.rng)?;
            self.plan = Some(ep.into_plan());
            let r = self.env.step(a)?;
            self.ret += r.reward;
            self.distance += r.info.distance;
            self.done = r.done();
        }
        let s = self.env.snapshot().expect("env is reset");
        let laps = self.distance / self.env.task().track.length();
        Ok(vec![
            s.pose.x,
            s.pose.y,
            s.pose.yaw,
            s.vehicle.vx,
            s.deviation.errors.cross_track,
            self.env.task().reward(&s.vehicle, &s.deviation),
            self.ret,
            laps,
            self.done as u8 as f64,
        ])
    }
}

/// Open-loop response to a held control input from an initial speed.
/// Returns rows of `t, vx, yaw rate, lateral accel, steer angle, roll, pitch`
/// every control interval.
#[wasm_bindgen]
pub fn step_response(c_lat: f64, c_long: f64, speed: f64, seconds: f64) -> Vec<f64> {
    let cfg = trajrl::env::EnvConfig::default();
    let mut v = VehicleState {
        vx: speed.max(0.0),
        ..Default::default()
    };
    v = trajrl::env::apply_action(&v, Action::new(c_lat, c_long));
    let n = (seconds.max(0.0) / cfg.dt).round() as usize;
    let mut out = Vec::with_capacity(7 * (n + 1));
    for k in 0..=n {
        out.extend([k as f64 * cfg.dt, v.vx, v.yaw_rate, v.ay, v.steer, v.roll, v.pitch]);
        v = integrate(&v, &cfg.vehicle, cfg.dt, cfg.substeps);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn track_view_footpoint_on_track_is_itself() {
        let t = TrackView::build(150.0).unwrap();
        let p = t.points();
        assert_eq!(p.len() % 3, 0);
        let f = t.footpoint(p[30], p[31]);
        assert!(f[3].abs() < 1e-9);
        assert!((t.length() - 519.0).abs() < 5.0);
    }

    #[test]
    fn drive_makes_progress() {
        let mut d = Drive::build(150.0, 20.0, 0.08, 0).unwrap();
        let mut last = vec![];
        for _ in 0..80 {
            last = d.advance().unwrap();
        }
        assert_eq!(last[8], 0.0);
        assert!(last[3] > 5.0, "speed {}", last[3]);
        assert!(last[4].abs() < 1.0);
    }

    #[test]
    fn step_response_shapes() {
        let r = step_response(0.0, 0.5, 0.0, 3.0);
        assert_eq!(r.len(), 7 * 31);
        let vx_end = r[7 * 30 + 1];
        assert!(vx_end > 1.0);
        // straight-line throttle: no yaw
        assert!(r.chunks(7).all(|row| row[2].abs() < 1e-12));
        let left = step_response(0.3, 0.0, 15.0, 2.0);
        let right = step_response(-0.3, 0.0, 15.0, 2.0);
        let end = 7 * 20;
        assert!(left[end + 2] > 0.0);
        assert!((left[end + 2] + right[end + 2]).abs() < 1e-9);
    }
}
