//! Trajectory-following task: surrogate vehicle, waypoint track, tracking
//! errors, reward and the episode loop.

pub mod geometry;
pub mod reward;
pub mod track;
pub mod vehicle;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

pub use geometry::{
    advance_pose, compute_deviation, find_footpoint, tracking_errors, wrap_angle, DeviationState, Footpoint, Pose,
    SearchWindow, TrackingErrors, DEVIATION_DIM, NUM_WAYPOINTS,
};
pub use reward::{reward, reward_from_errors, RewardWeights};
pub use track::{make_track, Segment, Track, TrackSpec, Waypoint};
pub use vehicle::{
    apply_action, integrate, surrogate_dynamics, Action, VehicleParams, VehicleState, DYN_DIM, HISTORY_LEN,
    VEHICLE_DIM,
};

use crate::error::{config, usage, Error, Result};
use crate::kv::KvMap;

/// Length of the model-free observation `[s^v, s^d]`.
pub const OBS_DIM: usize = VEHICLE_DIM + DEVIATION_DIM;

/// Task settings shared by the real environment and model rollouts.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub episode_length: usize,
    /// Episodes terminate once `|e_ct|` exceeds this, m.
    pub threshold: f64,
    /// Control sample time, s.
    pub dt: f64,
    pub substeps: usize,
    /// Arc spacing of the observed waypoints, m.
    pub waypoint_spacing: f64,
    /// Per-step bound on each action component.
    pub action_bound: f64,
    pub weights: RewardWeights,
    pub vehicle: VehicleParams,
    pub window: SearchWindow,
    pub track: TrackSpec,
    /// Optional waypoint CSV replacing `track`.
    pub track_file: Option<String>,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode_length: 2000,
            threshold: 3.0,
            dt: 0.1,
            substeps: 10,
            waypoint_spacing: 5.0,
            action_bound: 0.2,
            weights: RewardWeights::default(),
            vehicle: VehicleParams::default(),
            window: SearchWindow::default(),
            track: TrackSpec::benchmark(),
            track_file: None,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episode_length == 0 || self.substeps == 0 {
            return config("env.episode_length and env.substeps must be positive");
        }
        for (name, v) in [
            ("env.threshold_ect", self.threshold),
            ("env.sample_time_ms", self.dt),
            ("env.waypoint_spacing", self.waypoint_spacing),
            ("env.action_bound", self.action_bound),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return config(format!("{name} must be positive, got {v}"));
            }
        }
        if self.action_bound > 2.0 {
            return config("env.action_bound above 2 makes the control clamp meaningless");
        }
        self.weights.validate()?;
        self.vehicle.validate()
    }

    /// Consumes `env.*`, `reward.*`, `vehicle.*` and `track.*` keys.
    pub fn apply_kv(&mut self, kv: &mut KvMap) -> Result<()> {
        kv.take("env.episode_length", &mut self.episode_length)?;
        kv.take("env.threshold_ect", &mut self.threshold)?;
        let mut ms = self.dt * 1000.0;
        kv.take("env.sample_time_ms", &mut ms)?;
        self.dt = ms / 1000.0;
        kv.take("env.substeps", &mut self.substeps)?;
        kv.take("env.waypoint_spacing", &mut self.waypoint_spacing)?;
        kv.take("env.action_bound", &mut self.action_bound)?;
        kv.take("env.seed", &mut self.seed)?;
        kv.take("env.search_behind", &mut self.window.behind)?;
        kv.take("env.search_ahead", &mut self.window.ahead)?;
        if let Some(path) = kv.take_string("env.track_file") {
            self.track_file = Some(path);
        }

        let w = &mut self.weights;
        kv.take("reward.survival", &mut w.survival)?;
        kv.take("reward.w_ct", &mut w.cross_track)?;
        kv.take("reward.w_vx", &mut w.velocity)?;
        kv.take("reward.w_course", &mut w.course)?;
        kv.take("reward.w_ay", &mut w.lat_accel)?;

        let t = &mut self.track;
        if kv.get("track.straight_length").is_some() {
            let mut len = 0.0;
            kv.take("track.straight_length", &mut len)?;
            if !(len > 0.0) {
                return config("track.straight_length must be positive");
            }
            t.segments = TrackSpec::benchmark_loop(len).segments;
        }
        kv.take("track.spacing", &mut t.spacing)?;
        kv.take("track.max_speed", &mut t.max_speed)?;
        kv.take("track.max_lat_accel", &mut t.max_lat_accel)?;
        kv.take("track.max_long_accel", &mut t.max_long_accel)?;
        kv.take("track.start_speed", &mut t.start_speed)?;

        let p = &mut self.vehicle;
        kv.take("vehicle.mass", &mut p.mass)?;
        kv.take("vehicle.yaw_inertia", &mut p.yaw_inertia)?;
        kv.take("vehicle.cog_to_front", &mut p.cog_to_front)?;
        kv.take("vehicle.cog_to_rear", &mut p.cog_to_rear)?;
        kv.take("vehicle.cornering_front", &mut p.cornering_front)?;
        kv.take("vehicle.cornering_rear", &mut p.cornering_rear)?;
        kv.take("vehicle.steer_max", &mut p.steer_max)?;
        kv.take("vehicle.steer_time_constant", &mut p.steer_time_constant)?;
        kv.take("vehicle.force_max", &mut p.force_max)?;
        kv.take("vehicle.drag", &mut p.drag)?;
        kv.take("vehicle.accel_time_constant", &mut p.accel_time_constant)?;
        kv.take("vehicle.pitch_gain", &mut p.pitch_gain)?;
        kv.take("vehicle.roll_gain", &mut p.roll_gain)?;
        kv.take("vehicle.body_frequency", &mut p.body_frequency)?;
        kv.take("vehicle.body_damping", &mut p.body_damping)?;
        kv.take("vehicle.low_speed", &mut p.low_speed)?;
        kv.take("vehicle.low_speed_time_constant", &mut p.low_speed_time_constant)?;
        Ok(())
    }

    /// Writes every key understood by [`EnvConfig::apply_kv`].
    pub fn write_kv(&self, kv: &mut KvMap) {
        kv.insert("env.episode_length", self.episode_length);
        kv.insert("env.threshold_ect", self.threshold);
        kv.insert("env.sample_time_ms", self.dt * 1000.0);
        kv.insert("env.substeps", self.substeps);
        kv.insert("env.waypoint_spacing", self.waypoint_spacing);
        kv.insert("env.action_bound", self.action_bound);
        kv.insert("env.seed", self.seed);
        kv.insert("env.search_behind", self.window.behind);
        kv.insert("env.search_ahead", self.window.ahead);
        if let Some(p) = &self.track_file {
            kv.insert("env.track_file", p);
        }
        let w = &self.weights;
        kv.insert("reward.survival", w.survival);
        kv.insert("reward.w_ct", w.cross_track);
        kv.insert("reward.w_vx", w.velocity);
        kv.insert("reward.w_course", w.course);
        kv.insert("reward.w_ay", w.lat_accel);
        let t = &self.track;
        if let Some(len) = t.loop_straight() {
            kv.insert("track.straight_length", len);
        }
        kv.insert("track.spacing", t.spacing);
        kv.insert("track.max_speed", t.max_speed);
        kv.insert("track.max_lat_accel", t.max_lat_accel);
        kv.insert("track.max_long_accel", t.max_long_accel);
        kv.insert("track.start_speed", t.start_speed);
        let p = &self.vehicle;
        kv.insert("vehicle.mass", p.mass);
        kv.insert("vehicle.yaw_inertia", p.yaw_inertia);
        kv.insert("vehicle.cog_to_front", p.cog_to_front);
        kv.insert("vehicle.cog_to_rear", p.cog_to_rear);
        kv.insert("vehicle.cornering_front", p.cornering_front);
        kv.insert("vehicle.cornering_rear", p.cornering_rear);
        kv.insert("vehicle.steer_max", p.steer_max);
        kv.insert("vehicle.steer_time_constant", p.steer_time_constant);
        kv.insert("vehicle.force_max", p.force_max);
        kv.insert("vehicle.drag", p.drag);
        kv.insert("vehicle.accel_time_constant", p.accel_time_constant);
        kv.insert("vehicle.pitch_gain", p.pitch_gain);
        kv.insert("vehicle.roll_gain", p.roll_gain);
        kv.insert("vehicle.body_frequency", p.body_frequency);
        kv.insert("vehicle.body_damping", p.body_damping);
        kv.insert("vehicle.low_speed", p.low_speed);
        kv.insert("vehicle.low_speed_time_constant", p.low_speed_time_constant);
    }

    /// Reads a standalone environment config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut kv = KvMap::parse(&std::fs::read_to_string(path)?)?;
        let mut cfg = Self::default();
        cfg.apply_kv(&mut kv)?;
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn build_track(&self) -> Result<Track> {
        match &self.track_file {
            Some(path) => {
                let f = File::open(path).map_err(|e| Error::Config(format!("track file {path}: {e}")))?;
                Track::read_csv(BufReader::new(f), true)
            }
            None => make_track(&self.track),
        }
    }
}

/// Immutable task definition: configuration plus the built track.
#[derive(Clone, Debug)]
pub struct Task {
    pub config: EnvConfig,
    pub track: Arc<Track>,
}

impl Task {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let track = Arc::new(config.build_track()?);
        Ok(Self { config, track })
    }

    pub fn with_track(config: EnvConfig, track: Track) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            track: Arc::new(track),
        })
    }

    /// Footpoint and deviation state of a vehicle at `pose`, searching around `hint`.
    pub fn match_trajectory(&self, pose: &Pose, v: &VehicleState, hint: Option<f64>) -> (Footpoint, DeviationState) {
        let fp = find_footpoint(pose.x, pose.y, &self.track, hint, self.config.window);
        let d = compute_deviation(pose, v, &self.track, &fp, self.config.waypoint_spacing);
        (fp, d)
    }

    pub fn reward(&self, v: &VehicleState, d: &DeviationState) -> f64 {
        reward(v, d, &self.config.weights)
    }

    pub fn breached(&self, d: &DeviationState) -> bool {
        d.errors.cross_track.abs() > self.config.threshold
    }

    /// Start pose: first waypoint, aligned with the track.
    pub fn start_pose(&self) -> Pose {
        let w = self.track.points()[0];
        Pose::new(w.x, w.y, w.heading)
    }

    /// Per-dimension divisors that bring observations to order one.
    pub fn observation_scale(&self) -> Vec<f64> {
        let mut s = vec![0.05, 0.2, 0.05, 0.2, 0.5, 10.0, 3.0, 1.0, 4.0, 0.3, 1.0, 1.0];
        s.extend(std::iter::repeat_n(self.config.action_bound, 2 * HISTORY_LEN));
        s.extend([1.0, 0.3, 5.0]);
        for i in 0..NUM_WAYPOINTS {
            s.push((i + 1) as f64 * self.config.waypoint_spacing);
        }
        s.extend(std::iter::repeat_n(0.5, NUM_WAYPOINTS));
        s.extend(std::iter::repeat_n(10.0, NUM_WAYPOINTS));
        debug_assert_eq!(s.len(), OBS_DIM);
        s
    }
}

pub fn observation(v: &VehicleState, d: &DeviationState) -> Vec<f64> {
    let mut out = Vec::with_capacity(OBS_DIM);
    v.write_into(&mut out);
    d.write_into(&mut out);
    out
}

/// Absolute per-step quantities averaged into evaluation KPIs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepKpis {
    pub cross_track: f64,
    pub course: f64,
    pub velocity: f64,
    pub lat_accel: f64,
    pub action_lat: f64,
    pub action_long: f64,
}

impl StepKpis {
    pub fn new(v: &VehicleState, d: &DeviationState, a: Action) -> Self {
        Self {
            cross_track: d.errors.cross_track.abs(),
            course: d.errors.course.abs(),
            velocity: d.errors.velocity.abs(),
            lat_accel: v.ay.abs(),
            action_lat: a.lat.abs(),
            action_long: a.long.abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub pose: Pose,
    pub footpoint: Footpoint,
    pub kpis: StepKpis,
    /// Planar distance driven during this step, m.
    pub distance: f64,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// `|e_ct|` exceeded the threshold.
    pub terminated: bool,
    /// Episode length reached.
    pub truncated: bool,
    pub info: StepInfo,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Complete mutable state of an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSnapshot {
    pub vehicle: VehicleState,
    pub pose: Pose,
    pub footpoint: Footpoint,
    pub deviation: DeviationState,
    pub step: usize,
    pub done: bool,
}

/// Episode loop around a [`Task`].
#[derive(Clone, Debug)]
pub struct TrajectoryEnv {
    task: Task,
    state: Option<EnvSnapshot>,
    seed: u64,
}

impl TrajectoryEnv {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            state: None,
            seed: 0,
        }
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Places the vehicle at rest on the start line. The start is fixed, so
    /// the seed is only recorded.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.seed = seed;
        let pose = self.task.start_pose();
        let vehicle = VehicleState::default();
        let (footpoint, deviation) = self.task.match_trajectory(&pose, &vehicle, Some(0.0));
        let obs = observation(&vehicle, &deviation);
        self.state = Some(EnvSnapshot {
            vehicle,
            pose,
            footpoint,
            deviation,
            step: 0,
            done: false,
        });
        obs
    }

    pub fn snapshot(&self) -> Option<EnvSnapshot> {
        self.state.clone()
    }

    /// Replaces the episode state. Footpoint and deviation are recomputed
    /// from the pose, so tests may move the vehicle freely.
    pub fn restore(&mut self, mut snap: EnvSnapshot) {
        let hint = Some(snap.footpoint.arc);
        let (fp, d) = self.task.match_trajectory(&snap.pose, &snap.vehicle, hint);
        snap.footpoint = fp;
        snap.deviation = d;
        self.state = Some(snap);
    }

    pub fn observation(&self) -> Option<Vec<f64>> {
        self.state.as_ref().map(|s| observation(&s.vehicle, &s.deviation))
    }

    /// Advances one control interval. Actions are clamped to the configured bound.
    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        let st = match self.state.as_mut() {
            None => return usage("step called before reset"),
            Some(s) if s.done => return usage("step called on a finished episode; call reset first"),
            Some(s) => s,
        };
        if !(action.lat.is_finite() && action.long.is_finite()) {
            return usage(format!("non-finite action {action:?}"));
        }
        let b = self.task.config.action_bound;
        let a = Action::new(action.lat.clamp(-b, b), action.long.clamp(-b, b));
        let cfg = &self.task.config;
        let controlled = apply_action(&st.vehicle, a);
        let next = integrate(&controlled, &cfg.vehicle, cfg.dt, cfg.substeps);
        let pose = advance_pose(&st.pose, &st.vehicle, &next, cfg.dt);
        let (fp, d) = self.task.match_trajectory(&pose, &next, Some(st.footpoint.arc));
        let r = self.task.reward(&next, &d);
        let distance = (pose.x - st.pose.x).hypot(pose.y - st.pose.y);
        st.step += 1;
        let terminated = self.task.breached(&d);
        let truncated = !terminated && st.step >= cfg.episode_length;
        st.done = terminated || truncated;
        st.vehicle = next;
        st.pose = pose;
        st.footpoint = fp;
        st.deviation = d;
        Ok(StepResult {
            observation: observation(&next, &d),
            reward: r,
            terminated,
            truncated,
            info: StepInfo {
                pose,
                footpoint: fp,
                kpis: StepKpis::new(&next, &d, a),
                distance,
                step: st.step,
            },
        })
    }
}
