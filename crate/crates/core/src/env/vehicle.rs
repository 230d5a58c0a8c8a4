//! Vehicle-frame state, the control accumulation rule and the surrogate
//! dynamic bicycle model that stands in for a full vehicle simulator.

use crate::error::{config, Result};

/// Number of dynamic (integrated) fields of [`VehicleState`].
pub const DYN_DIM: usize = 10;
/// Length of the action history carried in the state.
pub const HISTORY_LEN: usize = 5;
/// Length of [`VehicleState::to_vec`].
pub const VEHICLE_DIM: usize = DYN_DIM + 2 + 2 * HISTORY_LEN;

/// Two-dimensional action: increments of the lateral and longitudinal controls.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Action {
    pub lat: f64,
    pub long: f64,
}

impl Action {
    pub const ZERO: Action = Action { lat: 0.0, long: 0.0 };

    pub fn new(lat: f64, long: f64) -> Self {
        Self { lat, long }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.lat, self.long]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { lat: v[0], long: v[1] }
    }

    pub fn within(&self, bound: f64) -> bool {
        let tol = 1e-12;
        self.lat.is_finite() && self.long.is_finite() && self.lat.abs() <= bound + tol && self.long.abs() <= bound + tol
    }
}

/// Dynamics of the vehicle expressed in its own frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VehicleState {
    pub pitch: f64,
    pub pitch_rate: f64,
    pub roll: f64,
    pub roll_rate: f64,
    pub yaw_rate: f64,
    /// Longitudinal velocity ẋ.
    pub vx: f64,
    /// Longitudinal acceleration ẍ.
    pub ax: f64,
    /// Lateral velocity ẏ.
    pub vy: f64,
    /// Lateral acceleration ÿ.
    pub ay: f64,
    pub steer: f64,
    pub c_lat: f64,
    pub c_long: f64,
    /// `history[0]` is the most recent action.
    pub history: [Action; HISTORY_LEN],
}

impl VehicleState {
    pub fn dynamic(&self) -> [f64; DYN_DIM] {
        [
            self.pitch,
            self.pitch_rate,
            self.roll,
            self.roll_rate,
            self.yaw_rate,
            self.vx,
            self.ax,
            self.vy,
            self.ay,
            self.steer,
        ]
    }

    pub fn set_dynamic(&mut self, d: &[f64; DYN_DIM]) {
        self.pitch = d[0];
        self.pitch_rate = d[1];
        self.roll = d[2];
        self.roll_rate = d[3];
        self.yaw_rate = d[4];
        self.vx = d[5];
        self.ax = d[6];
        self.vy = d[7];
        self.ay = d[8];
        self.steer = d[9];
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(VEHICLE_DIM);
        self.write_into(&mut v);
        v
    }

    pub fn write_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.dynamic());
        out.push(self.c_lat);
        out.push(self.c_long);
        for a in &self.history {
            out.push(a.lat);
            out.push(a.long);
        }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert!(v.len() >= VEHICLE_DIM, "vehicle slice too short");
        let mut s = VehicleState::default();
        let mut d = [0.0; DYN_DIM];
        d.copy_from_slice(&v[..DYN_DIM]);
        s.set_dynamic(&d);
        s.c_lat = v[DYN_DIM];
        s.c_long = v[DYN_DIM + 1];
        for k in 0..HISTORY_LEN {
            s.history[k] = Action::new(v[DYN_DIM + 2 + 2 * k], v[DYN_DIM + 3 + 2 * k]);
        }
        s
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

/// Control accumulation: `c ← clamp(c + a, −1, 1)`, history shifted by one.
pub fn apply_action(v: &VehicleState, a: Action) -> VehicleState {
    let mut out = *v;
    out.c_lat = (v.c_lat + a.lat).clamp(-1.0, 1.0);
    out.c_long = (v.c_long + a.long).clamp(-1.0, 1.0);
    out.history.copy_within(0..HISTORY_LEN - 1, 1);
    out.history[0] = a;
    out
}

/// Parameters of the surrogate vehicle.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleParams {
    pub mass: f64,
    pub yaw_inertia: f64,
    /// Distance from the centre of gravity to the front axle.
    pub cog_to_front: f64,
    pub cog_to_rear: f64,
    /// Axle cornering stiffness, N/rad.
    pub cornering_front: f64,
    pub cornering_rear: f64,
    pub steer_max: f64,
    pub steer_time_constant: f64,
    /// Peak longitudinal force at `c_long = ±1`.
    pub force_max: f64,
    /// Quadratic aerodynamic drag coefficient, N/(m/s)².
    pub drag: f64,
    /// Time constant of the measured accelerations.
    pub accel_time_constant: f64,
    /// Static pitch per unit longitudinal acceleration, rad/(m/s²).
    pub pitch_gain: f64,
    /// Static roll per unit lateral acceleration, rad/(m/s²).
    pub roll_gain: f64,
    pub body_frequency: f64,
    pub body_damping: f64,
    /// Below this speed tire forces fade out linearly.
    pub low_speed: f64,
    pub low_speed_time_constant: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 2000.0,
            yaw_inertia: 3000.0,
            cog_to_front: 1.2,
            cog_to_rear: 1.7,
            cornering_front: 60_000.0,
            cornering_rear: 87_000.0,
            steer_max: 0.5,
            steer_time_constant: 0.2,
            force_max: 8000.0,
            drag: 2.2,
            accel_time_constant: 0.05,
            pitch_gain: 0.005,
            roll_gain: 0.008,
            body_frequency: 9.0,
            body_damping: 0.7,
            low_speed: 2.0,
            low_speed_time_constant: 0.5,
        }
    }
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.cog_to_front + self.cog_to_rear
    }

    /// Understeer gradient of the linear bicycle model, rad/(m/s²).
    pub fn understeer_gradient(&self) -> f64 {
        self.mass / self.wheelbase()
            * (self.cog_to_rear / self.cornering_front - self.cog_to_front / self.cornering_rear)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("cog_to_front", self.cog_to_front),
            ("cog_to_rear", self.cog_to_rear),
            ("cornering_front", self.cornering_front),
            ("cornering_rear", self.cornering_rear),
            ("steer_max", self.steer_max),
            ("steer_time_constant", self.steer_time_constant),
            ("force_max", self.force_max),
            ("accel_time_constant", self.accel_time_constant),
            ("body_frequency", self.body_frequency),
            ("low_speed", self.low_speed),
            ("low_speed_time_constant", self.low_speed_time_constant),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return config(format!("vehicle.{name} must be positive, got {v}"));
            }
        }
        if !(self.drag >= 0.0 && self.body_damping >= 0.0) {
            return config("vehicle.drag and vehicle.body_damping must be non-negative");
        }
        Ok(())
    }
}

/// Time derivatives of the dynamic fields (in [`VehicleState::dynamic`]
/// order) with the controls held fixed.
///
/// Dynamic bicycle model with linear axle forces. The steering angle follows
/// `c_lat·steer_max` through a first-order lag, the longitudinal force is
/// `c_long·force_max` minus drag, measured accelerations are first-order
/// filtered, and pitch/roll are damped second-order responses to the
/// longitudinal/lateral accelerations.
pub fn surrogate_dynamics(v: &VehicleState, p: &VehicleParams) -> [f64; DYN_DIM] {
    let vx = v.vx;
    let delta = v.steer;
    let fade = (vx / p.low_speed).clamp(0.0, 1.0);
    let vx_eff = vx.max(p.low_speed);

    let slip_front = delta - (v.vy + p.cog_to_front * v.yaw_rate) / vx_eff;
    let slip_rear = -(v.vy - p.cog_to_rear * v.yaw_rate) / vx_eff;
    let fy_front = fade * p.cornering_front * slip_front;
    let fy_rear = fade * p.cornering_rear * slip_rear;
    let (sin_d, cos_d) = delta.sin_cos();

    let fx = v.c_long * p.force_max - p.drag * vx * vx.abs();
    let mut vx_dot = (fx - fy_front * sin_d) / p.mass + v.vy * v.yaw_rate;
    if vx <= 0.0 && vx_dot < 0.0 {
        vx_dot = 0.0;
    }
    let lat_force = fy_front * cos_d + fy_rear;
    let mut vy_dot = lat_force / p.mass - vx * v.yaw_rate;
    let mut r_dot = (p.cog_to_front * fy_front * cos_d - p.cog_to_rear * fy_rear) / p.yaw_inertia;
    // Stand-in for tire scrub at walking pace.
    let scrub = (1.0 - fade) / p.low_speed_time_constant;
    vy_dot -= scrub * v.vy;
    r_dot -= scrub * v.yaw_rate;

    let ax_true = vx_dot - v.vy * v.yaw_rate;
    let ay_true = vy_dot + vx * v.yaw_rate;
    let ax_dot = (ax_true - v.ax) / p.accel_time_constant;
    let ay_dot = (ay_true - v.ay) / p.accel_time_constant;

    let w2 = p.body_frequency * p.body_frequency;
    let c = 2.0 * p.body_damping * p.body_frequency;
    let pitch_acc = w2 * (p.pitch_gain * v.ax - v.pitch) - c * v.pitch_rate;
    let roll_acc = w2 * (p.roll_gain * v.ay - v.roll) - c * v.roll_rate;

    let steer_dot = (v.c_lat * p.steer_max - delta) / p.steer_time_constant;

    [
        v.pitch_rate,
        pitch_acc,
        v.roll_rate,
        roll_acc,
        r_dot,
        vx_dot,
        ax_dot,
        vy_dot,
        ay_dot,
        steer_dot,
    ]
}

/// Classic fixed-step RK4 over `dt` with `substeps` sub-intervals; controls
/// are held constant. Speed is kept non-negative and the steering angle
/// inside `±steer_max` after every sub-step.
pub fn integrate(v: &VehicleState, p: &VehicleParams, dt: f64, substeps: usize) -> VehicleState {
    let h = dt / substeps as f64;
    let mut s = *v;
    let at = |base: &VehicleState, x: &[f64; DYN_DIM]| {
        let mut t = *base;
        t.set_dynamic(x);
        t
    };
    for _ in 0..substeps {
        let x0 = s.dynamic();
        let k1 = surrogate_dynamics(&s, p);
        let mut x = [0.0; DYN_DIM];
        for i in 0..DYN_DIM {
            x[i] = x0[i] + 0.5 * h * k1[i];
        }
        let k2 = surrogate_dynamics(&at(&s, &x), p);
        for i in 0..DYN_DIM {
            x[i] = x0[i] + 0.5 * h * k2[i];
        }
        let k3 = surrogate_dynamics(&at(&s, &x), p);
        for i in 0..DYN_DIM {
            x[i] = x0[i] + h * k3[i];
        }
        let k4 = surrogate_dynamics(&at(&s, &x), p);
        for i in 0..DYN_DIM {
            x[i] = x0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        x[5] = x[5].max(0.0);
        x[9] = x[9].clamp(-p.steer_max, p.steer_max);
        s.set_dynamic(&x);
    }
    s
}
