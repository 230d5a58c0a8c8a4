use super::geometry::{DeviationState, TrackingErrors};
use super::vehicle::VehicleState;
use crate::error::{config, Result};

/// Weights of the per-step reward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardWeights {
    pub survival: f64,
    /// Weight on the squared cross-track error, 1/m².
    pub cross_track: f64,
    /// Weight on the squared velocity error, s²/m².
    pub velocity: f64,
    /// Weight on the absolute course-angle error, 1/rad.
    pub course: f64,
    /// Weight on the absolute lateral acceleration, s²/m.
    pub lat_accel: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            survival: 50.0,
            cross_track: 10.0,
            velocity: 2.0,
            course: 5.0,
            lat_accel: 1.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.survival, self.cross_track, self.velocity, self.course, self.lat_accel];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return config(format!("reward weights must be finite and non-negative: {self:?}"));
        }
        Ok(())
    }
}

/// `r = r_surv − w_ct·e_ct² − w_ẋ·e_ẋ² − w_γ·|e_γ| − w_ÿ·|ÿ|`.
pub fn reward_from_errors(e: &TrackingErrors, lat_accel: f64, w: &RewardWeights) -> f64 {
    w.survival
        - w.cross_track * e.cross_track * e.cross_track
        - w.velocity * e.velocity * e.velocity
        - w.course * e.course.abs()
        - w.lat_accel * lat_accel.abs()
}

pub fn reward(v: &VehicleState, d: &DeviationState, w: &RewardWeights) -> f64 {
    reward_from_errors(&d.errors, v.ay, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_errors_give_survival_reward() {
        let r = reward(&VehicleState::default(), &DeviationState::default(), &RewardWeights::default());
        assert_eq!(r, 50.0);
        // 2000-step episodes then top out at the 100,000 optimum.
        assert_eq!(2000.0 * r, 100_000.0);
    }

    #[test]
    fn unit_cross_track() {
        let mut d = DeviationState::default();
        d.errors.cross_track = 1.0;
        assert_eq!(reward(&VehicleState::default(), &d, &RewardWeights::default()), 40.0);
    }

    fn arb_state() -> impl Strategy<Value = (VehicleState, DeviationState)> {
        (prop::array::uniform4(-5.0f64..5.0), prop::array::uniform8(-5.0f64..5.0)).prop_map(|(a, b)| {
            let v = VehicleState {
                ay: a[0],
                vx: a[1],
                pitch: a[2],
                c_lat: a[3].clamp(-1.0, 1.0),
                ..Default::default()
            };
            let mut d = DeviationState::default();
            d.errors = TrackingErrors {
                cross_track: b[0],
                course: b[1].clamp(-3.0, 3.0),
                velocity: b[2],
            };
            d.distances[0] = b[3].abs();
            d.angles[3] = b[4].clamp(-3.0, 3.0);
            d.speeds[7] = b[5].abs();
            (v, d)
        })
    }

    proptest! {
        #[test]
        fn errors_never_increase_reward((v, d) in arb_state(), k in 1.0f64..3.0) {
            let w = RewardWeights::default();
            let base = reward(&v, &d, &w);
            let mut worse = d;
            worse.errors.cross_track *= k;
            worse.errors.velocity *= k;
            worse.errors.course *= k;
            let mut v2 = v;
            v2.ay *= k;
            prop_assert!(reward(&v2, &worse, &w) <= base);
        }

        #[test]
        fn reward_ignores_unrelated_fields((v, d) in arb_state(), junk in prop::array::uniform4(-9.0f64..9.0)) {
            let w = RewardWeights::default();
            let mut v2 = v;
            v2.vx = junk[0];
            v2.pitch = junk[1];
            v2.c_lat = junk[2];
            let mut d2 = d;
            d2.distances = [junk[3].abs(); 10];
            d2.angles[1] = junk[0];
            d2.speeds = [junk[1]; 10];
            prop_assert_eq!(reward(&v, &d, &w), reward(&v2, &d2, &w));
        }
    }
}
