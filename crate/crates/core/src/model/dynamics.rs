use super::ensemble::ProbabilisticEnsemble;
use crate::buffer::Transition;
use crate::env::{apply_action, integrate, Action, VehicleParams, VehicleState, DYN_DIM, VEHICLE_DIM};
use crate::error::{config, Result};

/// Model input: the full vehicle state followed by the action.
pub const MODEL_INPUT_DIM: usize = VEHICLE_DIM + 2;

/// Anything that predicts the average rates of the dynamic vehicle fields
/// over one control interval, per ensemble member.
pub trait DynamicsModel {
    fn num_members(&self) -> usize;

    /// Mean and variance of the rates for `batch` row-major inputs of width
    /// [`MODEL_INPUT_DIM`].
    fn predict_member(&self, member: usize, inputs: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)>;
}

impl DynamicsModel for ProbabilisticEnsemble {
    fn num_members(&self) -> usize {
        ProbabilisticEnsemble::num_members(self)
    }

    fn predict_member(&self, member: usize, inputs: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        ProbabilisticEnsemble::predict_member(self, member, inputs, batch)
    }
}

pub fn write_model_input(v: &VehicleState, a: Action, out: &mut Vec<f64>) {
    v.write_into(out);
    out.push(a.lat);
    out.push(a.long);
}

/// `(s^v_{t+1} − s^v_t) / dt` over the dynamic fields.
pub fn average_rates(before: &VehicleState, after: &VehicleState, dt: f64) -> [f64; DYN_DIM] {
    let (b, a) = (before.dynamic(), after.dynamic());
    std::array::from_fn(|k| (a[k] - b[k]) / dt)
}

/// The surrogate vehicle itself, exposed as a zero-variance model whose
/// members all agree.
#[derive(Clone, Debug)]
pub struct OracleDynamics {
    pub params: VehicleParams,
    pub dt: f64,
    pub substeps: usize,
    pub members: usize,
}

impl OracleDynamics {
    pub fn new(params: VehicleParams, dt: f64, substeps: usize) -> Self {
        Self {
            params,
            dt,
            substeps,
            members: 1,
        }
    }
}

impl DynamicsModel for OracleDynamics {
    fn num_members(&self) -> usize {
        self.members
    }

    fn predict_member(&self, member: usize, inputs: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if member >= self.members {
            return config(format!("member {member} out of range"));
        }
        if inputs.len() != batch * MODEL_INPUT_DIM {
            return config("oracle input has the wrong width");
        }
        let mut mean = Vec::with_capacity(batch * DYN_DIM);
        for row in inputs.chunks_exact(MODEL_INPUT_DIM) {
            let v = VehicleState::from_slice(row);
            let a = Action::new(row[VEHICLE_DIM], row[VEHICLE_DIM + 1]);
            let next = integrate(&apply_action(&v, a), &self.params, self.dt, self.substeps);
            mean.extend(average_rates(&v, &next, self.dt));
        }
        Ok((mean, vec![0.0; batch * DYN_DIM]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemberSelect {
    Member(usize),
    /// Mixture mean and variance over all members.
    MomentMatched,
}

pub fn predict_rates<M: DynamicsModel + ?Sized>(
    model: &M,
    v: &VehicleState,
    a: Action,
    select: MemberSelect,
) -> Result<([f64; DYN_DIM], [f64; DYN_DIM])> {
    let mut x = Vec::with_capacity(MODEL_INPUT_DIM);
    write_model_input(v, a, &mut x);
    let arr = |v: &[f64]| -> [f64; DYN_DIM] { std::array::from_fn(|k| v[k]) };
    match select {
        MemberSelect::Member(m) => {
            let (mean, var) = model.predict_member(m, &x, 1)?;
            Ok((arr(&mean), arr(&var)))
        }
        MemberSelect::MomentMatched => {
            let n = model.num_members();
            let mut mean = [0.0; DYN_DIM];
            let mut second = [0.0; DYN_DIM];
            for m in 0..n {
                let (mu, var) = model.predict_member(m, &x, 1)?;
                for k in 0..DYN_DIM {
                    mean[k] += mu[k] / n as f64;
                    second[k] += (var[k] + mu[k] * mu[k]) / n as f64;
                }
            }
            let var = std::array::from_fn(|k| (second[k] - mean[k] * mean[k]).max(0.0));
            Ok((mean, var))
        }
    }
}

/// Model inputs and average-rate targets from real transitions.
pub fn rate_dataset<'a>(transitions: impl IntoIterator<Item = &'a Transition>, dt: f64) -> (Vec<f64>, Vec<f64>, usize) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut n = 0;
    for t in transitions {
        let v = VehicleState::from_slice(&t.obs);
        let next = VehicleState::from_slice(&t.next_obs);
        write_model_input(&v, t.action, &mut x);
        y.extend(average_rates(&v, &next, dt));
        n += 1;
    }
    (x, y, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Members with fixed outputs, for mixture arithmetic.
    struct Fixed(Vec<(f64, f64)>);

    impl DynamicsModel for Fixed {
        fn num_members(&self) -> usize {
            self.0.len()
        }

        fn predict_member(&self, m: usize, _: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)> {
            let (mu, var) = self.0[m];
            Ok((vec![mu; batch * DYN_DIM], vec![var; batch * DYN_DIM]))
        }
    }

    #[test]
    fn identical_members_keep_member_variance() {
        let f = Fixed(vec![(0.3, 0.2); 5]);
        let (mean, var) = predict_rates(&f, &VehicleState::default(), Action::ZERO, MemberSelect::MomentMatched).unwrap();
        assert!(mean.iter().all(|m| (m - 0.3).abs() < 1e-15));
        assert!(var.iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn opposite_means_give_squared_spread() {
        let m = 1.7;
        let f = Fixed(vec![(m, 0.0), (-m, 0.0)]);
        let (mean, var) = predict_rates(&f, &VehicleState::default(), Action::ZERO, MemberSelect::MomentMatched).unwrap();
        assert!(mean.iter().all(|v| v.abs() < 1e-15));
        assert!(var.iter().all(|v| (v - m * m).abs() < 1e-12));
    }

    #[test]
    fn oracle_rates_reproduce_the_integrator() {
        let o = OracleDynamics::new(VehicleParams::default(), 0.1, 10);
        let v = VehicleState {
            vx: 12.0,
            c_long: 0.3,
            ..Default::default()
        };
        let a = Action::new(0.1, -0.05);
        let (rates, var) = predict_rates(&o, &v, a, MemberSelect::Member(0)).unwrap();
        let next = integrate(&apply_action(&v, a), &o.params, 0.1, 10);
        let d0 = v.dynamic();
        for k in 0..DYN_DIM {
            assert!((d0[k] + 0.1 * rates[k] - next.dynamic()[k]).abs() < 1e-12);
        }
        assert_eq!(var, [0.0; DYN_DIM]);
    }
}
