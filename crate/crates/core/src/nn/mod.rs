//! Minimal differentiable MLP machinery shared by the policy, the critics and
//! the dynamics ensemble.

mod adam;
pub mod checkpoint;
pub mod dist;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use dist::{gaussian_nll, gaussian_nll_grad, squashed_gaussian_sample, SquashedSample};
pub use mlp::{Activation, Gradients, Head, MlpParams, Tape};

/// Elementwise Polyak averaging `target ← (1 − τ)·target + τ·online`.
pub fn soft_update(online: &MlpParams, target: &mut MlpParams, tau: f64) -> crate::Result<()> {
    if online.sizes() != target.sizes() {
        return Err(crate::Error::Config(format!(
            "soft update between shapes {:?} and {:?}",
            online.sizes(),
            target.sizes()
        )));
    }
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = (1.0 - tau) * *t + tau * o;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> MlpParams {
        let mut p = MlpParams::zeros(&[1, 1], Head::Linear).unwrap();
        p.params_mut()[0] = v;
        p
    }

    #[test]
    fn soft_update_limits_and_midpoint() {
        let online = scalar(2.0);
        let mut t = scalar(0.0);
        soft_update(&online, &mut t, 0.0).unwrap();
        assert_eq!(t.params()[0], 0.0);
        soft_update(&online, &mut t, 0.5).unwrap();
        assert_eq!(t.params()[0], 1.0);
        soft_update(&online, &mut t, 1.0).unwrap();
        assert_eq!(t.params()[0], 2.0);
        let wrong = MlpParams::zeros(&[2, 1], Head::Linear).unwrap();
        assert!(soft_update(&wrong, &mut t, 0.5).is_err());
    }
}
