//! Gaussian output heads: the tanh-squashed policy distribution and the
//! diagonal-Gaussian negative log-likelihood used by the dynamics ensemble.

use std::f64::consts::{LN_2, PI};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 - tanh(u)^2)` without cancellation for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

/// A reparameterised draw from a tanh-squashed diagonal Gaussian.
#[derive(Clone, Debug)]
pub struct SquashedSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    std: Vec<f64>,
    noise: Vec<f64>,
}

/// `action = tanh(mean + exp(log_std) * noise)` together with its log-density,
/// including the change-of-variables correction of the squash.
pub fn squashed_gaussian_sample(mean: &[f64], log_std: &[f64], noise: &[f64]) -> SquashedSample {
    assert_eq!(mean.len(), log_std.len());
    assert_eq!(mean.len(), noise.len());
    let mut action = Vec::with_capacity(mean.len());
    let mut std = Vec::with_capacity(mean.len());
    let mut log_prob = 0.0;
    for ((m, ls), e) in mean.iter().zip(log_std).zip(noise) {
        let s = ls.exp();
        let u = m + s * e;
        action.push(u.tanh());
        std.push(s);
        log_prob += -0.5 * e * e - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u);
    }
    SquashedSample {
        action,
        log_prob,
        std,
        noise: noise.to_vec(),
    }
}

impl SquashedSample {
    /// Chain rule through the sample: given `dL/daction` and `dL/dlog_prob`,
    /// returns `(dL/dmean, dL/dlog_std)` with the noise held fixed.
    pub fn backward(&self, d_action: &[f64], d_log_prob: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.action.len();
        let mut d_mean = Vec::with_capacity(n);
        let mut d_log_std = Vec::with_capacity(n);
        for k in 0..n {
            let a = self.action[k];
            let se = self.std[k] * self.noise[k];
            let da_du = 1.0 - a * a;
            // d log_prob / du = 2 tanh(u)
            let du = d_action[k] * da_du + d_log_prob * 2.0 * a;
            d_mean.push(du);
            d_log_std.push(du * se - d_log_prob);
        }
        (d_mean, d_log_std)
    }
}

/// Hard clamp of raw log-std outputs; the returned mask is `true` where the
/// gradient passes through.
pub fn clamp_log_std(raw: &[f64], lo: f64, hi: f64) -> (Vec<f64>, Vec<bool>) {
    raw.iter()
        .map(|r| {
            if *r < lo {
                (lo, false)
            } else if *r > hi {
                (hi, false)
            } else {
                (*r, true)
            }
        })
        .unzip()
}

/// Smoothly bounds a raw log-variance into `(lo, hi)`; returns the value and
/// its derivative with respect to `raw`.
pub fn soft_clamp_log_var(raw: f64, lo: f64, hi: f64) -> (f64, f64) {
    let upper = hi - softplus(hi - raw);
    let d_upper = sigmoid(hi - raw);
    let value = lo + softplus(upper - lo);
    let d = sigmoid(upper - lo) * d_upper;
    (value.clamp(lo, hi), d)
}

/// `0.5 * Σ[(target - mean)² exp(-log_var) + log_var] + 0.5 d ln(2π)`.
pub fn gaussian_nll(mean: &[f64], log_var: &[f64], target: &[f64]) -> f64 {
    assert_eq!(mean.len(), log_var.len());
    assert_eq!(mean.len(), target.len());
    let mut s = 0.0;
    for ((m, lv), t) in mean.iter().zip(log_var).zip(target) {
        let r = t - m;
        s += r * r * (-lv).exp() + lv;
    }
    0.5 * s + 0.5 * mean.len() as f64 * (2.0 * PI).ln()
}

/// NLL value together with its gradients with respect to `mean` and `log_var`.
pub fn gaussian_nll_grad(mean: &[f64], log_var: &[f64], target: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let value = gaussian_nll(mean, log_var, target);
    let mut dm = Vec::with_capacity(mean.len());
    let mut dlv = Vec::with_capacity(mean.len());
    for ((m, lv), t) in mean.iter().zip(log_var).zip(target) {
        let r = t - m;
        let inv = (-lv).exp();
        dm.push(-r * inv);
        dlv.push(0.5 * (1.0 - r * r * inv));
    }
    (value, dm, dlv)
}
