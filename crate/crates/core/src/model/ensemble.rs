//! Bootstrapped ensemble of Gaussian-output networks trained by negative
//! log-likelihood with per-member early stopping.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use super::normalizer::Normalizer;
use crate::error::{config, usage, Error, Result};
use crate::kv::KvMap;
use crate::nn::checkpoint::{read_params, write_params};
use crate::nn::dist::{gaussian_nll_grad, soft_clamp_log_var};
use crate::nn::{AdamConfig, AdamState, Head, MlpParams};

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub members: usize,
    pub hidden_layers: usize,
    pub hidden_nodes: usize,
    /// Soft bounds of the normalised log-variance.
    pub log_var_min: f64,
    pub log_var_max: f64,
    pub learning_rate: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: 5,
            hidden_layers: 4,
            hidden_nodes: 256,
            log_var_min: -10.0,
            log_var_max: 0.5,
            learning_rate: 1e-3,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.members == 0 || self.hidden_nodes == 0 {
            return config("model.members and model.hidden_nodes must be positive");
        }
        if !(self.log_var_min < self.log_var_max) {
            return config("model.log_var_min must be below model.log_var_max");
        }
        if !(self.learning_rate > 0.0) {
            return config("model.learning_rate must be positive");
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &mut KvMap) -> Result<()> {
        kv.take("model.members", &mut self.members)?;
        kv.take("model.hidden_layers", &mut self.hidden_layers)?;
        kv.take("model.hidden_nodes", &mut self.hidden_nodes)?;
        kv.take("model.log_var_min", &mut self.log_var_min)?;
        kv.take("model.log_var_max", &mut self.log_var_max)?;
        kv.take("model.learning_rate", &mut self.learning_rate)?;
        Ok(())
    }

    pub fn write_kv(&self, kv: &mut KvMap) {
        kv.insert("model.members", self.members);
        kv.insert("model.hidden_layers", self.hidden_layers);
        kv.insert("model.hidden_nodes", self.hidden_nodes);
        kv.insert("model.log_var_min", self.log_var_min);
        kv.insert("model.log_var_max", self.log_var_max);
        kv.insert("model.learning_rate", self.learning_rate);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelTrainConfig {
    /// Upper bound on passes over the data per training call.
    pub epochs: usize,
    /// Epochs without holdout improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    /// Environment steps between retrains.
    pub retrain_every: usize,
    /// Share of the data held out for early stopping; zero monitors the training set.
    pub holdout_fraction: f64,
}

impl Default for ModelTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            patience: 5,
            batch_size: 512,
            retrain_every: 500,
            holdout_fraction: 0.1,
        }
    }
}

impl ModelTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.patience == 0 || self.batch_size == 0 || self.retrain_every == 0 {
            return config("model training epochs, patience, batch size and retrain cadence must be positive");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return config("model.holdout_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &mut KvMap) -> Result<()> {
        kv.take("model.epochs", &mut self.epochs)?;
        kv.take("model.patience", &mut self.patience)?;
        kv.take("model.batch_size", &mut self.batch_size)?;
        kv.take("model.retrain_every", &mut self.retrain_every)?;
        kv.take("model.holdout_fraction", &mut self.holdout_fraction)?;
        Ok(())
    }

    pub fn write_kv(&self, kv: &mut KvMap) {
        kv.insert("model.epochs", self.epochs);
        kv.insert("model.patience", self.patience);
        kv.insert("model.batch_size", self.batch_size);
        kv.insert("model.retrain_every", self.retrain_every);
        kv.insert("model.holdout_fraction", self.holdout_fraction);
    }
}

/// Tracks the best loss of each member and signals when none has improved
/// for `patience` consecutive epochs.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Vec<f64>,
    best_epoch: Vec<usize>,
    epoch: usize,
    last_improvement: usize,
}

impl EarlyStopping {
    /// `initial` are the losses before the first epoch (epoch 0).
    pub fn new(patience: usize, initial: &[f64]) -> Self {
        Self {
            patience,
            best: initial.to_vec(),
            best_epoch: vec![0; initial.len()],
            epoch: 0,
            last_improvement: 0,
        }
    }

    /// Records one epoch; returns which members improved and whether to stop.
    pub fn update(&mut self, losses: &[f64]) -> (Vec<bool>, bool) {
        self.epoch += 1;
        let mut improved = vec![false; losses.len()];
        for (k, &l) in losses.iter().enumerate() {
            if l < self.best[k] - 1e-9 * self.best[k].abs() || (self.best[k].is_nan() && l.is_finite()) {
                self.best[k] = l;
                self.best_epoch[k] = self.epoch;
                self.last_improvement = self.epoch;
                improved[k] = true;
            }
        }
        let stop = self.epoch - self.last_improvement >= self.patience;
        (improved, stop)
    }

    pub fn best(&self) -> &[f64] {
        &self.best
    }

    pub fn best_epochs(&self) -> &[usize] {
        &self.best_epoch
    }

    pub fn last_improvement(&self) -> usize {
        self.last_improvement
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Holdout NLL per member before training (after refitting normalisers).
    pub initial_holdout_nll: Vec<f64>,
    /// Holdout NLL per epoch and member.
    pub holdout_nll: Vec<Vec<f64>>,
    /// Holdout NLL of the restored best parameters.
    pub final_holdout_nll: Vec<f64>,
    pub best_epochs: Vec<usize>,
    pub holdout_size: usize,
}

/// Mean per-sample Gaussian NLL of a `[mean; raw log-var]` network on a
/// normalised batch, and the gradient with respect to its parameters.
pub fn member_nll(params: &MlpParams, inputs: &[f64], targets: &[f64], batch: usize) -> Result<(f64, Vec<f64>)> {
    let (loss, grad_out, tape) = member_nll_output_grad(params, inputs, targets, batch)?;
    let g = params.backward(&tape, &grad_out)?;
    Ok((loss, g.params))
}

fn member_nll_output_grad(
    params: &MlpParams,
    inputs: &[f64],
    targets: &[f64],
    batch: usize,
) -> Result<(f64, Vec<f64>, crate::nn::Tape)> {
    let (lo, hi) = log_var_bounds(params)?;
    let d = params.output_dim() / 2;
    if targets.len() != batch * d {
        return config(format!("targets hold {} values, expected {}", targets.len(), batch * d));
    }
    let tape = params.forward_tape(inputs, batch)?;
    let out = tape.output();
    let mut grad = vec![0.0; out.len()];
    let mut loss = 0.0;
    let scale = 1.0 / batch as f64;
    let mut lv = vec![0.0; d];
    let mut dlv_draw = vec![0.0; d];
    for b in 0..batch {
        let row = &out[b * 2 * d..(b + 1) * 2 * d];
        for k in 0..d {
            let (v, dv) = soft_clamp_log_var(row[d + k], lo, hi);
            lv[k] = v;
            dlv_draw[k] = dv;
        }
        let (l, dm, dlv) = gaussian_nll_grad(&row[..d], &lv, &targets[b * d..(b + 1) * d]);
        loss += l * scale;
        let g = &mut grad[b * 2 * d..(b + 1) * 2 * d];
        for k in 0..d {
            g[k] = dm[k] * scale;
            g[d + k] = dlv[k] * dlv_draw[k] * scale;
        }
    }
    Ok((loss, grad, tape))
}

fn log_var_bounds(params: &MlpParams) -> Result<(f64, f64)> {
    match params.head() {
        Head::MeanLogVar {
            log_var_min,
            log_var_max,
        } => Ok((log_var_min, log_var_max)),
        h => config(format!("expected a mean/log-variance head, found {h:?}")),
    }
}

#[derive(Clone, Debug)]
pub struct ProbabilisticEnsemble {
    config: EnsembleConfig,
    members: Vec<MlpParams>,
    optimizers: Vec<AdamState>,
    input_norm: Normalizer,
    output_norm: Normalizer,
    trained: bool,
}

impl ProbabilisticEnsemble {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, output_dim: usize, config: EnsembleConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let head = Head::MeanLogVar {
            log_var_min: config.log_var_min,
            log_var_max: config.log_var_max,
        };
        let mut members = Vec::with_capacity(config.members);
        for _ in 0..config.members {
            members.push(MlpParams::with_hidden(
                input_dim,
                config.hidden_layers,
                config.hidden_nodes,
                2 * output_dim,
                head,
                rng,
            )?);
        }
        let adam = AdamConfig::with_step_size(config.learning_rate);
        let optimizers = members.iter().map(|m| AdamState::new(m.num_params(), adam)).collect();
        Ok(Self {
            config,
            members,
            optimizers,
            input_norm: Normalizer::identity(input_dim),
            output_norm: Normalizer::identity(output_dim),
            trained: false,
        })
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn num_members(&self) -> usize {
        self.members.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_norm.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output_norm.dim()
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn members(&self) -> &[MlpParams] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [MlpParams] {
        &mut self.members
    }

    pub fn normalizers(&self) -> (&Normalizer, &Normalizer) {
        (&self.input_norm, &self.output_norm)
    }

    /// Replaces the normalisers and marks the ensemble usable, for
    /// hand-built fixtures.
    pub fn set_normalizers(&mut self, input: Normalizer, output: Normalizer) -> Result<()> {
        if input.dim() != self.input_dim() || output.dim() != self.output_dim() {
            return config("normaliser dimensions do not match the ensemble");
        }
        self.input_norm = input;
        self.output_norm = output;
        self.trained = true;
        Ok(())
    }

    /// Denormalised mean and variance of member `m` for a batch of raw inputs.
    pub fn predict_member(&self, m: usize, inputs: &[f64], batch: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.trained {
            return usage("prediction requested from an untrained ensemble");
        }
        if m >= self.members.len() {
            return config(format!("member {m} out of range ({} members)", self.members.len()));
        }
        let mut x = inputs.to_vec();
        self.input_norm.normalize(&mut x);
        let out = self.members[m].predict_batch(&x, batch)?;
        Ok(self.decode(&out, batch))
    }

    fn decode(&self, out: &[f64], batch: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.output_dim();
        let mut mean = Vec::with_capacity(batch * d);
        let mut var = Vec::with_capacity(batch * d);
        for row in out.chunks_exact(2 * d) {
            for k in 0..d {
                let s = self.output_norm.std[k];
                mean.push(row[k] * s + self.output_norm.mean[k]);
                let (lv, _) = soft_clamp_log_var(row[d + k], self.config.log_var_min, self.config.log_var_max);
                var.push(lv.exp() * s * s);
            }
        }
        (mean, var)
    }

    fn holdout_nll(&self, m: usize, x: &[f64], y: &[f64], n: usize) -> Result<f64> {
        let (loss, _, _) = member_nll_output_grad(&self.members[m], x, y, n)?;
        Ok(loss)
    }

    /// Refits the normalisers, then trains every member on its own bootstrap
    /// resample with early stopping on a shared holdout split. Each member
    /// ends at its best holdout parameters.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        inputs: &[f64],
        targets: &[f64],
        n: usize,
        cfg: &ModelTrainConfig,
        rng: &mut R,
    ) -> Result<TrainReport> {
        cfg.validate()?;
        if n == 0 {
            return usage("cannot train a dynamics model on an empty buffer");
        }
        let (di, dout) = (self.input_dim(), self.output_dim());
        if inputs.len() != n * di || targets.len() != n * dout {
            return config(format!(
                "training data shapes {}x{} / {}x{} do not match {n} samples",
                inputs.len(),
                di,
                targets.len(),
                dout
            ));
        }
        if inputs.iter().chain(targets).any(|v| !v.is_finite()) {
            return Err(Error::Training("non-finite value in model training data".into()));
        }
        self.input_norm = Normalizer::fit(inputs, di);
        self.output_norm = Normalizer::fit(targets, dout);
        let mut x = inputs.to_vec();
        let mut y = targets.to_vec();
        self.input_norm.normalize(&mut x);
        self.output_norm.normalize(&mut y);

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let n_hold = if n < 2 || cfg.holdout_fraction == 0.0 {
            0
        } else {
            ((cfg.holdout_fraction * n as f64).round() as usize).clamp(1, n - 1)
        };
        let (hold_idx, train_idx) = perm.split_at(n_hold);
        let monitor_idx = if n_hold == 0 { train_idx } else { hold_idx };
        let gather = |idx: &[usize], src: &[f64], w: usize| -> Vec<f64> {
            let mut out = Vec::with_capacity(idx.len() * w);
            for &i in idx {
                out.extend_from_slice(&src[i * w..(i + 1) * w]);
            }
            out
        };
        let hx = gather(monitor_idx, &x, di);
        let hy = gather(monitor_idx, &y, dout);
        let nh = monitor_idx.len();

        let m_count = self.members.len();
        let boot: Vec<Vec<usize>> = (0..m_count)
            .map(|_| (0..train_idx.len()).map(|_| train_idx[rng.random_range(0..train_idx.len())]).collect())
            .collect();

        let initial: Vec<f64> = (0..m_count).map(|m| self.holdout_nll(m, &hx, &hy, nh)).collect::<Result<_>>()?;
        let mut stopper = EarlyStopping::new(cfg.patience, &initial);
        let mut best = self.members.clone();
        let mut history = Vec::new();
        let batch = cfg.batch_size.min(train_idx.len());
        let mut epochs_run = 0;
        for _ in 0..cfg.epochs {
            for m in 0..m_count {
                let mut order = boot[m].clone();
                order.shuffle(rng);
                for chunk in order.chunks(batch) {
                    let bx = gather(chunk, &x, di);
                    let by = gather(chunk, &y, dout);
                    let (loss, grad) = member_nll(&self.members[m], &bx, &by, chunk.len())?;
                    if !loss.is_finite() {
                        return Err(Error::Training(format!("non-finite model loss in member {m}")));
                    }
                    self.optimizers[m].step(self.members[m].params_mut(), &grad)?;
                }
            }
            epochs_run += 1;
            let losses: Vec<f64> = (0..m_count).map(|m| self.holdout_nll(m, &hx, &hy, nh)).collect::<Result<_>>()?;
            let (improved, stop) = stopper.update(&losses);
            for m in 0..m_count {
                if improved[m] {
                    best[m] = self.members[m].clone();
                }
            }
            history.push(losses);
            if stop {
                break;
            }
        }
        self.members = best;
        self.trained = true;
        Ok(TrainReport {
            epochs_run,
            initial_holdout_nll: initial,
            holdout_nll: history,
            final_holdout_nll: stopper.best().to_vec(),
            best_epochs: stopper.best_epochs().to_vec(),
            holdout_size: n_hold,
        })
    }

    /// Mean NLL of each member on raw data, in normalised units.
    pub fn evaluate_nll(&self, inputs: &[f64], targets: &[f64], n: usize) -> Result<Vec<f64>> {
        let mut x = inputs.to_vec();
        let mut y = targets.to_vec();
        self.input_norm.normalize(&mut x);
        self.output_norm.normalize(&mut y);
        (0..self.members.len()).map(|m| self.holdout_nll(m, &x, &y, n)).collect()
    }

    /// Layout: magic, trained flag, config, normalisers, then each member in
    /// the network checkpoint format. Optimiser state is not stored.
    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(ENSEMBLE_MAGIC)?;
        w.write_all(&[self.trained as u8])?;
        let c = &self.config;
        for v in [c.members, c.hidden_layers, c.hidden_nodes] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for v in [c.log_var_min, c.log_var_max, c.learning_rate] {
            w.write_all(&v.to_le_bytes())?;
        }
        for norm in [&self.input_norm, &self.output_norm] {
            w.write_all(&(norm.dim() as u64).to_le_bytes())?;
            for v in norm.mean.iter().chain(&norm.std) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for m in &self.members {
            write_params(m, w)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != ENSEMBLE_MAGIC {
            return Err(Error::Parse("not an ensemble checkpoint".into()));
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let members = read_u64(r)? as usize;
        let hidden_layers = read_u64(r)? as usize;
        let hidden_nodes = read_u64(r)? as usize;
        let config = EnsembleConfig {
            members,
            hidden_layers,
            hidden_nodes,
            log_var_min: read_f64(r)?,
            log_var_max: read_f64(r)?,
            learning_rate: read_f64(r)?,
        };
        config.validate()?;
        let mut norms = Vec::new();
        for _ in 0..2 {
            let d = read_u64(r)? as usize;
            if d > 1 << 20 {
                return Err(Error::Parse("implausible normaliser size".into()));
            }
            let mut vals = vec![0.0; 2 * d];
            for v in &mut vals {
                *v = read_f64(r)?;
            }
            let std = vals.split_off(d);
            norms.push(Normalizer { mean: vals, std });
        }
        let output_norm = norms.pop().unwrap();
        let input_norm = norms.pop().unwrap();
        let mut nets = Vec::with_capacity(members);
        for _ in 0..members {
            let p = read_params(r)?;
            if p.input_dim() != input_norm.dim() || p.output_dim() != 2 * output_norm.dim() {
                return Err(Error::Parse("member shape disagrees with the normalisers".into()));
            }
            nets.push(p);
        }
        let adam = AdamConfig::with_step_size(config.learning_rate);
        let optimizers = nets.iter().map(|m| AdamState::new(m.num_params(), adam)).collect();
        Ok(Self {
            config,
            members: nets,
            optimizers,
            input_norm,
            output_norm,
            trained: flag[0] != 0,
        })
    }
}

const ENSEMBLE_MAGIC: &[u8; 8] = b"TRLPE001";

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(members: usize, layers: usize, nodes: usize) -> EnsembleConfig {
        EnsembleConfig {
            members,
            hidden_layers: layers,
            hidden_nodes: nodes,
            ..Default::default()
        }
    }

    fn linear_data(n: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let a = [[0.8, -0.3, 0.5], [0.2, 0.9, -0.4]];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let xi: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            for row in &a {
                y.push(row.iter().zip(&xi).map(|(w, v)| w * v).sum::<f64>() + 1.0);
            }
            x.extend(xi);
        }
        (x, y)
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let head = Head::MeanLogVar {
            log_var_min: -6.0,
            log_var_max: 0.5,
        };
        for _ in 0..20 {
            let mut p = MlpParams::with_hidden(3, 2, 8, 4, head, &mut rng).unwrap();
            // random biases keep pre-activations away from the ReLU kink
            p.params_mut().iter_mut().for_each(|w| *w = rng.random_range(-0.8..0.8));
            let x: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, g) = member_nll(&p, &x, &y, 3).unwrap();
            for k in (0..p.num_params()).step_by(7) {
                let h = 1e-5;
                let mut pp = p.clone();
                pp.params_mut()[k] += h;
                let mut pm = p.clone();
                pm.params_mut()[k] -= h;
                let fd = (member_nll(&pp, &x, &y, 3).unwrap().0 - member_nll(&pm, &x, &y, 3).unwrap().0) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-4 * fd.abs().max(g[k].abs()).max(1e-6), "k={k} {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn untrained_prediction_is_usage_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = ProbabilisticEnsemble::new(2, 1, small(2, 1, 4), &mut rng).unwrap();
        assert!(matches!(e.predict_member(0, &[0.0, 0.0], 1), Err(Error::Usage(_))));
        let mut e = e;
        assert!(matches!(
            e.train(&[], &[], 0, &ModelTrainConfig::default(), &mut rng),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn learns_linear_toy_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (x, y) = linear_data(2000, &mut rng);
        let mut e = ProbabilisticEnsemble::new(3, 2, small(2, 2, 32), &mut rng).unwrap();
        let cfg = ModelTrainConfig {
            epochs: 200,
            patience: 10,
            batch_size: 32,
            holdout_fraction: 0.1,
            ..Default::default()
        };
        let rep = e.train(&x, &y, 2000, &cfg, &mut rng).unwrap();
        for m in 0..2 {
            assert!(rep.holdout_nll[0][m] < rep.initial_holdout_nll[m]);
            for ep in 1..5 {
                assert!(rep.holdout_nll[ep][m] < rep.holdout_nll[ep - 1][m], "member {m} epoch {ep}");
            }
            assert!(rep.final_holdout_nll[m] <= rep.initial_holdout_nll[m]);
        }
        let (tx, ty) = linear_data(500, &mut rng);
        for m in 0..2 {
            let (mean, _) = e.predict_member(m, &tx, 500).unwrap();
            let err: f64 = mean.iter().zip(&ty).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = ty.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(err / norm < 0.01, "relative error {}", err / norm);
        }
    }

    #[test]
    fn duplicated_data_drives_variance_to_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = [(-1.0, 2.0), (0.0, -1.0), (1.0, 0.5)];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..100 {
            for (a, b) in pts {
                x.push(a);
                y.push(b);
            }
        }
        let mut e = ProbabilisticEnsemble::new(1, 1, small(1, 2, 32), &mut rng).unwrap();
        let cfg = ModelTrainConfig {
            epochs: 300,
            patience: 300,
            batch_size: 30,
            holdout_fraction: 0.0,
            ..Default::default()
        };
        e.train(&x, &y, 300, &cfg, &mut rng).unwrap();
        let (mean, var) = e.predict_member(0, &[-1.0, 0.0, 1.0], 3).unwrap();
        let (_, out) = e.normalizers();
        for (k, (a, b)) in pts.iter().enumerate() {
            let _ = a;
            assert!((mean[k] - b).abs() < 0.05, "{} vs {b}", mean[k]);
            let lv = (var[k] / (out.std[0] * out.std[0])).ln();
            assert!(lv < e.config().log_var_min + 1.5, "log-variance {lv}");
        }
    }

    #[test]
    fn early_stopping_halts_after_patience() {
        let mut s = EarlyStopping::new(5, &[10.0]);
        let seq = [9.0, 8.0, 7.0, 7.5, 7.2, 8.0, 7.1, 9.0, 6.0];
        let mut stopped_at = None;
        for (k, l) in seq.iter().enumerate() {
            if s.update(&[*l]).1 {
                stopped_at = Some(k + 1);
                break;
            }
        }
        assert_eq!(s.best_epochs(), &[3]);
        assert_eq!(stopped_at, Some(8));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, y) = linear_data(100, &mut rng);
        let mut e = ProbabilisticEnsemble::new(3, 2, small(2, 1, 8), &mut rng).unwrap();
        let cfg = ModelTrainConfig {
            epochs: 2,
            batch_size: 32,
            ..Default::default()
        };
        e.train(&x, &y, 100, &cfg, &mut rng).unwrap();
        let mut bytes = Vec::new();
        e.write(&mut bytes).unwrap();
        let back = ProbabilisticEnsemble::read(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.members(), e.members());
        assert_eq!(back.normalizers(), e.normalizers());
        assert_eq!(back.predict_member(1, &x[..6], 2).unwrap(), e.predict_member(1, &x[..6], 2).unwrap());
        assert!(ProbabilisticEnsemble::read(&mut &bytes[..bytes.len() - 3]).is_err());
    }
}
