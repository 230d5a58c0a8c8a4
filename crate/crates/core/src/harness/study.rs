use std::collections::BTreeMap;
use std::path::Path;

use super::config::{Algo, ExperimentConfig};
use super::plots::{load_metrics, seed_curve, Metrics};
use super::run::run_experiment;
use crate::error::{Error, Result};

/// Ordinal data-efficiency comparison across the four algorithms.
#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyReport {
    pub sac_final_median: f64,
    /// Return that counts as reaching 90 % of SAC's final median.
    pub threshold: f64,
    pub sac_steps: usize,
    /// First step at which the median return curve reaches the threshold.
    pub reach_step: BTreeMap<Algo, Option<usize>>,
    /// Median over seeds of the first evaluation with at least one full lap.
    pub pets_first_lap_step: Option<usize>,
    pub exploration_steps: usize,
    /// Mean over seeds of the final distance-normalised |a^lat|.
    pub final_alat: BTreeMap<Algo, f64>,
}

impl EfficiencyReport {
    /// REDQ and MBPO reach the threshold within a fifth of SAC's steps.
    pub fn fewer_steps(&self) -> bool {
        [Algo::Redq, Algo::Mbpo].iter().all(|a| {
            matches!(self.reach_step.get(a), Some(Some(s)) if *s * 5 <= self.sac_steps)
        })
    }

    /// PETS-MPPI drives a full lap within twice the exploration budget.
    pub fn pets_laps_early(&self) -> bool {
        matches!(self.pets_first_lap_step, Some(s) if s <= 2 * self.exploration_steps)
    }

    /// PETS-MPPI actuates the steering more than MBPO and REDQ.
    pub fn pets_jerkier(&self) -> bool {
        let p = self.final_alat.get(&Algo::PetsMppi);
        let m = self.final_alat.get(&Algo::Mbpo);
        let r = self.final_alat.get(&Algo::Redq);
        matches!((p, m, r), (Some(p), Some(m), Some(r)) if p > m && p > r)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median over seeds of each step's mean return, for steps every seed reached.
pub fn median_curve(seeds: &BTreeMap<u64, Vec<super::eval::EvalRecord>>) -> Vec<(usize, f64)> {
    let mut by_step: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for recs in seeds.values() {
        for (step, r) in seed_curve(recs) {
            by_step.entry(step).or_default().push(r.ret);
        }
    }
    by_step
        .into_iter()
        .filter(|(_, v)| v.len() == seeds.len())
        .map(|(s, v)| (s, median(v)))
        .collect()
}

fn algo_metrics(m: &Metrics, a: Algo) -> Result<&BTreeMap<u64, Vec<super::eval::EvalRecord>>> {
    m.get(a.tag())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Usage(format!("no metrics for {a}")))
}

pub fn assess_efficiency(metrics: &Metrics, sac_steps: usize, exploration_steps: usize) -> Result<EfficiencyReport> {
    let sac = median_curve(algo_metrics(metrics, Algo::Sac)?);
    let sac_final_median = sac.last().map(|(_, r)| *r).ok_or_else(|| Error::Usage("empty SAC curve".into()))?;
    let threshold = sac_final_median - 0.1 * sac_final_median.abs();
    let mut reach_step = BTreeMap::new();
    for a in [Algo::Redq, Algo::Mbpo] {
        let curve = median_curve(algo_metrics(metrics, a)?);
        reach_step.insert(a, curve.iter().find(|(_, r)| *r >= threshold).map(|(s, _)| *s));
    }
    let pets = algo_metrics(metrics, Algo::PetsMppi)?;
    let mut firsts: Vec<f64> = pets
        .values()
        .map(|recs| {
            seed_curve(recs)
                .iter()
                .find(|(_, r)| r.laps >= 1.0)
                .map_or(f64::INFINITY, |(s, _)| *s as f64)
        })
        .collect();
    firsts.sort_by(f64::total_cmp);
    let m = median(firsts);
    let pets_first_lap_step = m.is_finite().then_some(m as usize);
    let mut final_alat = BTreeMap::new();
    for a in [Algo::PetsMppi, Algo::Mbpo, Algo::Redq] {
        let seeds = algo_metrics(metrics, a)?;
        let v: Vec<f64> = seeds
            .values()
            .filter_map(|recs| seed_curve(recs).last().map(|(_, r)| r.alat))
            .collect();
        final_alat.insert(a, v.iter().sum::<f64>() / v.len() as f64);
    }
    Ok(EfficiencyReport {
        sac_final_median,
        threshold,
        sac_steps,
        reach_step,
        pets_first_lap_step,
        exploration_steps,
        final_alat,
    })
}

/// Runs all four algorithms at desk scale over `seeds` into `out`, then
/// assesses the metrics.
pub fn data_efficiency_study(seeds: &[u64], out: &Path) -> Result<EfficiencyReport> {
    for a in Algo::ALL {
        let mut cfg = ExperimentConfig::desk(a);
        cfg.seeds = seeds.to_vec();
        run_experiment(&cfg, out)?;
    }
    let sac = ExperimentConfig::desk(Algo::Sac);
    assess_efficiency(&load_metrics(out)?, sac.steps, sac.exploration_steps)
}
