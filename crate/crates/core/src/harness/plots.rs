use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::eval::{EvalRecord, METRICS_HEADER};
use crate::error::{Error, Result};

pub const RETURNS_HEADER: &str = "algo,step,seeds,return_mean,return_sd";
pub const KPIS_HEADER: &str = "algo,step,seeds,ect_mean,egamma_mean,ex_mean,ay_mean,alat_mean,along_mean,laps_mean";

/// Per algorithm tag, per seed, the records of its metrics file.
pub type Metrics = BTreeMap<String, BTreeMap<u64, Vec<EvalRecord>>>;

pub fn parse_metrics(text: &str) -> Result<Vec<EvalRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected metrics header {other:?}"))),
    }
    lines.filter(|l| !l.trim().is_empty()).map(EvalRecord::parse_row).collect()
}

/// Reads every `<algo>_seed<n>.csv` in `dir`; other files are skipped.
pub fn load_metrics(dir: &Path) -> Result<Metrics> {
    let mut out = Metrics::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = name.strip_suffix(".csv") else {
            continue;
        };
        let Some((algo, seed)) = stem.rsplit_once("_seed") else {
            continue;
        };
        let Ok(seed) = seed.parse::<u64>() else {
            continue;
        };
        let recs = parse_metrics(&fs::read_to_string(&path)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        out.entry(algo.to_string()).or_default().insert(seed, recs);
    }
    Ok(out)
}

/// Episode means per evaluation step, in step order.
pub fn seed_curve(records: &[EvalRecord]) -> Vec<(usize, EvalRecord)> {
    let mut by_step: BTreeMap<usize, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by_step.entry(r.step).or_default().push(r);
    }
    by_step
        .into_iter()
        .map(|(step, rs)| {
            let n = rs.len() as f64;
            let m = |f: fn(&EvalRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            (
                step,
                EvalRecord {
                    step,
                    seed: rs[0].seed,
                    ret: m(|r| r.ret),
                    ect: m(|r| r.ect),
                    egamma: m(|r| r.egamma),
                    ex: m(|r| r.ex),
                    ay: m(|r| r.ay),
                    alat: m(|r| r.alat),
                    along: m(|r| r.along),
                    laps: m(|r| r.laps),
                    termination: rs[rs.len() - 1].termination,
                },
            )
        })
        .collect()
}

/// Seeds ordered by their final mean return, best first.
pub fn rank_seeds(seeds: &BTreeMap<u64, Vec<EvalRecord>>) -> Vec<u64> {
    let mut finals: Vec<(u64, f64)> = seeds
        .iter()
        .filter_map(|(s, recs)| seed_curve(recs).last().map(|(_, r)| (*s, r.ret)))
        .collect();
    finals.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    finals.into_iter().map(|(s, _)| s).collect()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// CSV tables: returns (mean and population standard deviation over seeds)
/// and KPI means, one row per algorithm and evaluation step. `best_k` keeps
/// only the k seeds with the highest final return.
pub fn plot_tables(metrics: &Metrics, best_k: Option<usize>) -> (String, String) {
    let mut returns = format!("{RETURNS_HEADER}\n");
    let mut kpis = format!("{KPIS_HEADER}\n");
    for (algo, seeds) in metrics {
        let keep: Vec<u64> = match best_k {
            Some(k) => rank_seeds(seeds).into_iter().take(k).collect(),
            None => seeds.keys().copied().collect(),
        };
        let mut by_step: BTreeMap<usize, Vec<EvalRecord>> = BTreeMap::new();
        for s in &keep {
            for (step, r) in seed_curve(&seeds[s]) {
                by_step.entry(step).or_default().push(r);
            }
        }
        for (step, rs) in by_step {
            let (m, sd) = mean_sd(&rs.iter().map(|r| r.ret).collect::<Vec<_>>());
            returns.push_str(&format!("{algo},{step},{},{m},{sd}\n", rs.len()));
            let col = |f: fn(&EvalRecord) -> f64| mean_sd(&rs.iter().map(f).collect::<Vec<_>>()).0;
            kpis.push_str(&format!(
                "{algo},{step},{},{},{},{},{},{},{},{}\n",
                rs.len(),
                col(|r| r.ect),
                col(|r| r.egamma),
                col(|r| r.ex),
                col(|r| r.ay),
                col(|r| r.alat),
                col(|r| r.along),
                col(|r| r.laps)
            ));
        }
    }
    (returns, kpis)
}

/// Writes `returns.csv` and `kpis.csv` into `out` from the metrics in `input`.
pub fn emit_plots(input: &Path, out: &Path, best_k: Option<usize>) -> Result<()> {
    let metrics = load_metrics(input)?;
    if metrics.is_empty() {
        return Err(Error::Usage(format!("no metrics files in {}", input.display())));
    }
    let (r, k) = plot_tables(&metrics, best_k);
    fs::create_dir_all(out)?;
    fs::write(out.join("returns.csv"), r)?;
    fs::write(out.join("kpis.csv"), k)?;
    Ok(())
}
