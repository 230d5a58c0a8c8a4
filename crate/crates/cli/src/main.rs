use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajrl::env::Task;
use trajrl::harness::{emit_plots, evaluate, run_seed, Algo, ExperimentConfig, Learner, Preset, METRICS_HEADER};

#[derive(Parser)]
#[command(name = "trajrl", version, about = "Train, evaluate and plot trajectory-tracking agents")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one seed; writes `<algo>_seed<n>.csv` and `<algo>_seed<n>.ckpt` into the output directory
    Train {
        /// Key-value config file; defaults to the full preset when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// sac, redq, pets-mppi or mbpo; overrides `train.algo` in the config
        #[arg(long)]
        algo: Option<Algo>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint and print metrics rows to stdout
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        /// Seed of the evaluation episodes
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Aggregate metrics CSVs into return and KPI tables
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep only the k best seeds per algorithm
        #[arg(long)]
        best_k: Option<usize>,
    },
    /// Print a complete config with every key at its default
    Config {
        #[arg(long, default_value = "full")]
        preset: Preset,
        #[arg(long, default_value = "sac")]
        algo: Algo,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Train { config, algo, seed, out } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::from_file(&p, algo)?,
                None => ExperimentConfig::full(algo.unwrap_or(Algo::Sac)),
            };
            let run = run_seed(&cfg, seed, Some(&out))?;
            let ckpt = out.join(format!("{}_seed{seed}.ckpt", cfg.algo.tag()));
            let mut w = BufWriter::new(File::create(&ckpt).with_context(|| ckpt.display().to_string())?);
            run.learner.write_checkpoint(&cfg, &mut w)?;
            w.flush()?;
            if let Some(last) = run.records.last() {
                eprintln!(
                    "{} seed {seed}: {} env steps, final return {:.1}, laps {:.2}",
                    cfg.algo.tag(),
                    run.env_steps,
                    last.ret,
                    last.laps
                );
            }
        }
        Cmd::Eval {
            checkpoint,
            episodes,
            seed,
        } => {
            let f = File::open(&checkpoint).with_context(|| checkpoint.display().to_string())?;
            let (cfg, learner) = Learner::read_checkpoint(&mut BufReader::new(f))?;
            let task = Task::new(cfg.env.clone())?;
            let c = learner.controller(&cfg);
            let recs = evaluate(&c, &task, episodes, cfg.steps, seed, &mut ChaCha8Rng::seed_from_u64(seed))?;
            println!("{METRICS_HEADER}");
            for r in recs {
                println!("{}", r.csv_row());
            }
        }
        Cmd::Plot { input, out, best_k } => emit_plots(&input, &out, best_k)?,
        Cmd::Config { preset, algo } => print!("{}", ExperimentConfig::preset(preset, algo).to_text()),
    }
    Ok(())
}
