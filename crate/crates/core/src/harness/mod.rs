//! Seeded training runs, evaluation, metrics files and plot tables.

mod config;
mod eval;
mod plots;
mod run;
mod study;

pub use config::{Algo, ExperimentConfig, Preset};
pub use eval::{evaluate, rollout_config, Controller, Episode, EvalRecord, Termination, METRICS_HEADER};
pub use plots::{
    emit_plots, load_metrics, parse_metrics, plot_tables, rank_seeds, seed_curve, Metrics, KPIS_HEADER, RETURNS_HEADER,
};
pub use run::{metrics_file_name, run_experiment, run_seed, Learner, Run, RunOutput};
pub use study::{assess_efficiency, data_efficiency_study, median_curve, EfficiencyReport};
