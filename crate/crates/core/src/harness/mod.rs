//! Experiment configuration, Monte-Carlo sweeps and timing benchmarks.

pub mod bench;
pub mod config;
pub mod sweep;

pub use bench::{run_bench, BenchConfig, BenchResult, BenchRow};
pub use config::{parse_config, ChannelSpec, Detector, DetectorChoice, ExperimentConfig, GridSpec};
pub use sweep::{
    emit_csv, run_sweep, run_sweep_with, snr_at_p_md, trial_rng, Experiment, SweepResult, SweepRow,
    TrialOutcome,
};
