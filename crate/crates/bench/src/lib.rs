//! Regret experiments over grids of environments and policies.
//!
//! [`load_config`] reads an experiment file, [`run_experiment`] plays every
//! (policy, repetition) pair, and the [`output`] writers emit the raw and
//! aggregate CSV files. Output bytes depend only on the configuration and
//! master seed, never on the worker count.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{load_config, parse_link, ConfigError, DistributionSpec, ExperimentConfig, PolicySpec};
pub use output::{
    aggregate, raw_rows, read_raw_csv, write_aggregate_csv, write_raw_csv, write_timing_csv, AggregateRow, OutputError,
    RawRow,
};
pub use runner::{
    build_environment, build_policy, dry_run, environment_seed, policy_seed, run_experiment, run_trace, thinned_rounds,
    RunRecord,
};
