use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sib_bench::{
    aggregate, load_config, raw_rows, read_raw_csv, run_experiment, write_aggregate_csv, write_raw_csv,
    write_timing_csv, ExperimentConfig,
};

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

#[derive(Parser)]
#[command(
    name = "sib-bench",
    version,
    about = "Seeded regret experiments for single index bandit policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy and repetition of an experiment.
    Run {
        config: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Overrides `master_seed` from the file.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `output` from the file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-run policy compute times.
        #[arg(long)]
        timing: bool,
    },
    /// Check an experiment file and build its policies without running them.
    Validate { config: PathBuf },
    /// Recompute the aggregate file from a raw trace file.
    Aggregate {
        raw: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn output_dir(config: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn validate(path: &Path) -> ExitCode {
    let config = match load_config(path) {
        Ok(c) => c,
        Err(e) => return fail(CONFIG_ERROR, e),
    };
    let mut ok = true;
    for (name, checked) in sib_bench::dry_run(&config) {
        match checked {
            Ok(()) => println!("{name}: ok"),
            Err(e) => {
                ok = false;
                println!("{name}: {e}");
            }
        }
    }
    if ok {
        println!(
            "{}: {} policies x {} repetitions, T = {}",
            config.name,
            config.policies.len(),
            config.repetitions,
            config.horizon
        );
        ExitCode::SUCCESS
    } else {
        ExitCode::from(CONFIG_ERROR)
    }
}

fn run(path: &Path, workers: usize, seed: Option<u64>, out: Option<PathBuf>, timing: bool) -> ExitCode {
    let mut config = match load_config(path) {
        Ok(c) => c,
        Err(e) => return fail(CONFIG_ERROR, e),
    };
    if let Some(s) = seed {
        config.master_seed = s;
    }
    let dir = output_dir(&config, out);
    if let Err(e) = fs::create_dir_all(&dir) {
        return fail(RUNTIME_ERROR, format!("{}: {e}", dir.display()));
    }
    let records = match run_experiment(&config, workers) {
        Ok(r) => r,
        Err(e) => return fail(RUNTIME_ERROR, e),
    };
    let raw_path = dir.join(format!("{}_raw.csv", config.name));
    let agg_path = dir.join(format!("{}_aggregate.csv", config.name));
    let complete: Vec<_> = records.iter().filter(|r| r.is_complete()).cloned().collect();
    let mut written = write_raw_csv(&records, &raw_path)
        .and_then(|_| write_aggregate_csv(&aggregate(&raw_rows(&complete)), &agg_path));
    if timing && written.is_ok() {
        written = write_timing_csv(&records, &dir.join(format!("{}_timing.csv", config.name)));
    }
    if let Err(e) = written {
        return fail(RUNTIME_ERROR, e);
    }
    for name in &config.policy_names {
        let finals: Vec<f64> = complete
            .iter()
            .filter(|r| &r.policy == name)
            .map(|r| r.final_regret)
            .collect();
        if finals.is_empty() {
            println!("{name:>16}  no complete runs");
            continue;
        }
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        println!("{name:>16}  mean R_T = {mean:.3}  ({} runs)", finals.len());
    }
    let failed: Vec<_> = records.iter().filter(|r| !r.is_complete()).collect();
    for r in &failed {
        eprintln!(
            "{} repetition {}: {}",
            r.policy,
            r.repetition,
            r.error.as_deref().unwrap_or_default()
        );
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(RUNTIME_ERROR)
    }
}

fn aggregate_file(raw: &Path, out: Option<PathBuf>) -> ExitCode {
    let rows = match read_raw_csv(raw) {
        Ok(r) => r,
        Err(e) => return fail(CONFIG_ERROR, e),
    };
    let path = match out {
        Some(dir) => {
            if let Err(e) = fs::create_dir_all(&dir) {
                return fail(RUNTIME_ERROR, format!("{}: {e}", dir.display()));
            }
            let stem = raw.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
            dir.join(format!("{}_aggregate.csv", stem.trim_end_matches("_raw")))
        }
        None => {
            let stem = raw.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
            raw.with_file_name(format!("{}_aggregate.csv", stem.trim_end_matches("_raw")))
        }
    };
    match write_aggregate_csv(&aggregate(&rows), &path) {
        Ok(()) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(RUNTIME_ERROR, e),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            workers,
            seed,
            out,
            timing,
        } => run(&config, workers, seed, out, timing),
        Command::Validate { config } => validate(&config),
        Command::Aggregate { raw, out } => aggregate_file(&raw, out),
    }
}
