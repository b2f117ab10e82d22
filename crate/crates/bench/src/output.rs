//! CSV artifacts.
//!
//! Raw traces: `experiment,policy,repetition,seed,t,cum_regret`.
//! Aggregates: `experiment,policy,t,mean_cum_regret,stderr`.
//! Files are UTF-8 with LF line endings; floats use the shortest
//! representation that round-trips.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::runner::RunRecord;

pub const RAW_HEADER: [&str; 6] = ["experiment", "policy", "repetition", "seed", "t", "cum_regret"];
pub const AGGREGATE_HEADER: [&str; 5] = ["experiment", "policy", "t", "mean_cum_regret", "stderr"];
pub const TIMING_HEADER: [&str; 9] = [
    "experiment",
    "policy",
    "repetition",
    "seed",
    "final_regret",
    "policy_seconds",
    "estimates",
    "solver_failures",
    "error",
];

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub experiment: String,
    pub policy: String,
    pub repetition: usize,
    pub seed: u64,
    pub t: usize,
    pub cum_regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub experiment: String,
    pub policy: String,
    pub t: usize,
    pub mean_cum_regret: f64,
    pub stderr: f64,
}

pub fn raw_rows(records: &[RunRecord]) -> Vec<RawRow> {
    records
        .iter()
        .flat_map(|rec| {
            rec.trace.iter().map(move |&(t, r)| RawRow {
                experiment: rec.experiment.clone(),
                policy: rec.policy.clone(),
                repetition: rec.repetition,
                seed: rec.seed,
                t,
                cum_regret: r,
            })
        })
        .collect()
}

/// Mean and standard error of the mean across repetitions at every `t`.
///
/// Policies keep their order of first appearance; a single repetition has
/// standard error 0.
pub fn aggregate(rows: &[RawRow]) -> Vec<AggregateRow> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for row in rows {
        let key = (row.experiment.clone(), row.policy.clone());
        let idx = match order.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                order.push(key);
                order.len() - 1
            }
        };
        groups.entry((idx, row.t)).or_default().push(row.cum_regret);
    }
    groups
        .into_iter()
        .map(|((idx, t), values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let stderr = if values.len() > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            AggregateRow {
                experiment: order[idx].0.clone(),
                policy: order[idx].1.clone(),
                t,
                mean_cum_regret: mean,
                stderr,
            }
        })
        .collect()
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn write_with<F>(path: &Path, body: F) -> Result<(), OutputError>
where
    F: FnOnce(&mut csv::Writer<File>) -> csv::Result<()>,
{
    let mut w = writer(create(path)?);
    body(&mut w)
        .and_then(|_| w.flush().map_err(csv::Error::from))
        .map_err(|source| OutputError::Csv {
            path: path.to_owned(),
            source,
        })
}

pub fn write_raw_rows<W: Write>(rows: &[RawRow], out: W) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(RAW_HEADER)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.policy.clone(),
            r.repetition.to_string(),
            r.seed.to_string(),
            r.t.to_string(),
            r.cum_regret.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_rows<W: Write>(rows: &[AggregateRow], out: W) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.policy.clone(),
            r.t.to_string(),
            r.mean_cum_regret.to_string(),
            r.stderr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<File, OutputError> {
    File::create(path).map_err(|source| OutputError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn write_raw_csv(records: &[RunRecord], path: &Path) -> Result<(), OutputError> {
    write_raw_rows(&raw_rows(records), create(path)?).map_err(|source| OutputError::Csv {
        path: path.to_owned(),
        source,
    })
}

pub fn write_aggregate_csv(rows: &[AggregateRow], path: &Path) -> Result<(), OutputError> {
    write_aggregate_rows(rows, create(path)?).map_err(|source| OutputError::Csv {
        path: path.to_owned(),
        source,
    })
}

/// Per-run timings and diagnostics. Timings vary between runs, so this file
/// is kept apart from the deterministic traces.
pub fn write_timing_csv(records: &[RunRecord], path: &Path) -> Result<(), OutputError> {
    write_with(path, |w| {
        w.write_record(TIMING_HEADER)?;
        for r in records {
            w.write_record([
                r.experiment.as_str(),
                &r.policy,
                &r.repetition.to_string(),
                &r.seed.to_string(),
                &r.final_regret.to_string(),
                &r.policy_seconds.to_string(),
                &r.diagnostics.estimates.to_string(),
                &r.diagnostics.solver_failures.to_string(),
                r.error.as_deref().unwrap_or(""),
            ])?;
        }
        Ok(())
    })
}

fn field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    i: usize,
    name: &str,
    path: &Path,
) -> Result<T, OutputError> {
    record
        .get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| OutputError::Format {
            path: path.to_owned(),
            reason: format!("line {}: bad `{name}`", record.position().map_or(0, |p| p.line())),
        })
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<RawRow>, OutputError> {
    let csv_err = |source| OutputError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().ne(RAW_HEADER) {
        return Err(OutputError::Format {
            path: path.to_owned(),
            reason: format!("expected header `{}`", RAW_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        rows.push(RawRow {
            experiment: field(&record, 0, "experiment", path)?,
            policy: field(&record, 1, "policy", path)?,
            repetition: field(&record, 2, "repetition", path)?,
            seed: field(&record, 3, "seed", path)?,
            t: field(&record, 4, "t", path)?,
            cum_regret: field(&record, 5, "cum_regret", path)?,
        });
    }
    if rows.is_empty() {
        return Err(OutputError::Format {
            path: path.to_owned(),
            reason: "no data rows".into(),
        });
    }
    Ok(rows)
}
