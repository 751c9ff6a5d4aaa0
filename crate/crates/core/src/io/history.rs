use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smoothing::{IterationRecord, TerminationReason};

/// One line of the history CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub norm2_qe: f64,
    pub min_qe: f64,
    pub mean_qe: f64,
    pub inverted_count: usize,
}

impl From<&IterationRecord> for HistoryRow {
    fn from(r: &IterationRecord) -> Self {
        HistoryRow {
            iteration: r.iteration,
            norm2_qe: r.norm2_qe,
            min_qe: r.min_qe,
            mean_qe: r.mean_qe,
            inverted_count: r.inverted_count,
        }
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Header `iteration,norm2_qe,min_qe,mean_qe,inverted_count`, one row per record.
pub fn write_history_csv(path: impl AsRef<Path>, rows: &[HistoryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["iteration", "norm2_qe", "min_qe", "mean_qe", "inverted_count"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history_csv(path: impl AsRef<Path>) -> Result<Vec<HistoryRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Machine-readable result of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub case: String,
    pub seed: u64,
    pub spacing: f64,
    pub eps_star: f64,
    pub kappa_star: f64,
    pub fit_residual: f64,
    pub n: usize,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub n_data_sites: usize,
    pub history: Vec<IterationRecord>,
    pub termination_iteration: usize,
    pub termination_reason: TerminationReason,
    pub best_iteration: usize,
    /// Mean wall seconds per call, keyed by algorithm step.
    pub timings: BTreeMap<String, f64>,
}

pub fn write_summary(path: impl AsRef<Path>, summary: &RunSummary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}
