//! CSV and JSON result files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// One metric value as written to the metrics JSON files. `value` is `null` when
/// the metric is undefined for the evaluated pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: Option<f64>,
    pub split: String,
    pub signal: String,
    pub seed: u64,
}

/// Collects records for one split and seed.
#[derive(Clone, Debug)]
pub struct Recorder {
    split: String,
    seed: u64,
    pub records: Vec<MetricRecord>,
}

impl Recorder {
    pub fn new(split: impl Into<String>, seed: u64) -> Self {
        Recorder { split: split.into(), seed, records: Vec::new() }
    }

    pub fn push(&mut self, metric: &str, signal: &str, value: Option<f64>) {
        self.records.push(MetricRecord {
            metric: metric.into(),
            value,
            split: self.split.clone(),
            signal: signal.into(),
            seed: self.seed,
        });
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| CliError::format(path, e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::format(path, e.to_string()))?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
