//! JSON and CSV rendering.
//!
//! Every report carries every key; fields a command does not compute are
//! `null`. The only non-deterministic field is `timestamp`.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub system: String,
    pub check: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub command: String,
    pub system: String,
    pub group: Option<String>,
    pub basis: Option<Vec<String>>,
    pub passed: bool,
    pub samples_used: usize,
    pub tolerance: Option<f64>,
    pub omega_hat: Option<Vec<f64>>,
    pub max_deviation: Option<f64>,
    pub residual: Option<f64>,
    pub rescalable: Option<bool>,
    pub direction: Option<Vec<f64>>,
    pub collinearity_ratio: Option<f64>,
    pub min_norm: Option<f64>,
    pub alpha: Option<Vec<f64>>,
    pub max_gap_tilde: Option<f64>,
    pub max_gap_canonical: Option<f64>,
    pub checks: Vec<CheckRecord>,
    /// Seconds since the Unix epoch; excluded from reproducibility checks.
    pub timestamp: u64,
}

impl VerificationReport {
    pub fn empty(command: &str, system: &str) -> Self {
        VerificationReport {
            command: command.into(),
            system: system.into(),
            group: None,
            basis: None,
            passed: false,
            samples_used: 0,
            tolerance: None,
            omega_hat: None,
            max_deviation: None,
            residual: None,
            rescalable: None,
            direction: None,
            collinearity_ratio: None,
            min_norm: None,
            alpha: None,
            max_gap_tilde: None,
            max_gap_canonical: None,
            checks: Vec::new(),
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are always serializable")
    }

    /// 0 on pass, 2 on a completed run that failed.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            2
        }
    }
}

/// A header plus rows, rendered with the `csv` crate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: Vec<String>) -> Self {
        CsvTable {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        writer.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            writer.write_record(row).map_err(io)?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Shortest round-trip representation, so the CSV is exact and stable.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
