//! Report records and their JSON/CSV rendering.

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub name: String,
    pub value: f64,
    pub bound: Option<f64>,
    pub pass: bool,
}

impl Record {
    /// Passes when `value ≤ bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Record {
            name: name.into(),
            value,
            bound: Some(bound),
            pass: value <= bound,
        }
    }

    /// Passes when `value ≥ bound`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Record {
            name: name.into(),
            value,
            bound: Some(bound),
            pass: value >= bound,
        }
    }

    /// Informational value, always passing.
    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Record {
            name: name.into(),
            value,
            bound: None,
            pass: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportFile {
    pub command: String,
    pub inputs_digest: String,
    pub seed: u64,
    pub records: Vec<Record>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

impl ReportFile {
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    /// One row per record.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["command", "name", "value", "bound", "pass"]).expect("in-memory write");
        for r in &self.records {
            let bound = r.bound.map(|b| b.to_string()).unwrap_or_default();
            w.write_record([self.command.as_str(), &r.name, &r.value.to_string(), &bound, &r.pass.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

/// SHA-256 over the input files, each prefixed by its length.
pub fn digest(inputs: &[Vec<u8>]) -> String {
    let mut h = Sha256::new();
    for bytes in inputs {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    format!("{:x}", h.finalize())
}
