//! JSON-lines traffic traces.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::packet::ValueKind;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("trace line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

/// One message between two GWIs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub cycle: u64,
    pub src: usize,
    pub dst: usize,
    pub kind: ValueKind,
    pub values: Vec<f64>,
    pub approximable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Records paired with their 1-based source line.
    pub records: Vec<(usize, TraceRecord)>,
    pub sha256: String,
}

impl Trace {
    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        let mut last_cycle = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let record: TraceRecord = serde_json::from_str(raw).map_err(|e| TraceError {
                line,
                message: e.to_string(),
            })?;
            if record.cycle < last_cycle {
                return Err(TraceError {
                    line,
                    message: format!("cycle {} precedes previous cycle {last_cycle}", record.cycle),
                });
            }
            if record.src == record.dst {
                return Err(TraceError {
                    line,
                    message: format!("src and dst are both {}", record.src),
                });
            }
            last_cycle = record.cycle;
            records.push((line, record));
        }
        Ok(Self {
            records,
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn from_records(records: Vec<TraceRecord>) -> Self {
        let text = to_jsonl(&records);
        Self::parse(&text).expect("generated records are well-formed")
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}
