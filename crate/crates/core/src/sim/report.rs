use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::ApproxPolicy;
use crate::tuning::VariationMap;

use super::config::{RunConfig, Variant};
use super::engine::EnergyLedger;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub records: u64,
    pub packets: u64,
    pub exact_packets: u64,
    pub reduced_power_packets: u64,
    pub truncated_packets: u64,
    /// Integer words whose dropped MSBs were not zero.
    pub precondition_violations: u64,
    /// Approximable integer records whose variable the policy does not list.
    pub unlisted_variables: u64,
    pub truncated_bits: u64,
    pub reduced_power_bits: u64,
    /// Approximated bits that arrived different from what was sent.
    pub approximated_bits_lost: u64,
    /// Non-approximated bits that arrived corrupted; always 0.
    pub exact_bit_errors: u64,
    pub variation_map_rejections: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provisioning {
    pub full_wavelength_dbm: f64,
    pub worst_case_loss_db: f64,
    pub n_lambda: u32,
    /// MRs per active bank, data plus codec wavelengths.
    pub bank_mrs: u32,
    /// (src, dst) pairs whose approximated bits are truncated.
    pub truncation_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub label: String,
    pub variant: Variant,
    pub config: RunConfig,
    pub effective_policy: ApproxPolicy,
    pub trace_sha256: String,
    pub config_sha256: String,
    pub topology_sha256: String,
    pub provisioning: Provisioning,
    pub variation_map: VariationMap,
    pub ledger: EnergyLedger,
    pub total_energy_j: f64,
    pub epb_pj_per_bit: Option<f64>,
    /// Averages over transmission cycles.
    pub laser_mw_avg: f64,
    pub laser_mw_peak: f64,
    pub tuning_mw_avg: f64,
    /// Average power per category over all elapsed cycles.
    pub breakdown: BTreeMap<String, f64>,
    pub diagnostics: Diagnostics,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("need at least two reports, got {0}")]
    TooFew(usize),
    #[error("report {label} was produced from a different {what} ({found} vs {expected})")]
    Mismatch {
        label: String,
        what: &'static str,
        found: String,
        expected: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: String,
    pub epb_pj_per_bit: Option<f64>,
    pub laser_mw_avg: f64,
    pub laser_mw_peak: f64,
    pub tuning_mw_avg: f64,
    pub norm_epb: Option<f64>,
    pub norm_laser: Option<f64>,
    pub epb_reduction_pct: Option<f64>,
    pub laser_reduction_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
    pub warnings: Vec<String>,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| a / b)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("variant,epb_pj_per_bit,laser_mw_avg,laser_mw_peak,tuning_mw_avg,norm_epb,norm_laser\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.variant,
                fmt_opt(r.epb_pj_per_bit),
                r.laser_mw_avg,
                r.laser_mw_peak,
                r.tuning_mw_avg,
                fmt_opt(r.norm_epb),
                fmt_opt(r.norm_laser)
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn row(&self, label: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.variant == label)
    }
}

/// Normalize every report to the baseline (the first `Baseline` report,
/// else the first report).
pub fn compare(reports: &[SimReport]) -> Result<ComparisonTable, CompareError> {
    if reports.len() < 2 {
        return Err(CompareError::TooFew(reports.len()));
    }
    let first = &reports[0];
    for r in &reports[1..] {
        for (what, found, expected) in [
            ("trace", &r.trace_sha256, &first.trace_sha256),
            ("topology", &r.topology_sha256, &first.topology_sha256),
        ] {
            if found != expected {
                return Err(CompareError::Mismatch {
                    label: r.label.clone(),
                    what,
                    found: found.clone(),
                    expected: expected.clone(),
                });
            }
        }
    }
    let base = reports.iter().find(|r| r.variant == Variant::Baseline).unwrap_or(first);
    let rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| {
            let norm_epb = match (r.epb_pj_per_bit, base.epb_pj_per_bit) {
                (Some(a), Some(b)) => ratio(a, b),
                _ => None,
            };
            let norm_laser = ratio(r.laser_mw_avg, base.laser_mw_avg);
            ComparisonRow {
                variant: r.label.clone(),
                epb_pj_per_bit: r.epb_pj_per_bit,
                laser_mw_avg: r.laser_mw_avg,
                laser_mw_peak: r.laser_mw_peak,
                tuning_mw_avg: r.tuning_mw_avg,
                norm_epb,
                norm_laser,
                epb_reduction_pct: norm_epb.map(|n| (1.0 - n) * 100.0),
                laser_reduction_pct: norm_laser.map(|n| (1.0 - n) * 100.0),
            }
        })
        .collect();
    let mut warnings = Vec::new();
    let epb = |label: &str| rows.iter().find(|r| r.variant == label).and_then(|r| r.epb_pj_per_bit);
    let chain = ["arxon-PAM4", "lorax-PAM4", "lorax-OOK"];
    for pair in chain.windows(2) {
        if let (Some(a), Some(b)) = (epb(pair[0]), epb(pair[1])) {
            if a > b {
                warnings.push(format!(
                    "parameter sensitivity: {} EPB {a} exceeds {} EPB {b}",
                    pair[0], pair[1]
                ));
            }
        }
    }
    Ok(ComparisonTable {
        baseline: base.label.clone(),
        rows,
        warnings,
    })
}
