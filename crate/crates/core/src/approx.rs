//! Bit-level approximation of floating-point and integer payloads, the
//! per-application policy table, and the distance-aware choice between
//! truncation and reduced-power transmission.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kv::{ConfigError, KvTable};
use crate::topology::TruncationTable;

/// Largest bit count the 6-bit header field is used for.
pub const MAX_APPROX_BITS: u32 = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApproxError {
    #[error("cannot approximate {requested} LSBs of a {precision:?} float (mantissa is {width} bits)")]
    MantissaOverflow {
        requested: u32,
        width: u32,
        precision: Precision,
    },
    #[error("{msb} MSBs + {lsb} LSBs exceed the {width}-bit integer width")]
    IntOverflow { msb: u32, lsb: u32, width: u32 },
    #[error("invalid policy: {0}")]
    Policy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn total_bits(self) -> u32 {
        match self {
            Precision::Single => 32,
            Precision::Double => 64,
        }
    }

    pub fn exponent_bits(self) -> u32 {
        match self {
            Precision::Single => 8,
            Precision::Double => 11,
        }
    }

    pub fn mantissa_bits(self) -> u32 {
        match self {
            Precision::Single => 23,
            Precision::Double => 52,
        }
    }

    pub fn bias(self) -> i32 {
        match self {
            Precision::Single => 127,
            Precision::Double => 1023,
        }
    }

    /// Mantissa LSBs a packet may approximate, bounded by the header range.
    pub fn max_approx_bits(self) -> u32 {
        self.mantissa_bits().min(MAX_APPROX_BITS)
    }
}

/// Sign, exponent and mantissa fields of an IEEE-754 bit pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FloatFields {
    pub sign: u8,
    pub exponent: u32,
    pub mantissa: u64,
    pub precision: Precision,
}

impl FloatFields {
    pub fn from_bits(bits: u64, precision: Precision) -> Self {
        let m = precision.mantissa_bits();
        let e = precision.exponent_bits();
        Self {
            sign: ((bits >> (m + e)) & 1) as u8,
            exponent: ((bits >> m) & ((1 << e) - 1)) as u32,
            mantissa: bits & low_mask(m),
            precision,
        }
    }

    pub fn to_bits(&self) -> u64 {
        let m = self.precision.mantissa_bits();
        let e = self.precision.exponent_bits();
        (u64::from(self.sign) << (m + e)) | (u64::from(self.exponent) << m) | self.mantissa
    }

    pub fn bias(&self) -> i32 {
        self.precision.bias()
    }

    pub fn is_normal(&self) -> bool {
        let max_exp = (1u32 << self.precision.exponent_bits()) - 1;
        self.exponent != 0 && self.exponent != max_exp
    }

    /// `(-1)^S * 2^(E - bias) * (1 + M)` with `M` as a binary fraction.
    /// Only meaningful for normal numbers.
    pub fn value(&self) -> f64 {
        let fraction = self.mantissa as f64 / (1u64 << self.precision.mantissa_bits()) as f64;
        let sign = if self.sign == 1 { -1.0 } else { 1.0 };
        sign * 2f64.powi(self.exponent as i32 - self.bias()) * (1.0 + fraction)
    }
}

pub fn split_f32(value: f32) -> FloatFields {
    FloatFields::from_bits(u64::from(value.to_bits()), Precision::Single)
}

pub fn split_f64(value: f64) -> FloatFields {
    FloatFields::from_bits(value.to_bits(), Precision::Double)
}

pub fn join_f32(fields: &FloatFields) -> f32 {
    f32::from_bits(fields.to_bits() as u32)
}

pub fn join_f64(fields: &FloatFields) -> f64 {
    f64::from_bits(fields.to_bits())
}

pub(crate) fn low_mask(bits: u32) -> u64 {
    match bits {
        0 => 0,
        64.. => u64::MAX,
        b => (1u64 << b) - 1,
    }
}

/// Which bits of a word were lost in transit; every other bit was
/// recovered intact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChannelOutcome {
    pub lost: u64,
}

impl ChannelOutcome {
    pub fn all_lost() -> Self {
        Self { lost: u64::MAX }
    }

    pub fn all_recovered() -> Self {
        Self { lost: 0 }
    }
}

/// Replace the `lsb_bits` lowest bits of `bits` per `outcome`: lost bits
/// read as 0.
pub fn approximate_float_bits(
    bits: u64,
    precision: Precision,
    lsb_bits: u32,
    outcome: ChannelOutcome,
) -> Result<u64, ApproxError> {
    if lsb_bits > precision.mantissa_bits() {
        return Err(ApproxError::MantissaOverflow {
            requested: lsb_bits,
            width: precision.mantissa_bits(),
            precision,
        });
    }
    Ok(bits & !(outcome.lost & low_mask(lsb_bits)))
}

pub fn approximate_f32(value: f32, lsb_bits: u32, outcome: ChannelOutcome) -> Result<f32, ApproxError> {
    approximate_float_bits(u64::from(value.to_bits()), Precision::Single, lsb_bits, outcome)
        .map(|b| f32::from_bits(b as u32))
}

pub fn approximate_f64(value: f64, lsb_bits: u32, outcome: ChannelOutcome) -> Result<f64, ApproxError> {
    approximate_float_bits(value.to_bits(), Precision::Double, lsb_bits, outcome).map(f64::from_bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntApproximation {
    pub value: u64,
    /// The truncated MSBs held data, so the reconstruction differs.
    pub precondition_violated: bool,
}

/// Drop the `msb_bits` top bits of a `width`-bit unsigned word (refilled
/// with zeros at the destination) and pass the `lsb_bits` lowest bits
/// through `outcome`.
pub fn approximate_int(
    value: u64,
    width: u32,
    msb_bits: u32,
    lsb_bits: u32,
    outcome: ChannelOutcome,
) -> Result<IntApproximation, ApproxError> {
    if msb_bits + lsb_bits > width || width > 64 {
        return Err(ApproxError::IntOverflow {
            msb: msb_bits,
            lsb: lsb_bits,
            width,
        });
    }
    let word = value & low_mask(width);
    let msb_mask = msb_mask(width, msb_bits);
    let lost = outcome.lost & low_mask(lsb_bits);
    Ok(IntApproximation {
        value: word & !msb_mask & !lost,
        precondition_violated: word & msb_mask != 0,
    })
}

fn msb_mask(width: u32, msb_bits: u32) -> u64 {
    low_mask(width) & !low_mask(width - msb_bits)
}

/// Variables eligible for integer approximation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarSet {
    All,
    Only(BTreeSet<String>),
}

impl VarSet {
    pub fn contains(&self, var: &str) -> bool {
        match self {
            VarSet::All => true,
            VarSet::Only(set) => set.contains(var),
        }
    }

    fn parse(text: &str) -> Self {
        let text = text.trim();
        if text == "*" {
            return VarSet::All;
        }
        VarSet::Only(
            text.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    fn render(&self) -> String {
        match self {
            VarSet::All => "*".into(),
            VarSet::Only(set) => set.iter().cloned().collect::<Vec<_>>().join(","),
        }
    }
}

/// How many bits of which packets an application tolerates losing, and
/// how far the laser is turned down for them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxPolicy {
    pub app_name: String,
    pub float_lsb_bits: u32,
    pub int_msb_bits: u32,
    pub int_lsb_bits: u32,
    /// Fraction of laser power removed for approximated bits; 1.0 truncates.
    pub power_reduction: f64,
    pub approximable_vars: VarSet,
}

pub const POLICY_KEYS: &[&str] = &[
    "app_name",
    "float_lsb_bits",
    "int_msb_bits",
    "int_lsb_bits",
    "power_reduction",
    "approximable_vars",
];

impl ApproxPolicy {
    /// Policy that approximates nothing.
    pub fn exact(app_name: &str) -> Self {
        Self {
            app_name: app_name.into(),
            float_lsb_bits: 0,
            int_msb_bits: 0,
            int_lsb_bits: 0,
            power_reduction: 0.0,
            approximable_vars: VarSet::All,
        }
    }

    pub fn validate(&self) -> Result<(), ApproxError> {
        for (name, v) in [
            ("float_lsb_bits", self.float_lsb_bits),
            ("int_msb_bits", self.int_msb_bits),
            ("int_lsb_bits", self.int_lsb_bits),
        ] {
            if v > MAX_APPROX_BITS {
                return Err(ApproxError::Policy(format!("{name} = {v} exceeds {MAX_APPROX_BITS}")));
            }
        }
        if !(0.0..=1.0).contains(&self.power_reduction) {
            return Err(ApproxError::Policy(format!(
                "power_reduction must be in [0, 1], got {}",
                self.power_reduction
            )));
        }
        Ok(())
    }

    pub fn laser_fraction(&self) -> f64 {
        1.0 - self.power_reduction
    }

    pub fn is_exact(&self) -> bool {
        self.float_lsb_bits == 0 && self.int_msb_bits == 0 && self.int_lsb_bits == 0
    }

    pub fn preset(name: &str) -> Option<Self> {
        AppPreset::find(name).map(|p| p.arxon_policy())
    }

    pub fn apply_kv(mut self, table: &KvTable) -> Result<Self, ConfigError> {
        if let Some(v) = table.get("app_name") {
            self.app_name = v.to_string();
        }
        if let Some(v) = table.parse_opt("float_lsb_bits")? {
            self.float_lsb_bits = v;
        }
        if let Some(v) = table.parse_opt("int_msb_bits")? {
            self.int_msb_bits = v;
        }
        if let Some(v) = table.parse_opt("int_lsb_bits")? {
            self.int_lsb_bits = v;
        }
        if let Some(v) = table.parse_opt("power_reduction")? {
            self.power_reduction = v;
        }
        if let Some(v) = table.get("approximable_vars") {
            self.approximable_vars = VarSet::parse(v);
        }
        self.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(self)
    }

    /// Load a policy file: optional `preset = <application>` plus field
    /// overrides.
    pub fn from_kv_str(text: &str) -> Result<Self, ConfigError> {
        let table = KvTable::parse(text)?;
        let mut allowed = POLICY_KEYS.to_vec();
        allowed.push("preset");
        table.check_known(&allowed)?;
        let base = match table.get("preset") {
            None => Self::exact("custom"),
            Some(p) => Self::preset(p).ok_or_else(|| ConfigError::InvalidValue {
                key: "preset".into(),
                value: p.into(),
                reason: "unknown application preset".into(),
            })?,
        };
        base.apply_kv(&table)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "app_name = {}\nfloat_lsb_bits = {}\nint_msb_bits = {}\nint_lsb_bits = {}\npower_reduction = {}\napproximable_vars = {}\n",
            self.app_name,
            self.float_lsb_bits,
            self.int_msb_bits,
            self.int_lsb_bits,
            self.power_reduction,
            self.approximable_vars.render()
        )
    }
}

/// One application row: settings for the truncation-only, loss-aware
/// float-only and full approximation schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppPreset {
    pub name: &'static str,
    pub truncation_float_bits: Option<u32>,
    /// (float bits, power reduction) for loss-aware float-only approximation.
    pub lorax: Option<(u32, f64)>,
    pub float_bits: Option<u32>,
    pub int_bits: Option<u32>,
    pub power_reduction: f64,
}

pub const APP_PRESETS: &[AppPreset] = &[
    AppPreset {
        name: "blackscholes",
        truncation_float_bits: Some(12),
        lorax: Some((32, 0.9)),
        float_bits: Some(32),
        int_bits: Some(24),
        power_reduction: 0.9,
    },
    AppPreset {
        name: "canneal",
        truncation_float_bits: Some(32),
        lorax: Some((32, 1.0)),
        float_bits: Some(32),
        int_bits: Some(24),
        power_reduction: 1.0,
    },
    AppPreset {
        name: "fft",
        truncation_float_bits: Some(8),
        lorax: Some((32, 0.5)),
        float_bits: Some(32),
        int_bits: Some(20),
        power_reduction: 0.5,
    },
    AppPreset {
        name: "jpeg",
        truncation_float_bits: Some(20),
        lorax: Some((24, 0.8)),
        float_bits: Some(22),
        int_bits: Some(4),
        power_reduction: 0.8,
    },
    AppPreset {
        name: "sobel",
        truncation_float_bits: Some(32),
        lorax: Some((32, 1.0)),
        float_bits: Some(32),
        int_bits: Some(20),
        power_reduction: 1.0,
    },
    AppPreset {
        name: "streamcluster",
        truncation_float_bits: Some(12),
        lorax: Some((28, 0.8)),
        float_bits: Some(28),
        int_bits: Some(20),
        power_reduction: 0.8,
    },
    AppPreset {
        name: "fluidanimate",
        truncation_float_bits: None,
        lorax: None,
        float_bits: None,
        int_bits: Some(8),
        power_reduction: 1.0,
    },
    AppPreset {
        name: "x264",
        truncation_float_bits: None,
        lorax: None,
        float_bits: None,
        int_bits: Some(12),
        power_reduction: 1.0,
    },
    AppPreset {
        name: "mnist_train",
        truncation_float_bits: Some(24),
        lorax: Some((24, 1.0)),
        float_bits: Some(24),
        int_bits: None,
        power_reduction: 1.0,
    },
    AppPreset {
        name: "mnist_test",
        truncation_float_bits: Some(24),
        lorax: Some((24, 1.0)),
        float_bits: Some(24),
        int_bits: None,
        power_reduction: 1.0,
    },
    AppPreset {
        name: "cifar10_train",
        truncation_float_bits: Some(24),
        lorax: Some((24, 1.0)),
        float_bits: Some(24),
        int_bits: None,
        power_reduction: 1.0,
    },
    AppPreset {
        name: "cifar10_test",
        truncation_float_bits: Some(24),
        lorax: Some((24, 1.0)),
        float_bits: Some(24),
        int_bits: None,
        power_reduction: 1.0,
    },
];

impl AppPreset {
    pub fn find(name: &str) -> Option<&'static AppPreset> {
        let name = name.to_ascii_lowercase();
        APP_PRESETS.iter().find(|p| p.name == name)
    }

    pub fn arxon_policy(&self) -> ApproxPolicy {
        ApproxPolicy {
            app_name: self.name.into(),
            float_lsb_bits: self.float_bits.unwrap_or(0),
            int_msb_bits: self.int_bits.unwrap_or(0),
            int_lsb_bits: 0,
            power_reduction: self.power_reduction,
            approximable_vars: VarSet::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Exact,
    ReducedPower,
    Truncate,
}

/// How the bits of one payload word are sent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionPlan {
    /// Treatment of the approximable LSB range.
    pub decision: Decision,
    pub word_bits: u32,
    /// Approximable LSBs of the word.
    pub lsb_mask: u64,
    /// Integer MSBs dropped regardless of distance.
    pub msb_mask: u64,
    /// Fraction of full per-wavelength laser power for the LSB range.
    pub laser_fraction: f64,
}

impl TransmissionPlan {
    pub fn exact(word_bits: u32) -> Self {
        Self {
            decision: Decision::Exact,
            word_bits,
            lsb_mask: 0,
            msb_mask: 0,
            laser_fraction: 1.0,
        }
    }

    pub fn affected_mask(&self) -> u64 {
        self.lsb_mask | self.msb_mask
    }

    pub fn truncated_mask(&self) -> u64 {
        match self.decision {
            Decision::Truncate => self.lsb_mask | self.msb_mask,
            _ => self.msb_mask,
        }
    }

    pub fn reduced_mask(&self) -> u64 {
        match self.decision {
            Decision::ReducedPower => self.lsb_mask,
            _ => 0,
        }
    }

    /// Number of approximated LSBs (for the header count field).
    pub fn lsb_bits(&self) -> u32 {
        self.lsb_mask.count_ones()
    }

    pub fn msb_bits(&self) -> u32 {
        self.msb_mask.count_ones()
    }
}

/// What kind of payload a packet carries, as seen by the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketClass<'a> {
    Float(Precision),
    Int { width: u32, var_id: Option<&'a str> },
    Other { width: u32 },
}

impl PacketClass<'_> {
    pub fn word_bits(&self) -> u32 {
        match *self {
            PacketClass::Float(p) => p.total_bits(),
            PacketClass::Int { width, .. } | PacketClass::Other { width } => width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanDiagnostic {
    /// Marked approximable, but the variable is not in the policy's set.
    UnlistedVariable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Planned {
    pub plan: TransmissionPlan,
    pub diagnostic: Option<PlanDiagnostic>,
}

fn lsb_decision(policy: &ApproxPolicy, src: usize, dst: usize, table: &TruncationTable) -> (Decision, f64) {
    if policy.power_reduction >= 1.0 || table.contains(src, dst) {
        (Decision::Truncate, 0.0)
    } else {
        (Decision::ReducedPower, policy.laser_fraction())
    }
}

/// Choose truncation or reduced power for one packet's approximable bits.
pub fn plan_transmission(
    policy: &ApproxPolicy,
    class: PacketClass<'_>,
    src: usize,
    dst: usize,
    table: &TruncationTable,
) -> Planned {
    let word_bits = class.word_bits();
    let exact = Planned {
        plan: TransmissionPlan::exact(word_bits),
        diagnostic: None,
    };
    match class {
        PacketClass::Other { .. } => exact,
        PacketClass::Float(precision) => {
            let bits = policy.float_lsb_bits.min(precision.max_approx_bits());
            if bits == 0 || policy.power_reduction <= 0.0 {
                return exact;
            }
            let (decision, laser_fraction) = lsb_decision(policy, src, dst, table);
            Planned {
                plan: TransmissionPlan {
                    decision,
                    word_bits,
                    lsb_mask: low_mask(bits),
                    msb_mask: 0,
                    laser_fraction,
                },
                diagnostic: None,
            }
        }
        PacketClass::Int { width, var_id } => {
            if !var_id.is_some_and(|v| policy.approximable_vars.contains(v)) {
                return Planned {
                    diagnostic: Some(PlanDiagnostic::UnlistedVariable),
                    ..exact
                };
            }
            let msb = policy.int_msb_bits.min(width);
            let lsb = if policy.power_reduction > 0.0 {
                policy.int_lsb_bits.min(width - msb)
            } else {
                0
            };
            if msb == 0 && lsb == 0 {
                return exact;
            }
            let (decision, laser_fraction) = if lsb == 0 {
                (Decision::Truncate, 0.0)
            } else {
                lsb_decision(policy, src, dst, table)
            };
            Planned {
                plan: TransmissionPlan {
                    decision,
                    word_bits,
                    lsb_mask: low_mask(lsb),
                    msb_mask: msb_mask(width, msb),
                    laser_fraction,
                },
                diagnostic: None,
            }
        }
    }
}
