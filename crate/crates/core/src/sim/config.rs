use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::approx::{AppPreset, ApproxPolicy, VarSet, POLICY_KEYS};
use crate::codec::Scheme;
use crate::kv::{parse_bool, ConfigError, KvTable};
use crate::photonics::{DeviceParams, Modulation, ModulationMode, DEVICE_KEYS};
use crate::topology::{Topology, TopologyKind};
use crate::tuning::{DEFAULT_SIGMA_PV_NM, DEFAULT_TV_SHIFT_NM};

pub const DEFAULT_CLOCK_HZ: f64 = 5e9;

/// Default application whose policy drives approximation.
pub const DEFAULT_APP: &str = "blackscholes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    TruncationOnly,
    FixedLowPower,
    Lorax,
    Arxon,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::TruncationOnly,
        Variant::FixedLowPower,
        Variant::Lorax,
        Variant::Arxon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::TruncationOnly => "truncation_only",
            Variant::FixedLowPower => "fixed_low_power",
            Variant::Lorax => "lorax",
            Variant::Arxon => "arxon",
        }
    }

    /// Whether truncation vs reduced power depends on the destination.
    pub fn distance_aware(self) -> bool {
        matches!(self, Variant::Lorax | Variant::Arxon)
    }

    /// Policy this variant applies on behalf of `app`.
    pub fn effective_policy(self, app: &ApproxPolicy) -> ApproxPolicy {
        let preset = AppPreset::find(&app.app_name);
        let name = format!("{}:{}", self.name(), app.app_name);
        let floats_only = |float_bits: u32, power_reduction: f64| ApproxPolicy {
            app_name: name.clone(),
            float_lsb_bits: float_bits,
            int_msb_bits: 0,
            int_lsb_bits: 0,
            power_reduction,
            approximable_vars: VarSet::All,
        };
        match self {
            Variant::Baseline => ApproxPolicy::exact(&name),
            Variant::TruncationOnly => {
                let bits = match preset {
                    Some(p) => p.truncation_float_bits.unwrap_or(0),
                    None => app.float_lsb_bits,
                };
                floats_only(bits, 1.0)
            }
            Variant::FixedLowPower => floats_only(16, 0.8),
            Variant::Lorax => {
                let (bits, pr) = match preset {
                    Some(p) => p.lorax.unwrap_or((0, 0.0)),
                    None => (app.float_lsb_bits, app.power_reduction),
                };
                floats_only(bits, pr)
            }
            Variant::Arxon => ApproxPolicy {
                app_name: name,
                ..app.clone()
            },
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "baseline" => Ok(Variant::Baseline),
            "truncation_only" | "truncation" => Ok(Variant::TruncationOnly),
            "fixed_low_power" | "flp" => Ok(Variant::FixedLowPower),
            "lorax" => Ok(Variant::Lorax),
            "arxon" => Ok(Variant::Arxon),
            other => Err(format!(
                "unknown variant `{other}` (expected baseline, truncation_only, fixed_low_power, lorax or arxon)"
            )),
        }
    }
}

/// Constant power of the approximation LUTs and control circuitry, mW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticPower {
    pub lut_mw: f64,
    pub circuitry_mw: f64,
}

impl StaticPower {
    pub fn for_topology(kind: TopologyKind) -> Self {
        match kind {
            TopologyKind::SwiftNoc => Self {
                lut_mw: 0.27,
                circuitry_mw: 8.448,
            },
            _ => Self {
                lut_mw: 0.135,
                circuitry_mw: 4.224,
            },
        }
    }

    pub fn total_mw(&self) -> f64 {
        self.lut_mw + self.circuitry_mw
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub topology: Topology,
    pub params: DeviceParams,
    pub modulation: Modulation,
    pub variant: Variant,
    /// Application policy; each variant derives its own from it.
    pub policy: ApproxPolicy,
    pub relaxed_encoding: bool,
    pub relaxed_tuning: bool,
    pub scheme: Scheme,
    pub clock_hz: f64,
    pub seed: u64,
    pub sigma_pv_nm: f64,
    pub tv_shift_nm: f64,
    pub static_power: StaticPower,
}

pub const RUN_KEYS: &[&str] = &[
    "topology",
    "params",
    "modulation",
    "variant",
    "app",
    "relaxed_encoding",
    "relaxed_tuning",
    "scheme",
    "clock_hz",
    "seed",
    "sigma_pv_nm",
    "tv_shift_nm",
    "static_lut_mw",
    "static_circuitry_mw",
];

impl RunConfig {
    pub fn new(kind: TopologyKind, params: DeviceParams, mode: ModulationMode, variant: Variant) -> Self {
        let topology = Topology::preset(kind).unwrap_or_else(Topology::clos);
        Self {
            static_power: StaticPower::for_topology(topology.name),
            topology,
            params,
            modulation: Modulation::new(mode),
            variant,
            policy: ApproxPolicy::preset(DEFAULT_APP).expect("default preset exists"),
            relaxed_encoding: variant == Variant::Arxon,
            relaxed_tuning: false,
            scheme: Scheme::Pctm5b,
            clock_hz: DEFAULT_CLOCK_HZ,
            seed: 0,
            sigma_pv_nm: DEFAULT_SIGMA_PV_NM,
            tv_shift_nm: DEFAULT_TV_SHIFT_NM,
        }
        .normalized()
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        Self {
            variant,
            relaxed_encoding: variant == Variant::Arxon,
            ..self.clone()
        }
        .normalized()
    }

    /// Baseline never approximates, encodes every nibble and tunes every MR.
    pub fn normalized(mut self) -> Self {
        if self.variant == Variant::Baseline {
            self.relaxed_encoding = false;
            self.relaxed_tuning = false;
        }
        self
    }

    pub fn effective_policy(&self) -> ApproxPolicy {
        self.variant.effective_policy(&self.policy)
    }

    pub fn cycle_seconds(&self) -> f64 {
        1.0 / self.clock_hz
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: String| ConfigError::Invalid(e);
        self.topology.validate().map_err(|e| invalid(e.to_string()))?;
        self.params.validate().map_err(|e| invalid(e.to_string()))?;
        self.policy.validate().map_err(|e| invalid(e.to_string()))?;
        if self.topology.gwi_count() > 64 {
            return Err(invalid("at most 64 GWIs fit the 6-bit header fields".into()));
        }
        if !(self.clock_hz > 0.0 && self.clock_hz.is_finite()) {
            return Err(invalid(format!("clock_hz must be positive, got {}", self.clock_hz)));
        }
        if !(self.static_power.lut_mw >= 0.0 && self.static_power.circuitry_mw >= 0.0) {
            return Err(invalid("static power must be non-negative".into()));
        }
        Ok(())
    }

    /// Parse a run file. Besides [`RUN_KEYS`], device keys override the
    /// chosen `params` preset and policy keys override the `app` preset.
    pub fn from_kv_str(text: &str) -> Result<Self, ConfigError> {
        let table = KvTable::parse(text)?;
        let mut allowed: Vec<&str> = RUN_KEYS.to_vec();
        allowed.extend_from_slice(DEVICE_KEYS);
        allowed.extend(POLICY_KEYS.iter().filter(|k| **k != "app_name"));
        table.check_known(&allowed)?;
        Self::from_table(&table)
    }

    pub fn from_table(table: &KvTable) -> Result<Self, ConfigError> {
        let invalid = |key: &str, value: &str, reason: String| ConfigError::InvalidValue {
            key: key.into(),
            value: value.into(),
            reason,
        };
        let kind: TopologyKind = match table.get("topology") {
            Some(v) => v.parse().map_err(|e| invalid("topology", v, e))?,
            None => TopologyKind::Clos,
        };
        let params = match table.get("params") {
            Some(v) => {
                DeviceParams::preset(v).ok_or_else(|| invalid("params", v, "expected standard or aggressive".into()))?
            }
            None => DeviceParams::standard(),
        };
        let params = params.apply_kv(&table.subset(DEVICE_KEYS))?;
        let mode: ModulationMode = match table.get("modulation") {
            Some(v) => v.parse().map_err(|e| invalid("modulation", v, e))?,
            None => ModulationMode::Ook,
        };
        let variant: Variant = match table.get("variant") {
            Some(v) => v.parse().map_err(|e| invalid("variant", v, e))?,
            None => Variant::Arxon,
        };
        let mut cfg = RunConfig::new(kind, params, mode, variant);
        if let Some(app) = table.get("app") {
            cfg.policy = ApproxPolicy::preset(app).unwrap_or_else(|| ApproxPolicy::exact(app));
        }
        cfg.policy = cfg.policy.apply_kv(&table.subset(POLICY_KEYS))?;
        if let Some(v) = table.get("relaxed_encoding") {
            cfg.relaxed_encoding = parse_bool("relaxed_encoding", v)?;
        }
        if let Some(v) = table.get("relaxed_tuning") {
            cfg.relaxed_tuning = parse_bool("relaxed_tuning", v)?;
        }
        if let Some(v) = table.get("scheme") {
            cfg.scheme = v
                .parse()
                .map_err(|e: crate::codec::CodecError| invalid("scheme", v, e.to_string()))?;
        }
        if let Some(v) = table.parse_opt("clock_hz")? {
            cfg.clock_hz = v;
        }
        if let Some(v) = table.parse_opt("seed")? {
            cfg.seed = v;
        }
        if let Some(v) = table.parse_opt("sigma_pv_nm")? {
            cfg.sigma_pv_nm = v;
        }
        if let Some(v) = table.parse_opt("tv_shift_nm")? {
            cfg.tv_shift_nm = v;
        }
        if let Some(v) = table.parse_opt("static_lut_mw")? {
            cfg.static_power.lut_mw = v;
        }
        if let Some(v) = table.parse_opt("static_circuitry_mw")? {
            cfg.static_power.circuitry_mw = v;
        }
        let cfg = cfg.normalized();
        cfg.validate()?;
        Ok(cfg)
    }
}
