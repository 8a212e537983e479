//! Optical device parameters, link-budget arithmetic and detection.
//!
//! Power arithmetic stays in the dB domain; [`dbm_to_mw`] and [`mw_to_dbm`]
//! are only used where energy is accumulated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kv::{ConfigError, KvTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhotonicsError {
    #[error("symbol {symbol} is not valid for {mode:?} (max {max})")]
    InvalidSymbol { symbol: u8, mode: ModulationMode, max: u8 },
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Ratio in dB for a linear power fraction.
pub fn fraction_to_db(fraction: f64) -> f64 {
    10.0 * fraction.log10()
}

/// Loss, power and sensitivity constants for one technology point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Preset this set was derived from, if any.
    pub name: String,
    /// dBm
    pub receiver_sensitivity: f64,
    /// dB per MR passed on the through port
    pub mr_through_loss: f64,
    /// dB, once at the destination drop
    pub mr_drop_loss: f64,
    /// dB/cm
    pub propagation_loss: f64,
    /// dB per 90° bend
    pub bending_loss: f64,
    /// mW/nm of resonance shift
    pub tuning_efficiency: f64,
    /// fraction in (0, 1]
    pub laser_wall_plug_efficiency: f64,
    /// dB, source-side modulator penalty
    pub modulation_insertion_loss: f64,
    /// dB, budget penalty applied only under PAM4
    pub pam4_signaling_loss: f64,
    /// linear multiplier on approximated-signal power under PAM4
    pub pam4_power_scale: f64,
}

/// Config keys, in the same order as the struct fields.
pub const DEVICE_KEYS: &[&str] = &[
    "receiver_sensitivity_dbm",
    "mr_through_loss_db",
    "mr_drop_loss_db",
    "propagation_loss_db_per_cm",
    "bending_loss_db_per_90deg",
    "tuning_efficiency_mw_per_nm",
    "laser_wall_plug_efficiency",
    "modulation_insertion_loss_db",
    "pam4_signaling_loss_db",
    "pam4_power_scale",
];

impl DeviceParams {
    /// Values from current prototyping efforts.
    pub fn standard() -> Self {
        Self {
            name: "standard".into(),
            receiver_sensitivity: -20.0,
            mr_through_loss: 0.02,
            mr_drop_loss: 0.7,
            propagation_loss: 1.0,
            bending_loss: 0.01,
            tuning_efficiency: 6.67,
            laser_wall_plug_efficiency: 0.10,
            modulation_insertion_loss: 0.0,
            pam4_signaling_loss: 5.8,
            pam4_power_scale: 1.5,
        }
    }

    /// Projected future device values.
    pub fn aggressive() -> Self {
        Self {
            name: "aggressive".into(),
            receiver_sensitivity: -23.4,
            mr_through_loss: 0.02,
            mr_drop_loss: 0.5,
            propagation_loss: 0.25,
            bending_loss: 0.005,
            tuning_efficiency: 0.240,
            ..Self::standard()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "standard" => Some(Self::standard()),
            "aggressive" => Some(Self::aggressive()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), PhotonicsError> {
        let losses = [
            ("mr_through_loss", self.mr_through_loss),
            ("mr_drop_loss", self.mr_drop_loss),
            ("propagation_loss", self.propagation_loss),
            ("bending_loss", self.bending_loss),
            ("modulation_insertion_loss", self.modulation_insertion_loss),
            ("pam4_signaling_loss", self.pam4_signaling_loss),
            ("tuning_efficiency", self.tuning_efficiency),
        ];
        for (name, v) in losses {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PhotonicsError::InvalidParams(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        let eff = self.laser_wall_plug_efficiency;
        if !(eff > 0.0 && eff <= 1.0) {
            return Err(PhotonicsError::InvalidParams(format!(
                "laser_wall_plug_efficiency must be in (0, 1], got {eff}"
            )));
        }
        if !self.receiver_sensitivity.is_finite() {
            return Err(PhotonicsError::InvalidParams(
                "receiver_sensitivity must be finite".into(),
            ));
        }
        if !(self.pam4_power_scale.is_finite() && self.pam4_power_scale > 0.0) {
            return Err(PhotonicsError::InvalidParams("pam4_power_scale must be > 0".into()));
        }
        Ok(())
    }

    /// Overlay any device keys present in `table` onto `self`.
    pub fn apply_kv(mut self, table: &KvTable) -> Result<Self, ConfigError> {
        let fields: [&mut f64; 10] = [
            &mut self.receiver_sensitivity,
            &mut self.mr_through_loss,
            &mut self.mr_drop_loss,
            &mut self.propagation_loss,
            &mut self.bending_loss,
            &mut self.tuning_efficiency,
            &mut self.laser_wall_plug_efficiency,
            &mut self.modulation_insertion_loss,
            &mut self.pam4_signaling_loss,
            &mut self.pam4_power_scale,
        ];
        let mut touched = false;
        for (key, field) in DEVICE_KEYS.iter().zip(fields) {
            if let Some(v) = table.parse_opt::<f64>(key)? {
                *field = v;
                touched = true;
            }
        }
        if touched && !self.name.ends_with("+overrides") {
            self.name.push_str("+overrides");
        }
        self.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(self)
    }

    /// Load a parameter file: an optional `preset = standard|aggressive`
    /// line followed by per-field overrides.
    pub fn from_kv_str(text: &str) -> Result<Self, ConfigError> {
        let table = KvTable::parse(text)?;
        let mut allowed = DEVICE_KEYS.to_vec();
        allowed.push("preset");
        table.check_known(&allowed)?;
        let base = match table.get("preset") {
            None => Self::standard(),
            Some(p) => Self::preset(p).ok_or_else(|| ConfigError::InvalidValue {
                key: "preset".into(),
                value: p.into(),
                reason: "expected standard or aggressive".into(),
            })?,
        };
        base.apply_kv(&table)
    }

    pub fn to_kv_string(&self) -> String {
        let values = [
            self.receiver_sensitivity,
            self.mr_through_loss,
            self.mr_drop_loss,
            self.propagation_loss,
            self.bending_loss,
            self.tuning_efficiency,
            self.laser_wall_plug_efficiency,
            self.modulation_insertion_loss,
            self.pam4_signaling_loss,
            self.pam4_power_scale,
        ];
        DEVICE_KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModulationMode {
    Ook,
    Pam4,
}

impl ModulationMode {
    pub fn bits_per_symbol(self) -> u32 {
        match self {
            ModulationMode::Ook => 1,
            ModulationMode::Pam4 => 2,
        }
    }

    pub fn max_symbol(self) -> u8 {
        (1u8 << self.bits_per_symbol()) - 1
    }

    pub fn label(self) -> &'static str {
        match self {
            ModulationMode::Ook => "OOK",
            ModulationMode::Pam4 => "PAM4",
        }
    }
}

impl std::str::FromStr for ModulationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ook" => Ok(Self::Ook),
            "pam4" => Ok(Self::Pam4),
            other => Err(format!("unknown modulation `{other}` (expected ook or pam4)")),
        }
    }
}

/// Modulation format plus wavelength count of the link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub mode: ModulationMode,
    pub n_lambda: u32,
}

/// Payload bits moved per cycle on one waveguide.
pub const FLIT_BITS: u32 = 64;

impl Modulation {
    pub fn ook() -> Self {
        Self::new(ModulationMode::Ook)
    }

    pub fn pam4() -> Self {
        Self::new(ModulationMode::Pam4)
    }

    /// Default wavelength count keeping one 64-bit flit per cycle.
    pub fn new(mode: ModulationMode) -> Self {
        Self {
            mode,
            n_lambda: FLIT_BITS / mode.bits_per_symbol(),
        }
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.mode.bits_per_symbol()
    }
}

/// A solved link budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// Total injected laser power for all channels, dBm.
    pub p_laser: f64,
    pub s_detector: f64,
    /// Accumulated path loss including any modulation-format penalty, dB.
    pub p_phot_loss: f64,
    pub n_lambda: u32,
}

impl LinkBudget {
    pub fn solve(params: &DeviceParams, path_loss: f64, n_lambda: u32, mode: ModulationMode) -> Self {
        assert!(n_lambda >= 1, "n_lambda must be >= 1");
        let p_phot_loss = effective_loss(params, path_loss, mode);
        let p_laser = params.receiver_sensitivity + p_phot_loss + 10.0 * f64::from(n_lambda).log10();
        Self {
            p_laser,
            s_detector: params.receiver_sensitivity,
            p_phot_loss,
            n_lambda,
        }
    }

    /// Injected power on each wavelength, dBm.
    pub fn per_wavelength_dbm(&self) -> f64 {
        self.p_laser - 10.0 * f64::from(self.n_lambda).log10()
    }

    pub fn margin_db(&self) -> f64 {
        self.p_laser - self.s_detector - self.p_phot_loss - 10.0 * f64::from(self.n_lambda).log10()
    }
}

fn effective_loss(params: &DeviceParams, path_loss: f64, mode: ModulationMode) -> f64 {
    match mode {
        ModulationMode::Ook => path_loss,
        ModulationMode::Pam4 => path_loss + params.pam4_signaling_loss,
    }
}

/// Minimal total laser power (dBm) meeting the link budget with equality.
pub fn solve_laser_power(params: &DeviceParams, path_loss: f64, n_lambda: u32, mode: ModulationMode) -> f64 {
    LinkBudget::solve(params, path_loss, n_lambda, mode).p_laser
}

pub fn received_power(p_injected_dbm: f64, path_loss_db: f64) -> f64 {
    p_injected_dbm - path_loss_db
}

/// Threshold detection of one symbol.
///
/// `p_received` is the received power of the full-scale (highest) level of
/// this transmission; `p_full_scale` is the full-scale level the same path
/// delivers at full laser power, which the receiver's decision thresholds
/// are calibrated to. OOK returns 1 only for a transmitted 1 received at or
/// above sensitivity. PAM4 levels are evenly spaced in linear power; the
/// received amplitude of symbol `s` is `s/3` of `p_received`, quantized
/// against midpoints of the nominal levels, and reads 0 when below
/// sensitivity.
pub fn detect_bits(
    p_received: f64,
    p_full_scale: f64,
    params: &DeviceParams,
    mode: ModulationMode,
    transmitted_symbol: u8,
) -> Result<u8, PhotonicsError> {
    let max = mode.max_symbol();
    if transmitted_symbol > max {
        return Err(PhotonicsError::InvalidSymbol {
            symbol: transmitted_symbol,
            mode,
            max,
        });
    }
    if transmitted_symbol == 0 {
        return Ok(0);
    }
    match mode {
        ModulationMode::Ook => Ok(u8::from(p_received >= params.receiver_sensitivity)),
        ModulationMode::Pam4 => {
            let levels = f64::from(max);
            let amplitude_mw = dbm_to_mw(p_received) * f64::from(transmitted_symbol) / levels;
            if amplitude_mw < dbm_to_mw(params.receiver_sensitivity) {
                return Ok(0);
            }
            let nominal_mw = dbm_to_mw(p_full_scale);
            let detected = (1..=transmitted_symbol)
                .filter(|&k| amplitude_mw >= (f64::from(k) - 0.5) / levels * nominal_mw)
                .count();
            Ok(detected as u8)
        }
    }
}

/// Electrical power drawn to emit `p_optical_mw`.
pub fn wall_plug_power(p_optical_mw: f64, params: &DeviceParams) -> f64 {
    p_optical_mw / params.laser_wall_plug_efficiency
}
