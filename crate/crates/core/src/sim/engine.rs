use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::approx::{plan_transmission, Decision, PacketClass, PlanDiagnostic, TransmissionPlan};
use crate::codec::{codec_cost, Gating, NIBBLES_PER_FLIT};
use crate::photonics::{dbm_to_mw, detect_bits, fraction_to_db, wall_plug_power, DeviceParams, Modulation};
use crate::topology::{
    approximated_drive_fraction, link_loss, provisioned_wavelength_dbm, truncation_table, worst_case_loss,
    TruncationTable,
};
use crate::tuning::{generate_variation_map, VariationMap};

use super::config::RunConfig;
use super::packet::{packetize, ValueKind};
use super::report::{Diagnostics, Provisioning, SimReport};
use super::trace::Trace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("trace line {line}: {message}")]
    Input { line: usize, message: String },
}

/// Per-bit treatment of one 64-bit flit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlitMasks {
    pub truncated: u64,
    pub reduced: u64,
    /// Nominal laser fraction for reduced bits.
    pub laser_fraction: f64,
}

impl FlitMasks {
    pub fn exact() -> Self {
        Self {
            truncated: 0,
            reduced: 0,
            laser_fraction: 1.0,
        }
    }

    /// Apply a word plan to the first `slots` words of a flit.
    pub fn from_plan(plan: &TransmissionPlan, slots: usize) -> Self {
        let mut m = Self {
            laser_fraction: plan.laser_fraction,
            ..Self::exact()
        };
        for slot in 0..slots as u32 {
            let shift = slot * plan.word_bits;
            m.truncated |= plan.truncated_mask() << shift;
            m.reduced |= plan.reduced_mask() << shift;
        }
        m
    }

    pub fn gating(&self) -> Gating {
        Gating {
            approximated: self.reduced & !self.truncated,
            truncated: self.truncated,
        }
    }
}

/// Optical state of one source-destination link.
#[derive(Debug, Clone, Copy)]
pub struct LinkContext<'a> {
    pub params: &'a DeviceParams,
    pub modulation: Modulation,
    /// Provisioned full per-wavelength injection power, dBm.
    pub full_dbm: f64,
    pub path_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlitTransmission {
    pub received: u64,
    /// Wall-plug laser power of the data wavelengths, mW.
    pub laser_mw: f64,
    pub full_lanes: u32,
    pub reduced_lanes: u32,
    /// Lanes carrying only truncated bits; their laser is off.
    pub dark_lanes: u32,
}

/// Send one flit: exact bits at full power, reduced bits at the drive
/// fraction through threshold detection, truncated bits not at all.
pub fn transmit_flit(flit: u64, masks: &FlitMasks, ctx: &LinkContext<'_>) -> FlitTransmission {
    let mode = ctx.modulation.mode;
    let bps = mode.bits_per_symbol();
    let lane_bits = crate::approx::low_mask(bps);
    let full_mw = dbm_to_mw(ctx.full_dbm);
    let drive = approximated_drive_fraction(ctx.params, mode, masks.laser_fraction);
    let received_full = ctx.full_dbm - ctx.path_loss;
    let received_reduced = received_full + fraction_to_db(drive);
    let mut out = FlitTransmission {
        received: 0,
        laser_mw: 0.0,
        full_lanes: 0,
        reduced_lanes: 0,
        dark_lanes: 0,
    };
    let mut optical = 0.0;
    for lane in 0..ctx.modulation.n_lambda {
        let shift = lane * bps;
        let lane_mask = lane_bits << shift;
        let truncated = masks.truncated & lane_mask;
        let reduced = masks.reduced & lane_mask & !truncated;
        let exact = lane_mask & !truncated & !reduced;
        if exact != 0 {
            optical += full_mw;
            out.full_lanes += 1;
            out.received |= flit & lane_mask & !truncated;
        } else if reduced != 0 {
            optical += full_mw * drive;
            out.reduced_lanes += 1;
            if drive > 0.0 {
                let symbol = ((flit & reduced) >> shift) as u8;
                let detected = detect_bits(received_reduced, received_full, ctx.params, mode, symbol)
                    .expect("lane symbols fit the modulation");
                out.received |= (u64::from(detected) << shift) & reduced;
            }
        } else {
            out.dark_lanes += 1;
        }
    }
    out.laser_mw = wall_plug_power(optical, ctx.params);
    out
}

/// Energy accounting of one run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    /// Includes the extra codec wavelengths.
    pub laser_energy_j: f64,
    pub codec_laser_energy_j: f64,
    pub tuning_energy_j: f64,
    pub static_energy_j: f64,
    pub payload_bits: u64,
    pub flit_cycles: u64,
    pub codec_cycles: u64,
    pub elapsed_cycles: u64,
    pub encoded_flits: u64,
    pub codec_extra_bits: u64,
    /// Nibbles kept away from the encoder.
    pub gated_nibbles: u64,
    pub gated_mr_cycles: u64,
}

impl EnergyLedger {
    pub fn total_energy_j(&self) -> f64 {
        self.laser_energy_j + self.tuning_energy_j + self.static_energy_j
    }
}

struct Engine<'a> {
    cfg: &'a RunConfig,
    modulation: Modulation,
    topo: crate::topology::Topology,
    table: TruncationTable,
    map: VariationMap,
    full_dbm: f64,
    bank_mrs: u32,
    ledger: EnergyLedger,
    diag: Diagnostics,
    laser_peak_mw: f64,
    next_id: u8,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, SimError> {
        cfg.validate().map_err(|e| SimError::Config(e.to_string()))?;
        let modulation = cfg.modulation;
        let topo = cfg.topology.for_modulation(&modulation);
        let policy = cfg.effective_policy();
        let full_dbm = provisioned_wavelength_dbm(&cfg.topology, &cfg.params, &modulation);
        let table = if cfg.variant.distance_aware() {
            truncation_table(&cfg.topology, &cfg.params, &modulation, policy.laser_fraction())
                .map_err(|e| SimError::Config(e.to_string()))?
        } else {
            TruncationTable::empty(topo.gwi_count(), full_dbm)
        };
        let map = generate_variation_map(&topo, cfg.sigma_pv_nm, cfg.tv_shift_nm, cfg.seed)
            .map_err(|e| SimError::Config(e.to_string()))?;
        let bps = modulation.bits_per_symbol();
        let codec_lanes = (NIBBLES_PER_FLIT as u32 * (cfg.scheme.code_width() - 4)).div_ceil(bps);
        Ok(Self {
            cfg,
            modulation,
            topo,
            table,
            map,
            full_dbm,
            bank_mrs: modulation.n_lambda + codec_lanes,
            ledger: EnergyLedger::default(),
            diag: Diagnostics::default(),
            laser_peak_mw: 0.0,
            next_id: 0,
        })
    }

    fn send_flit(&mut self, flit: u64, masks: &FlitMasks, src: usize, dst: usize, path_loss: f64) {
        let cfg = self.cfg;
        let ctx = LinkContext {
            params: &cfg.params,
            modulation: self.modulation,
            full_dbm: self.full_dbm,
            path_loss,
        };
        let tx = transmit_flit(flit, masks, &ctx);
        let gating = if cfg.relaxed_encoding {
            masks.gating()
        } else {
            Gating::none()
        };
        let cost = codec_cost(cfg.scheme, &gating);
        let codec_lanes = cost.extra_bits.div_ceil(self.modulation.bits_per_symbol());
        let codec_mw = wall_plug_power(f64::from(codec_lanes) * dbm_to_mw(self.full_dbm), &cfg.params);
        let gated_mrs = if cfg.relaxed_tuning { tx.dark_lanes } else { 0 };
        let active = f64::from(self.bank_mrs - gated_mrs);
        let tuning_mw = active * (self.map.shift(src) + self.map.shift(dst)) * cfg.params.tuning_efficiency;

        let dt = cfg.cycle_seconds();
        let laser_mw = tx.laser_mw + codec_mw;
        let l = &mut self.ledger;
        l.laser_energy_j += laser_mw * 1e-3 * dt;
        l.codec_laser_energy_j += codec_mw * 1e-3 * dt;
        l.tuning_energy_j += tuning_mw * 1e-3 * dt;
        l.flit_cycles += 1;
        l.codec_cycles += u64::from(cost.latency_cycles);
        l.elapsed_cycles += 1 + u64::from(cost.latency_cycles);
        l.codec_extra_bits += u64::from(cost.extra_bits);
        l.gated_nibbles += NIBBLES_PER_FLIT as u64 - u64::from(cost.encoded_nibbles);
        l.gated_mr_cycles += 2 * u64::from(gated_mrs);
        if cost.encoded_nibbles > 0 {
            l.encoded_flits += 1;
        }
        self.laser_peak_mw = self.laser_peak_mw.max(laser_mw);

        let approx_bits = masks.truncated | masks.reduced;
        let diff = tx.received ^ flit;
        self.diag.exact_bit_errors += u64::from((diff & !approx_bits).count_ones());
        self.diag.approximated_bits_lost += u64::from((diff & approx_bits).count_ones());
        self.diag.truncated_bits += u64::from(masks.truncated.count_ones());
        self.diag.reduced_power_bits += u64::from((masks.reduced & !masks.truncated).count_ones());
    }

    fn record(&mut self, line: usize, r: &super::trace::TraceRecord) -> Result<(), SimError> {
        let input = |message: String| SimError::Input { line, message };
        let n = self.topo.gwi_count();
        if r.src >= n || r.dst >= n {
            return Err(input(format!("node ids {} -> {} outside 0..{n}", r.src, r.dst)));
        }
        let policy = self.cfg.effective_policy();
        let width = r.kind.word_bits();
        let class = match (r.kind, r.approximable) {
            (ValueKind::F32 | ValueKind::F64, true) => PacketClass::Float(r.kind.precision().expect("float kind")),
            (ValueKind::I32 | ValueKind::I64, true) => PacketClass::Int {
                width,
                var_id: r.var_id.as_deref(),
            },
            _ => PacketClass::Other { width },
        };
        let planned = plan_transmission(&policy, class, r.src, r.dst, &self.table);
        if planned.diagnostic == Some(PlanDiagnostic::UnlistedVariable) {
            self.diag.unlisted_variables += 1;
        }
        let plan = planned.plan;
        let path_loss = link_loss(&self.topo, &self.cfg.params, r.src, r.dst)
            .map_err(|e| input(e.to_string()))?
            .total_loss;
        let packets =
            packetize(r.src, r.dst, r.kind, &r.values, &plan, &mut self.next_id).map_err(|e| input(e.to_string()))?;
        self.ledger.payload_bits += r.values.len() as u64 * u64::from(width);
        self.diag.records += 1;
        for p in packets {
            self.diag.packets += 1;
            match plan.decision {
                Decision::Exact => self.diag.exact_packets += 1,
                Decision::ReducedPower => self.diag.reduced_power_packets += 1,
                Decision::Truncate => self.diag.truncated_packets += 1,
            }
            if plan.msb_mask != 0 {
                self.diag.precondition_violations += p.words.iter().filter(|w| *w & plan.msb_mask != 0).count() as u64;
            }
            let header = p.header.encode().map_err(|e| input(e.to_string()))?;
            self.send_flit(header, &FlitMasks::exact(), r.src, r.dst, path_loss);
            let per_flit = r.kind.per_flit();
            for (i, &flit) in p.body.iter().enumerate() {
                let slots = (p.words.len() - i * per_flit).min(per_flit);
                self.send_flit(flit, &FlitMasks::from_plan(&plan, slots), r.src, r.dst, path_loss);
            }
        }
        Ok(())
    }

    fn finish(mut self, trace: &Trace) -> SimReport {
        let cfg = self.cfg;
        let dt = cfg.cycle_seconds();
        self.ledger.static_energy_j = cfg.static_power.total_mw() * 1e-3 * dt * self.ledger.elapsed_cycles as f64;
        self.diag.variation_map_rejections = self.map.rejections;
        let l = self.ledger;
        let per_cycle_mw = |energy: f64, cycles: u64| {
            if cycles == 0 {
                0.0
            } else {
                energy / (cycles as f64 * dt) * 1e3
            }
        };
        let total = l.total_energy_j();
        let breakdown = [
            ("laser_mw", per_cycle_mw(l.laser_energy_j, l.elapsed_cycles)),
            ("static_mw", per_cycle_mw(l.static_energy_j, l.elapsed_cycles)),
            ("tuning_mw", per_cycle_mw(l.tuning_energy_j, l.elapsed_cycles)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let config_json = serde_json::to_string(cfg).expect("config serializes");
        let topo_json = serde_json::to_string(&cfg.topology).expect("topology serializes");
        SimReport {
            label: format!("{}-{}", cfg.variant.name(), cfg.modulation.mode.label()),
            variant: cfg.variant,
            config: cfg.clone(),
            effective_policy: cfg.effective_policy(),
            trace_sha256: trace.sha256.clone(),
            config_sha256: hex::encode(Sha256::digest(config_json.as_bytes())),
            topology_sha256: hex::encode(Sha256::digest(topo_json.as_bytes())),
            provisioning: Provisioning {
                full_wavelength_dbm: self.full_dbm,
                worst_case_loss_db: worst_case_loss(&self.topo, &cfg.params),
                n_lambda: self.modulation.n_lambda,
                bank_mrs: self.bank_mrs,
                truncation_pairs: self.table.per_src.iter().map(|s| s.len()).sum(),
            },
            variation_map: self.map,
            ledger: l,
            total_energy_j: total,
            epb_pj_per_bit: (l.payload_bits > 0).then(|| total / l.payload_bits as f64 * 1e12),
            laser_mw_avg: per_cycle_mw(l.laser_energy_j, l.flit_cycles),
            laser_mw_peak: self.laser_peak_mw,
            tuning_mw_avg: per_cycle_mw(l.tuning_energy_j, l.flit_cycles),
            breakdown,
            diagnostics: self.diag,
        }
    }
}

/// Replay `trace` under `cfg`.
pub fn run(cfg: &RunConfig, trace: &Trace) -> Result<SimReport, SimError> {
    let mut engine = Engine::new(cfg)?;
    for (line, record) in &trace.records {
        engine.record(*line, record)?;
    }
    Ok(engine.finish(trace))
}
