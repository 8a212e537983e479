//! Microring resonance drift under process and thermal variation, and the
//! thermo-optic power spent pulling rings back onto their wavelengths.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::TransmissionPlan;
use crate::photonics::DeviceParams;
use crate::topology::Topology;

/// Thermo-optic tuning range of a microring, in nm.
pub const TUNING_RANGE_NM: f64 = 6.6;
pub const DEFAULT_TV_SHIFT_NM: f64 = 6.5;
pub const DEFAULT_SIGMA_PV_NM: f64 = 0.03;

const MAX_DRAWS_PER_GWI: u32 = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TuningError {
    #[error("thermal shift {tv} nm exceeds the {TUNING_RANGE_NM} nm tuning range")]
    ThermalOutOfRange { tv: f64 },
    #[error("invalid {what}: {value}")]
    Invalid { what: &'static str, value: f64 },
    #[error("no correctable PV sample for GWI {gwi} after {MAX_DRAWS_PER_GWI} draws")]
    Exhausted { gwi: usize },
}

/// Per-GWI process-variation shifts plus a uniform thermal shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationMap {
    pub seed: u64,
    pub sigma_pv: f64,
    pub tv_shift: f64,
    pub per_gwi_pv_shift: Vec<f64>,
    /// Samples discarded because they fell outside the tuning range.
    pub rejections: u64,
}

impl VariationMap {
    /// Resonance shift (nm) every MR of `gwi` must correct.
    pub fn shift(&self, gwi: usize) -> f64 {
        self.per_gwi_pv_shift[gwi].abs() + self.tv_shift
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("gwi,pv_shift_nm,tv_shift_nm,total_shift_nm\n");
        for (i, pv) in self.per_gwi_pv_shift.iter().enumerate() {
            out.push_str(&format!("{i},{pv},{},{}\n", self.tv_shift, self.shift(i)));
        }
        out
    }
}

pub fn generate_variation_map(
    topo: &Topology,
    sigma_pv: f64,
    tv_shift: f64,
    seed: u64,
) -> Result<VariationMap, TuningError> {
    if !(sigma_pv >= 0.0 && sigma_pv.is_finite()) {
        return Err(TuningError::Invalid {
            what: "sigma_pv",
            value: sigma_pv,
        });
    }
    if tv_shift.is_nan() || tv_shift < 0.0 {
        return Err(TuningError::Invalid {
            what: "tv_shift",
            value: tv_shift,
        });
    }
    if tv_shift > TUNING_RANGE_NM {
        return Err(TuningError::ThermalOutOfRange { tv: tv_shift });
    }
    let normal = Normal::new(0.0, sigma_pv).map_err(|_| TuningError::Invalid {
        what: "sigma_pv",
        value: sigma_pv,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejections = 0;
    let mut shifts = Vec::with_capacity(topo.gwi_count());
    for gwi in 0..topo.gwi_count() {
        let mut draws = 0;
        let pv = loop {
            let s: f64 = normal.sample(&mut rng);
            if s.abs() + tv_shift <= TUNING_RANGE_NM {
                break s;
            }
            rejections += 1;
            draws += 1;
            if draws >= MAX_DRAWS_PER_GWI {
                return Err(TuningError::Exhausted { gwi });
            }
        };
        shifts.push(pv);
    }
    Ok(VariationMap {
        seed,
        sigma_pv,
        tv_shift,
        per_gwi_pv_shift: shifts,
        rejections,
    })
}

/// Index of lane `lane` in the MR bank of `gwi`.
pub fn mr_index(topo: &Topology, gwi: usize, lane: usize) -> usize {
    gwi * topo.mrs_per_bank as usize + lane
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningState {
    pub per_mr_shift: Vec<f64>,
    pub per_mr_power: Vec<f64>,
    pub gated_mrs: BTreeSet<usize>,
}

impl TuningState {
    pub fn new(map: &VariationMap, topo: &Topology, params: &DeviceParams, gated: &BTreeSet<usize>) -> Self {
        let bank = topo.mrs_per_bank as usize;
        let count = topo.gwi_count() * bank;
        let per_mr_shift: Vec<f64> = (0..count).map(|mr| map.shift(mr / bank)).collect();
        let per_mr_power = per_mr_shift
            .iter()
            .enumerate()
            .map(|(mr, s)| {
                if gated.contains(&mr) {
                    0.0
                } else {
                    s * params.tuning_efficiency
                }
            })
            .collect();
        Self {
            per_mr_shift,
            per_mr_power,
            gated_mrs: gated.clone(),
        }
    }

    pub fn total(&self) -> f64 {
        self.per_mr_power.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningPower {
    pub per_mr: Vec<f64>,
    pub total: f64,
}

pub fn tuning_power(
    map: &VariationMap,
    topo: &Topology,
    params: &DeviceParams,
    gated: &BTreeSet<usize>,
) -> TuningPower {
    let state = TuningState::new(map, topo, params, gated);
    let total = state.total();
    TuningPower {
        per_mr: state.per_mr_power,
        total,
    }
}

/// Which MRs carry which bits of a word: bit `i` rides on MR
/// `first_mr + i / bits_per_mr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavelengthMap {
    pub first_mr: usize,
    pub bits_per_mr: u32,
}

/// MRs whose every bit is truncated under `plan`.
pub fn gate_truncated_mrs(plan: &TransmissionPlan, map: WavelengthMap) -> BTreeSet<usize> {
    let truncated = plan.truncated_mask();
    let per = map.bits_per_mr.max(1);
    let mut gated = BTreeSet::new();
    for lane in 0..plan.word_bits.div_ceil(per) {
        let lo = lane * per;
        let hi = (lo + per).min(plan.word_bits);
        let lane_mask = crate::approx::low_mask(hi) & !crate::approx::low_mask(lo);
        if truncated & lane_mask == lane_mask {
            gated.insert(map.first_mr + lane as usize);
        }
    }
    gated
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::Decision;
    use proptest::prelude::*;

    fn plan(decision: Decision, lsb: u64, msb: u64, bits: u32) -> TransmissionPlan {
        TransmissionPlan {
            decision,
            word_bits: bits,
            lsb_mask: lsb,
            msb_mask: msb,
            laser_fraction: if decision == Decision::Truncate { 0.0 } else { 0.2 },
        }
    }

    fn ook() -> WavelengthMap {
        WavelengthMap {
            first_mr: 0,
            bits_per_mr: 1,
        }
    }

    #[test]
    fn zero_sigma_is_pure_thermal() {
        let topo = Topology::clos();
        let m = generate_variation_map(&topo, 0.0, 6.5, 3).unwrap();
        assert!(m.per_gwi_pv_shift.iter().all(|&s| s == 0.0));
        assert!((0..8).all(|g| m.shift(g) == 6.5));
    }

    #[test]
    fn maps_are_reproducible() {
        let topo = Topology::swiftnoc();
        let a = generate_variation_map(&topo, 0.03, 6.5, 11).unwrap();
        let b = generate_variation_map(&topo, 0.03, 6.5, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_variation_map(&topo, 0.03, 6.5, 12).unwrap();
        assert_ne!(a.per_gwi_pv_shift, c.per_gwi_pv_shift);
    }

    #[test]
    fn hundred_maps_stay_in_range() {
        let topo = Topology::clos();
        let mut rejections = 0;
        for seed in 0..100 {
            let m = generate_variation_map(&topo, DEFAULT_SIGMA_PV_NM, DEFAULT_TV_SHIFT_NM, seed).unwrap();
            assert!((0..8).all(|g| m.shift(g) <= TUNING_RANGE_NM));
            rejections += m.rejections;
        }
        // 3.3 sigma of headroom: a handful of rejections at most.
        assert!(rejections < 10, "{rejections}");
    }

    #[test]
    fn thermal_beyond_range_is_rejected() {
        let topo = Topology::clos();
        assert!(matches!(
            generate_variation_map(&topo, 0.0, 6.7, 0),
            Err(TuningError::ThermalOutOfRange { .. })
        ));
        assert!(generate_variation_map(&topo, -1.0, 6.5, 0).is_err());
    }

    #[test]
    fn power_examples() {
        // Two GWIs; the second bank is gated so only the first counts.
        let topo = Topology::custom(1.0, vec![0.2, 0.8], 1, 0, 2).unwrap();
        let mut map = generate_variation_map(&topo, 0.0, 1.0, 0).unwrap();
        let p = tuning_power(&map, &topo, &DeviceParams::standard(), &BTreeSet::from([1]));
        assert!((p.total - 6.67).abs() < 1e-12);
        assert_eq!(p.per_mr, vec![6.67, 0.0]);

        let topo = Topology::custom(1.0, vec![0.2, 0.8], 64, 0, 2).unwrap();
        map.tv_shift = 6.5;
        let second: BTreeSet<usize> = (64..128).collect();
        let p = tuning_power(&map, &topo, &DeviceParams::aggressive(), &second);
        assert!((p.total - 99.84).abs() < 1e-9);
        let all: BTreeSet<usize> = (0..128).collect();
        assert_eq!(tuning_power(&map, &topo, &DeviceParams::aggressive(), &all).total, 0.0);
    }

    #[test]
    fn gating_examples() {
        assert!(gate_truncated_mrs(&TransmissionPlan::exact(64), ook()).is_empty());
        let t = plan(Decision::Truncate, 0, 0xFFFF_FF00, 32);
        assert_eq!(gate_truncated_mrs(&t, ook()).len(), 24);
        let r = plan(Decision::ReducedPower, 0xFFFF_FFFF, 0, 64);
        assert!(gate_truncated_mrs(&r, ook()).is_empty());
        let pam4 = WavelengthMap {
            first_mr: 10,
            bits_per_mr: 2,
        };
        let g = gate_truncated_mrs(&t, pam4);
        assert_eq!(g.len(), 12);
        assert_eq!(g.first(), Some(&14));
    }

    proptest! {
        #[test]
        fn gating_never_touches_live_bits(lsb_bits in 0u32..=32, msb_bits in 0u32..=32, trunc in any::<bool>(), bpm in 1u32..=2) {
            let lsb = crate::approx::low_mask(lsb_bits);
            let msb = !crate::approx::low_mask(64 - msb_bits);
            let decision = if trunc { Decision::Truncate } else { Decision::ReducedPower };
            let p = plan(decision, lsb, msb, 64);
            let gated = gate_truncated_mrs(&p, WavelengthMap { first_mr: 0, bits_per_mr: bpm });
            for mr in gated {
                let lane = crate::approx::low_mask(bpm) << (mr as u32 * bpm);
                prop_assert_eq!(p.truncated_mask() & lane, lane);
            }
            let ook_count = gate_truncated_mrs(&p, ook()).len();
            if bpm == 2 && lsb_bits % 2 == 0 && msb_bits % 2 == 0 {
                let pam = gate_truncated_mrs(&p, WavelengthMap { first_mr: 0, bits_per_mr: 2 }).len();
                prop_assert_eq!(pam, ook_count.div_ceil(2));
            }
        }

        #[test]
        fn gating_strictly_saves(seed in any::<u64>(), mr in 0usize..512) {
            let topo = Topology::clos();
            let params = DeviceParams::standard();
            let map = generate_variation_map(&topo, 0.03, 6.5, seed).unwrap();
            let full = tuning_power(&map, &topo, &params, &BTreeSet::new()).total;
            let part = tuning_power(&map, &topo, &params, &BTreeSet::from([mr])).total;
            prop_assert!(part < full);
        }

        #[test]
        fn linear_in_efficiency(seed in any::<u64>(), c in 0.1f64..10.0) {
            let topo = Topology::clos();
            let mut params = DeviceParams::standard();
            let map = generate_variation_map(&topo, 0.03, 6.5, seed).unwrap();
            let a = tuning_power(&map, &topo, &params, &BTreeSet::new()).total;
            params.tuning_efficiency *= c;
            let b = tuning_power(&map, &topo, &params, &BTreeSet::new()).total;
            prop_assert!((b - a * c).abs() < 1e-9 * b.max(1.0));
        }
    }
}
