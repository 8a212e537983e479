//! Waveguide geometry for the Clos and SwiftNoC layouts and per-path loss.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::photonics::{fraction_to_db, received_power, solve_laser_power, DeviceParams, Modulation, ModulationMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("GWI index {index} out of range (topology has {count})")]
    BadIndex { index: usize, count: usize },
    #[error("source and destination are the same GWI ({0})")]
    SameEndpoint(usize),
    #[error("destination GWI {dst} is upstream of source GWI {src}")]
    Upstream { src: usize, dst: usize },
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("{what} must be in {range}, got {value}")]
    OutOfRange {
        what: &'static str,
        range: &'static str,
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Clos,
    SwiftNoc,
    Custom,
}

impl std::str::FromStr for TopologyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "clos" => Ok(Self::Clos),
            "swiftnoc" => Ok(Self::SwiftNoc),
            other => Err(format!("unknown topology `{other}` (expected clos or swiftnoc)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub name: TopologyKind,
    /// cm
    pub waveguide_length: f64,
    /// cm offset of each GWI's MR bank, strictly increasing
    pub gwi_positions: Vec<f64>,
    pub mrs_per_bank: u32,
    pub bends_per_path: u32,
    pub core_count: u32,
}

fn evenly_spaced(first: f64, last: f64, count: usize) -> Vec<f64> {
    let step = (last - first) / (count - 1) as f64;
    (0..count).map(|i| first + step * i as f64).collect()
}

impl Topology {
    /// 8-ary 3-stage Clos, one GWI per cluster.
    pub fn clos() -> Self {
        Self {
            name: TopologyKind::Clos,
            waveguide_length: 4.5,
            gwi_positions: evenly_spaced(1.0, 3.8, 8),
            mrs_per_bank: 64,
            bends_per_path: 0,
            core_count: 64,
        }
    }

    pub fn swiftnoc() -> Self {
        Self {
            name: TopologyKind::SwiftNoc,
            waveguide_length: 8.3,
            gwi_positions: evenly_spaced(1.0, 7.8, 16),
            mrs_per_bank: 64,
            bends_per_path: 0,
            core_count: 64,
        }
    }

    pub fn preset(kind: TopologyKind) -> Option<Self> {
        match kind {
            TopologyKind::Clos => Some(Self::clos()),
            TopologyKind::SwiftNoc => Some(Self::swiftnoc()),
            TopologyKind::Custom => None,
        }
    }

    pub fn custom(
        waveguide_length: f64,
        gwi_positions: Vec<f64>,
        mrs_per_bank: u32,
        bends_per_path: u32,
        core_count: u32,
    ) -> Result<Self, TopologyError> {
        let topo = Self {
            name: TopologyKind::Custom,
            waveguide_length,
            gwi_positions,
            mrs_per_bank,
            bends_per_path,
            core_count,
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.gwi_positions.len() < 2 {
            return Err(TopologyError::Geometry("need at least two GWIs".into()));
        }
        if self.mrs_per_bank == 0 {
            return Err(TopologyError::Geometry("mrs_per_bank must be >= 1".into()));
        }
        if !self
            .gwi_positions
            .iter()
            .all(|&p| p > 0.0 && p <= self.waveguide_length)
        {
            return Err(TopologyError::Geometry(
                "GWI positions must lie in (0, waveguide_length]".into(),
            ));
        }
        if !self.gwi_positions.windows(2).all(|w| w[0] < w[1]) {
            return Err(TopologyError::Geometry(
                "GWI positions must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn gwi_count(&self) -> usize {
        self.gwi_positions.len()
    }

    /// Copy with one MR per wavelength of `modulation` in every bank.
    pub fn for_modulation(&self, modulation: &Modulation) -> Self {
        Self {
            mrs_per_bank: modulation.n_lambda,
            ..self.clone()
        }
    }

    fn check_index(&self, index: usize) -> Result<(), TopologyError> {
        if index >= self.gwi_count() {
            return Err(TopologyError::BadIndex {
                index,
                count: self.gwi_count(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub propagation: f64,
    pub through: f64,
    pub drop: f64,
    pub bend: f64,
    pub modulation: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.propagation + self.through + self.drop + self.bend + self.modulation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    pub src_gwi: usize,
    pub dst_gwi: usize,
    pub total_loss: f64,
    pub breakdown: LossBreakdown,
}

/// Loss for a destination `distance` cm from the source with
/// `intervening` banks passed on the way.
fn accumulate(topo: &Topology, params: &DeviceParams, distance: f64, intervening: usize) -> LossBreakdown {
    LossBreakdown {
        propagation: params.propagation_loss * distance,
        through: params.mr_through_loss * f64::from(topo.mrs_per_bank) * intervening as f64,
        drop: params.mr_drop_loss,
        bend: params.bending_loss * f64::from(topo.bends_per_path),
        modulation: params.modulation_insertion_loss,
    }
}

/// Optical loss from `src` to a downstream `dst` on a single-writer waveguide.
pub fn path_loss(topo: &Topology, params: &DeviceParams, src: usize, dst: usize) -> Result<PathLoss, TopologyError> {
    topo.check_index(src)?;
    topo.check_index(dst)?;
    if src == dst {
        return Err(TopologyError::SameEndpoint(src));
    }
    if dst < src {
        return Err(TopologyError::Upstream { src, dst });
    }
    let distance = topo.gwi_positions[dst] - topo.gwi_positions[src];
    let breakdown = accumulate(topo, params, distance, dst - src - 1);
    Ok(PathLoss {
        src_gwi: src,
        dst_gwi: dst,
        total_loss: breakdown.total(),
        breakdown,
    })
}

/// Loss between any two distinct GWIs. Traffic towards an upstream GWI
/// rides the counter-propagating waveguide, whose geometry mirrors the
/// forward one, so the loss equals that of the reversed pair.
pub fn link_loss(topo: &Topology, params: &DeviceParams, src: usize, dst: usize) -> Result<PathLoss, TopologyError> {
    if dst < src {
        let mut loss = path_loss(topo, params, dst, src)?;
        loss.src_gwi = src;
        loss.dst_gwi = dst;
        Ok(loss)
    } else {
        path_loss(topo, params, src, dst)
    }
}

/// Largest link loss over all ordered GWI pairs.
pub fn worst_case_loss(topo: &Topology, params: &DeviceParams) -> f64 {
    let n = topo.gwi_count();
    (0..n)
        .flat_map(|s| (0..n).filter(move |&d| d != s).map(move |d| (s, d)))
        .map(|(s, d)| link_loss(topo, params, s, d).map(|l| l.total_loss).unwrap_or(0.0))
        .fold(0.0, f64::max)
}

/// Per-wavelength injection power (dBm) provisioned so the farthest
/// destination receives exactly the sensitivity (plus any PAM4 penalty).
pub fn provisioned_wavelength_dbm(topo: &Topology, params: &DeviceParams, modulation: &Modulation) -> f64 {
    let topo = topo.for_modulation(modulation);
    let worst = worst_case_loss(&topo, params);
    solve_laser_power(params, worst, modulation.n_lambda, modulation.mode)
        - 10.0 * f64::from(modulation.n_lambda).log10()
}

/// Fraction of full per-wavelength power actually driven for approximated
/// signals at a nominal laser fraction. PAM4 boosts it by the configured
/// scale, never beyond full power.
pub fn approximated_drive_fraction(params: &DeviceParams, mode: ModulationMode, laser_fraction: f64) -> f64 {
    match mode {
        ModulationMode::Ook => laser_fraction,
        ModulationMode::Pam4 => (laser_fraction * params.pam4_power_scale).min(1.0),
    }
}

/// Laser power needed for a hypothetical destination at each sampled
/// position along the waveguide, as `(position_cm, p_laser_dbm)`.
pub fn power_profile(
    topo: &Topology,
    params: &DeviceParams,
    modulation: &Modulation,
    resolution: f64,
) -> Result<Vec<(f64, f64)>, TopologyError> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(TopologyError::OutOfRange {
            what: "resolution",
            range: "(0, inf)",
            value: resolution,
        });
    }
    let topo = topo.for_modulation(modulation);
    let steps = (topo.waveguide_length / resolution + 1e-9).floor() as usize;
    Ok((0..=steps)
        .map(|k| {
            let x = k as f64 * resolution;
            let passed = topo.gwi_positions.iter().filter(|&&p| p < x).count();
            let loss = accumulate(&topo, params, x, passed).total();
            (x, solve_laser_power(params, loss, modulation.n_lambda, modulation.mode))
        })
        .collect())
}

/// Per-source destination sets where reduced-power transmission cannot be
/// recovered, so approximated bits are truncated instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationTable {
    pub reduced_power_fraction: f64,
    /// Network-wide provisioned per-wavelength power, dBm.
    pub full_wavelength_dbm: f64,
    pub per_src: Vec<BTreeSet<usize>>,
}

impl TruncationTable {
    pub fn contains(&self, src: usize, dst: usize) -> bool {
        self.per_src.get(src).is_some_and(|set| set.contains(&dst))
    }

    /// Table that never truncates (used when distance awareness is off).
    pub fn empty(gwi_count: usize, full_wavelength_dbm: f64) -> Self {
        Self {
            reduced_power_fraction: 1.0,
            full_wavelength_dbm,
            per_src: vec![BTreeSet::new(); gwi_count],
        }
    }
}

pub fn truncation_table(
    topo: &Topology,
    params: &DeviceParams,
    modulation: &Modulation,
    reduced_power_fraction: f64,
) -> Result<TruncationTable, TopologyError> {
    if !(0.0..=1.0).contains(&reduced_power_fraction) {
        return Err(TopologyError::OutOfRange {
            what: "reduced_power_fraction",
            range: "[0, 1]",
            value: reduced_power_fraction,
        });
    }
    let topo = topo.for_modulation(modulation);
    let full = provisioned_wavelength_dbm(&topo, params, modulation);
    let drive = approximated_drive_fraction(params, modulation.mode, reduced_power_fraction);
    let reduced = full + fraction_to_db(drive);
    let n = topo.gwi_count();
    let per_src = (0..n)
        .map(|s| {
            (0..n)
                .filter(|&d| d != s)
                .filter(|&d| {
                    let loss = link_loss(&topo, params, s, d).expect("valid pair").total_loss;
                    received_power(reduced, loss) < params.receiver_sensitivity
                })
                .collect()
        })
        .collect();
    Ok(TruncationTable {
        reduced_power_fraction,
        full_wavelength_dbm: full,
        per_src,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-9;

    #[test]
    fn presets_geometry() {
        let c = Topology::clos();
        assert_eq!(c.gwi_count(), 8);
        assert_eq!(c.waveguide_length, 4.5);
        assert_eq!(c.gwi_positions[0], 1.0);
        assert!((c.gwi_positions[7] - 3.8).abs() < EPS);
        assert_eq!(c.core_count, 64);
        let s = Topology::swiftnoc();
        assert_eq!(s.gwi_count(), 16);
        assert_eq!(s.waveguide_length, 8.3);
        assert!((s.gwi_positions[15] - 7.8).abs() < EPS);
        assert!(c.validate().is_ok() && s.validate().is_ok());
    }

    #[test]
    fn adjacent_clos_loss() {
        let l = path_loss(&Topology::clos(), &DeviceParams::standard(), 2, 3).unwrap();
        assert!((l.breakdown.propagation - 0.4).abs() < EPS);
        assert_eq!(l.breakdown.through, 0.0);
        assert_eq!(l.breakdown.drop, 0.7);
        assert!((l.total_loss - 1.1).abs() < EPS);
    }

    #[test]
    fn end_to_end_clos_loss() {
        let l = path_loss(&Topology::clos(), &DeviceParams::standard(), 0, 7).unwrap();
        assert!((l.breakdown.propagation - 2.8).abs() < EPS);
        assert!((l.breakdown.through - 7.68).abs() < EPS);
        assert!((l.total_loss - 11.18).abs() < EPS);
    }

    #[test]
    fn colocated_is_drop_only() {
        let topo = Topology {
            gwi_positions: vec![1.0, 1.0 + 1e-300, 2.0],
            ..Topology::clos()
        };
        let p = DeviceParams::standard();
        let l = path_loss(&topo, &p, 0, 1).unwrap();
        assert!((l.total_loss - p.mr_drop_loss).abs() < 1e-12);
    }

    #[test]
    fn routing_errors() {
        let t = Topology::clos();
        let p = DeviceParams::standard();
        assert_eq!(path_loss(&t, &p, 5, 2), Err(TopologyError::Upstream { src: 5, dst: 2 }));
        assert_eq!(path_loss(&t, &p, 3, 3), Err(TopologyError::SameEndpoint(3)));
        assert!(matches!(path_loss(&t, &p, 0, 8), Err(TopologyError::BadIndex { .. })));
        let back = link_loss(&t, &p, 5, 2).unwrap();
        assert_eq!(back.total_loss, path_loss(&t, &p, 2, 5).unwrap().total_loss);
    }

    #[test]
    fn bends_and_modulation_are_charged() {
        let t = Topology {
            bends_per_path: 4,
            ..Topology::clos()
        };
        let p = DeviceParams {
            modulation_insertion_loss: 0.3,
            ..DeviceParams::standard()
        };
        let l = path_loss(&t, &p, 0, 1).unwrap();
        assert!((l.breakdown.bend - 0.04).abs() < EPS);
        assert_eq!(l.breakdown.modulation, 0.3);
        assert!((l.total_loss - l.breakdown.total()).abs() < 1e-15);
    }

    #[test]
    fn additivity_along_waveguide() {
        let t = Topology::swiftnoc();
        let p = DeviceParams::standard();
        for a in 0..t.gwi_count() {
            for b in a + 1..t.gwi_count() {
                for c in b + 1..t.gwi_count() {
                    let ac = path_loss(&t, &p, a, c).unwrap();
                    let ab = path_loss(&t, &p, a, b).unwrap();
                    let bc = path_loss(&t, &p, b, c).unwrap();
                    // The bank at b is passed on a→c but is a drop on a→b.
                    let lhs = ac.breakdown.propagation + ac.breakdown.through;
                    let rhs = ab.breakdown.propagation
                        + ab.breakdown.through
                        + bc.breakdown.propagation
                        + bc.breakdown.through
                        + p.mr_through_loss * f64::from(t.mrs_per_bank);
                    assert!((lhs - rhs).abs() < 1e-9);
                    let totals = ab.total_loss + bc.total_loss - ac.total_loss;
                    let expected =
                        p.mr_drop_loss + p.modulation_insertion_loss - p.mr_through_loss * f64::from(t.mrs_per_bank);
                    assert!((totals - expected).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn provisioning_meets_budget_at_worst_case() {
        let t = Topology::clos();
        let p = DeviceParams::standard();
        let ook = provisioned_wavelength_dbm(&t, &p, &Modulation::ook());
        assert!((ook - (-20.0 + 11.18)).abs() < EPS);
        // PAM4 banks hold 32 MRs, so through loss halves; the signaling
        // penalty is added on top.
        let pam4 = provisioned_wavelength_dbm(&t, &p, &Modulation::pam4());
        assert!((pam4 - (-20.0 + 2.8 + 3.84 + 0.7 + 5.8)).abs() < EPS);
    }

    #[test]
    fn profile_rejects_bad_resolution() {
        let t = Topology::clos();
        let p = DeviceParams::standard();
        assert!(power_profile(&t, &p, &Modulation::ook(), 0.0).is_err());
        assert!(power_profile(&t, &p, &Modulation::ook(), -1.0).is_err());
    }

    #[test]
    fn truncation_table_extremes() {
        let t = Topology::clos();
        let p = DeviceParams::standard();
        for m in [Modulation::ook(), Modulation::pam4()] {
            let full = truncation_table(&t, &p, &m, 1.0).unwrap();
            assert!(full.per_src.iter().all(BTreeSet::is_empty));
            let none = truncation_table(&t, &p, &m, 1e-12).unwrap();
            for (s, set) in none.per_src.iter().enumerate() {
                assert_eq!(set.len(), t.gwi_count() - 1, "src {s}");
                assert!(!set.contains(&s));
            }
        }
        assert!(truncation_table(&t, &p, &Modulation::ook(), 1.5).is_err());
    }

    #[test]
    fn truncation_table_shrinks_with_fraction() {
        let t = Topology::swiftnoc();
        let p = DeviceParams::standard();
        let m = Modulation::ook();
        let fractions = [0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0];
        let tables: Vec<_> = fractions
            .iter()
            .map(|&f| truncation_table(&t, &p, &m, f).unwrap())
            .collect();
        for w in tables.windows(2) {
            for s in 0..t.gwi_count() {
                assert!(w[1].per_src[s].is_subset(&w[0].per_src[s]));
            }
        }
    }
}
