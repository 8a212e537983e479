use super::*;
use crate::photonics::{dbm_to_mw, received_power, DeviceParams, Modulation, ModulationMode};
use crate::topology::{link_loss, provisioned_wavelength_dbm, Topology, TopologyKind};
use crate::tracegen::{generate, Profile};
use packet::ValueKind;
use proptest::prelude::*;

fn cfg(variant: Variant, mode: ModulationMode) -> RunConfig {
    RunConfig::new(TopologyKind::Clos, DeviceParams::standard(), mode, variant)
}

fn ctx(params: &DeviceParams, modulation: Modulation, src: usize, dst: usize) -> LinkContext<'_> {
    let topo = Topology::clos().for_modulation(&modulation);
    LinkContext {
        params,
        modulation,
        full_dbm: provisioned_wavelength_dbm(&topo, params, &modulation),
        path_loss: link_loss(&topo, params, src, dst).unwrap().total_loss,
    }
}

fn record(kind: ValueKind, values: Vec<f64>, approximable: bool) -> TraceRecord {
    TraceRecord {
        cycle: 0,
        src: 0,
        dst: 7,
        kind,
        values,
        approximable,
        var_id: None,
    }
}

#[test]
fn baseline_flit_lights_every_lane() {
    let params = DeviceParams::standard();
    let c = ctx(&params, Modulation::ook(), 0, 7);
    let tx = transmit_flit(0xDEAD_BEEF_0123_4567, &FlitMasks::exact(), &c);
    assert_eq!(tx.received, 0xDEAD_BEEF_0123_4567);
    assert_eq!(tx.full_lanes, 64);
    let per_lane = dbm_to_mw(c.full_dbm) / params.laser_wall_plug_efficiency;
    assert!((tx.laser_mw - 64.0 * per_lane).abs() < 1e-9);
}

#[test]
fn truncating_half_the_flit_halves_the_laser() {
    let params = DeviceParams::standard();
    let c = ctx(&params, Modulation::ook(), 0, 7);
    let masks = FlitMasks {
        truncated: 0xFFFF_FFFF,
        reduced: 0,
        laser_fraction: 0.0,
    };
    let tx = transmit_flit(u64::MAX, &masks, &c);
    assert_eq!(tx.received, 0xFFFF_FFFF_0000_0000);
    assert_eq!((tx.full_lanes, tx.dark_lanes), (32, 32));
    let full = transmit_flit(u64::MAX, &FlitMasks::exact(), &c);
    assert!((tx.laser_mw * 2.0 - full.laser_mw).abs() < 1e-9);
}

#[test]
fn reduced_power_recovers_near_destination() {
    let params = DeviceParams::standard();
    let c = ctx(&params, Modulation::ook(), 0, 1);
    let rx = received_power(c.full_dbm + 10.0 * 0.1f64.log10(), c.path_loss);
    assert!(rx >= params.receiver_sensitivity);
    let masks = FlitMasks {
        truncated: 0,
        reduced: 0xFFFF_FFFF,
        laser_fraction: 0.1,
    };
    let tx = transmit_flit(0x1234_5678_9ABC_DEF0, &masks, &c);
    assert_eq!(tx.received, 0x1234_5678_9ABC_DEF0);
    assert_eq!(tx.reduced_lanes, 32);
    // Too far: the reduced bits read as zero, the rest is intact.
    let far = ctx(&params, Modulation::ook(), 0, 7);
    let tx = transmit_flit(0x1234_5678_9ABC_DEF0, &masks, &far);
    assert_eq!(tx.received, 0x1234_5678_0000_0000);
}

#[test]
fn pam4_mixed_lane_is_lit_fully() {
    let params = DeviceParams::standard();
    let c = ctx(&params, Modulation::pam4(), 0, 7);
    let masks = FlitMasks {
        truncated: 0b1,
        reduced: 0,
        laser_fraction: 0.0,
    };
    let tx = transmit_flit(0b11, &masks, &c);
    assert_eq!(tx.received, 0b10);
    assert_eq!((tx.full_lanes, tx.dark_lanes), (32, 0));
}

#[test]
fn empty_trace() {
    let r = run(&cfg(Variant::Arxon, ModulationMode::Ook), &Trace::parse("").unwrap()).unwrap();
    assert_eq!(r.total_energy_j, 0.0);
    assert_eq!(r.ledger.static_energy_j, 0.0);
    assert_eq!(r.epb_pj_per_bit, None);
}

#[test]
fn other_traffic_is_untouched() {
    let t = Trace::from_records(vec![record(ValueKind::Other, vec![1.0, 2.0, 3.0], false)]);
    let base = run(&cfg(Variant::Baseline, ModulationMode::Ook), &t).unwrap();
    let arxon = run(&cfg(Variant::Arxon, ModulationMode::Ook), &t).unwrap();
    assert_eq!(base.ledger, arxon.ledger);
    assert_eq!(arxon.diagnostics.exact_packets, 1);
}

#[test]
fn epb_counts_original_bits() {
    let t = Trace::from_records(vec![record(ValueKind::F64, vec![1.5; 3], true)]);
    let r = run(&cfg(Variant::Arxon, ModulationMode::Ook), &t).unwrap();
    assert_eq!(r.ledger.payload_bits, 192);
    assert_eq!(r.ledger.flit_cycles, 4);
    let epb = r.epb_pj_per_bit.unwrap();
    assert!((epb - r.total_energy_j / 192.0 * 1e12).abs() < 1e-9 * epb);
    assert_eq!(
        r.total_energy_j,
        r.ledger.laser_energy_j + r.ledger.tuning_energy_j + r.ledger.static_energy_j
    );
}

#[test]
fn header_flags_and_truncation_on_far_pairs() {
    let t = Trace::from_records(vec![record(ValueKind::F64, vec![3.25, -1e5], true)]);
    let r = run(&cfg(Variant::Arxon, ModulationMode::Ook), &t).unwrap();
    assert_eq!(r.diagnostics.truncated_packets, 1);
    assert_eq!(r.diagnostics.truncated_bits, 64);
    assert_eq!(r.diagnostics.exact_bit_errors, 0);
}

#[test]
fn unlisted_and_violations_are_counted() {
    let mut c = cfg(Variant::Arxon, ModulationMode::Ook);
    c.policy.approximable_vars = crate::approx::VarSet::Only(["idx".to_string()].into());
    let mut ok = record(ValueKind::I32, vec![1.0, 300.0, 70_000.0], true);
    ok.var_id = Some("idx".into());
    let mut other = ok.clone();
    other.var_id = Some("ptr".into());
    let r = run(&c, &Trace::from_records(vec![ok, other])).unwrap();
    assert_eq!(r.diagnostics.unlisted_variables, 1);
    assert_eq!(r.diagnostics.precondition_violations, 2);
}

#[test]
fn bad_node_ids_cite_line() {
    let t = Trace::parse(
        "{\"cycle\":0,\"src\":0,\"dst\":1,\"kind\":\"F64\",\"values\":[1],\"approximable\":true}\n{\"cycle\":1,\"src\":0,\"dst\":9,\"kind\":\"F64\",\"values\":[1],\"approximable\":true}\n",
    )
    .unwrap();
    let err = run(&cfg(Variant::Arxon, ModulationMode::Ook), &t).unwrap_err();
    assert!(matches!(err, SimError::Input { line: 2, .. }));
}

#[test]
fn baseline_is_lossless_and_arxon_saves_laser() {
    let t = Trace::from_records(generate(Profile::Mixed, 400, 8, 1));
    let base = run(&cfg(Variant::Baseline, ModulationMode::Ook), &t).unwrap();
    assert_eq!(base.diagnostics.exact_bit_errors, 0);
    assert_eq!(base.diagnostics.approximated_bits_lost, 0);
    assert_eq!(base.ledger.codec_cycles, 2 * base.ledger.flit_cycles);
    let arxon = run(&cfg(Variant::Arxon, ModulationMode::Ook), &t).unwrap();
    assert_eq!(arxon.diagnostics.exact_bit_errors, 0);
    assert!(arxon.ledger.laser_energy_j < base.ledger.laser_energy_j);
}

#[test]
fn relaxed_tuning_only_helps_with_truncation() {
    let t = Trace::from_records(generate(Profile::Mixed, 300, 8, 2));
    let plain = run(&cfg(Variant::Arxon, ModulationMode::Ook), &t).unwrap();
    let mut c = cfg(Variant::Arxon, ModulationMode::Ook);
    c.relaxed_tuning = true;
    let relaxed = run(&c, &t).unwrap();
    assert!(plain.diagnostics.truncated_bits > 0);
    assert!(relaxed.ledger.tuning_energy_j < plain.ledger.tuning_energy_j);
    let other = Trace::from_records(vec![record(ValueKind::Other, vec![1.0], false)]);
    let a = run(&cfg(Variant::Arxon, ModulationMode::Ook), &other).unwrap();
    let b = run(&c, &other).unwrap();
    assert_eq!(a.ledger.tuning_energy_j, b.ledger.tuning_energy_j);
}

#[test]
fn ook_and_pam4_move_the_same_flits() {
    let t = Trace::from_records(generate(Profile::Mixed, 300, 8, 3));
    let ook = run(&cfg(Variant::Arxon, ModulationMode::Ook), &t).unwrap();
    let pam4 = run(&cfg(Variant::Arxon, ModulationMode::Pam4), &t).unwrap();
    assert_eq!(ook.ledger.flit_cycles, pam4.ledger.flit_cycles);
    assert_eq!(ook.ledger.payload_bits, pam4.ledger.payload_bits);
    assert_eq!(
        ook.ledger.elapsed_cycles - ook.ledger.codec_cycles,
        pam4.ledger.elapsed_cycles - pam4.ledger.codec_cycles
    );
}

#[test]
fn compare_normalizes_and_guards_identity() {
    let t = Trace::from_records(generate(Profile::Mixed, 100, 8, 4));
    let base = run(&cfg(Variant::Baseline, ModulationMode::Ook), &t).unwrap();
    let table = compare(&[base.clone(), base.clone()]).unwrap();
    assert!(table
        .rows
        .iter()
        .all(|r| r.norm_epb == Some(1.0) && r.norm_laser == Some(1.0)));
    let arxon = run(&cfg(Variant::Arxon, ModulationMode::Pam4), &t).unwrap();
    let table = compare(&[base.clone(), arxon]).unwrap();
    assert!(table.row("arxon-PAM4").unwrap().norm_laser.unwrap() < 1.0);
    assert!(table
        .to_csv()
        .starts_with("variant,epb_pj_per_bit,laser_mw_avg,laser_mw_peak,tuning_mw_avg,norm_epb,norm_laser\n"));
    let other = Trace::from_records(generate(Profile::Mixed, 100, 8, 5));
    let foreign = run(&cfg(Variant::Baseline, ModulationMode::Ook), &other).unwrap();
    assert!(matches!(
        compare(&[base.clone(), foreign]),
        Err(CompareError::Mismatch { what: "trace", .. })
    ));
    assert!(matches!(compare(&[base]), Err(CompareError::TooFew(1))));
}

#[test]
fn report_json_roundtrip() {
    let t = Trace::from_records(generate(Profile::Mixed, 50, 8, 6));
    let r = run(&cfg(Variant::Lorax, ModulationMode::Pam4), &t).unwrap();
    let back = SimReport::from_json(&r.to_json()).unwrap();
    assert_eq!(back.to_json(), r.to_json());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn deterministic_reports(seed in any::<u64>()) {
        let t = Trace::from_records(generate(Profile::Mixed, 30, 8, seed));
        let mut c = cfg(Variant::Arxon, ModulationMode::Pam4);
        c.seed = seed;
        prop_assert_eq!(run(&c, &t).unwrap().to_json(), run(&c, &t).unwrap().to_json());
    }

    #[test]
    fn truncate_vs_reduce_per_flit(flit in any::<u64>(), lo in 0u32..64, dst in 1usize..8) {
        let params = DeviceParams::standard();
        let c = ctx(&params, Modulation::ook(), 0, dst);
        let mask = crate::approx::low_mask(64 - lo);
        let trunc = transmit_flit(flit, &FlitMasks { truncated: mask, reduced: 0, laser_fraction: 0.0 }, &c);
        let reduce = transmit_flit(flit, &FlitMasks { truncated: 0, reduced: mask, laser_fraction: 0.1 }, &c);
        prop_assert!(trunc.laser_mw <= reduce.laser_mw);
        prop_assert_eq!(trunc.received & !mask, flit & !mask);
        prop_assert_eq!(reduce.received & !mask, flit & !mask);
    }
}

#[test]
fn decision_counts_sum_to_packets() {
    let t = Trace::from_records(generate(Profile::Mixed, 200, 8, 7));
    let r = run(&cfg(Variant::Arxon, ModulationMode::Ook), &t).unwrap();
    let d = r.diagnostics;
    assert_eq!(
        d.exact_packets + d.reduced_power_packets + d.truncated_packets,
        d.packets
    );
    assert!(d.packets >= d.records);
}
