use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use nvbus_core::model::{excitation_number, FrameLedger, SegmentRole};
use nvbus_core::propagate::{cross_check_with, Exact, PropagatorRegistry, Rk4};
use nvbus_core::protocols::{CalibrationPolicy, ProtocolRegistry, ProtocolSpec};
use nvbus_core::tensorspace::{CVector, Frame, C64};
use nvbus_core::*;

mod common;
use common::random_state;

use NveLevel::{One, Zero, U};

fn st() -> DeviceParams {
    DeviceParams::paper_state_transfer()
}

fn resonant_nve1(p: &DeviceParams, t: f64) -> ControlSegment {
    ControlSegment {
        nve1_freq: p.omega_a,
        ..ControlSegment::idle(p, "pair", t)
    }
}

fn bridge(p: &DeviceParams, t: f64) -> ControlSegment {
    ControlSegment {
        spq_coupling: p.g_on,
        ..ControlSegment::idle(p, "bridge", t)
    }
}

fn strategies() -> Vec<Simulator> {
    let base = Simulator::new(st()).unwrap().with_mode(Mode::Effective);
    vec![
        base.clone().with_propagator(Arc::new(Exact)),
        base.with_propagator(Arc::new(Rk4)),
    ]
}

#[test]
fn zero_duration_is_identity() {
    let sim = Simulator::new(st()).unwrap();
    let psi = random_state(&sim, 7);
    let seg = resonant_nve1(sim.params(), 0.0);
    let (out, _) = sim
        .propagate_segment(&psi, &seg, &FrameLedger::new(sim.layout()))
        .unwrap();
    assert_eq!(out.amps(), psi.amps());
}

#[test]
fn empty_timeline_returns_input() {
    let sim = Simulator::new(st()).unwrap();
    let psi = random_state(&sim, 3);
    let out = sim.run_final(&psi, &Timeline::new("empty", vec![])).unwrap();
    assert_eq!(out.amps(), psi.amps());
}

#[test]
fn resonant_pair_follows_sin_squared() {
    let p = st();
    let g = p.g1.rad_per_ns();
    let period = PI / g;
    let from = DeviceKet::nves(Zero, U);
    let to = DeviceKet::new(U, 1, SpqLevel::G, 0, U);
    for sim in strategies() {
        let tl = Timeline::new("pair", vec![resonant_nve1(&p, period)]);
        let tr = sim
            .run_timeline(&sim.basis_state(from).unwrap(), &tl, &Sampling::new(vec![to]))
            .unwrap();
        for (t, pop) in tr.times.iter().zip(&tr.populations) {
            assert!((pop[0] - (g * t).sin().powi(2)).abs() < 1e-6, "{} at {t}", sim.propagator_name());
        }
    }
}

#[test]
fn quarter_period_lands_on_minus_i() {
    let p = st();
    let t = PI / (2.0 * p.g1.rad_per_ns());
    let to = DeviceKet::new(U, 1, SpqLevel::G, 0, U);
    for sim in strategies() {
        let tl = Timeline::new("pair", vec![resonant_nve1(&p, t)]);
        let out = sim.run_final(&sim.basis_state(DeviceKet::nves(Zero, U)).unwrap(), &tl).unwrap();
        let z = out.amps()[to.index(sim.layout()).unwrap()];
        assert!((z - C64::new(0.0, -1.0)).norm() < 1e-9, "{z}");
    }
}

#[test]
fn bridge_amplitude_matches_chain_formula() {
    let p = st();
    let g = p.g_on.rad_per_ns();
    let from = DeviceKet::new(U, 1, SpqLevel::G, 0, U);
    let to = DeviceKet::new(U, 0, SpqLevel::G, 1, U);
    for sim in strategies() {
        let ti = to.index(sim.layout()).unwrap();
        for k in 1..=20 {
            let t = k as f64 * 2.0 * PI / (SQRT_2 * g) / 20.0;
            let tl = Timeline::new("bridge", vec![bridge(&p, t)]);
            let out = sim.run_final(&sim.basis_state(from).unwrap(), &tl).unwrap();
            let want = ((SQRT_2 * g * t).cos() - 1.0) / 2.0;
            assert!((out.amps()[ti] - C64::new(want, 0.0)).norm() < 1e-6);
        }
        let tl = Timeline::new("bridge", vec![bridge(&p, PI / (SQRT_2 * g))]);
        let out = sim.run_final(&sim.basis_state(from).unwrap(), &tl).unwrap();
        assert!((out.amps()[ti] + 1.0).norm() < 1e-9);
    }
}

#[test]
fn zero_coupling_frames_agree() {
    let mut p = st();
    p.g_off = Freq::ghz(1e-13);
    p.g1 = Freq::ghz(1e-12);
    p.g2 = Freq::ghz(1e-12);
    let sim = Simulator::new(p.clone()).unwrap();
    let tl = Timeline::new("idle", vec![ControlSegment::idle(&p, "idle", 20.0)]);
    let d = cross_check_with(&sim, &random_state(&sim, 11), &tl).unwrap();
    assert!(d < 1e-12, "{d}");
}

#[test]
fn detuned_segment_frames_agree() {
    let p = st();
    let sim = Simulator::new(p.clone()).unwrap();
    let tl = Timeline::new("idle", vec![ControlSegment::idle(&p, "idle", 25.0)]);
    let d = cross_check_with(&sim, &random_state(&sim, 5), &tl).unwrap();
    assert!(d < 1e-8, "{d}");
}

#[test]
fn drive_free_segments_conserve_excitations() {
    let p = st();
    let sim = Simulator::new(p.clone()).unwrap();
    let n = excitation_number(sim.layout());
    let moments = |s: &PureState| {
        s.populations()
            .iter()
            .zip(&n)
            .fold((0.0, 0.0), |(m1, m2), (w, k)| (m1 + w * k, m2 + w * k * k))
    };
    let segs = [
        resonant_nve1(&p, 15.0),
        bridge(&p, 3.4),
        ControlSegment {
            nve2_freq: p.omega_b,
            ..ControlSegment::idle(&p, "nve2", 12.5)
        },
    ];
    let mut psi = random_state(&sim, 21);
    let mut ledger = FrameLedger::new(sim.layout());
    let before = moments(&psi);
    for seg in &segs {
        let (out, l) = sim.propagate_segment(&psi, seg, &ledger).unwrap();
        let after = moments(&out);
        assert!((after.0 - before.0).abs() < 1e-9 && (after.1 - before.1).abs() < 1e-9);
        psi = out;
        ledger = l;
    }
}

#[test]
fn runs_are_deterministic() {
    let spec = ProtocolSpec::new("cphase", CalibrationPolicy::Formula).unwrap();
    let c = ProtocolRegistry::default().compile(&spec, &DeviceParams::paper_cphase()).unwrap();
    let sim = Simulator::new(c.params.clone()).unwrap();
    let psi = random_state(&sim, 99);
    let a = sim.run_final(&psi, &c.timeline).unwrap();
    let b = sim.run_final(&psi, &c.timeline).unwrap();
    assert_eq!(a.amps(), b.amps());
    let many = sim.run_many(&[psi.clone(), psi], &c.timeline).unwrap();
    assert_eq!(many[0].amps(), a.amps());
    assert_eq!(many[1].amps(), a.amps());
}

#[test]
fn norm_is_kept_on_protocols() {
    let reg = ProtocolRegistry::default();
    for id in reg.ids() {
        let proto = reg.get(id).unwrap();
        let spec = ProtocolSpec::new(id, CalibrationPolicy::Formula).unwrap();
        let c = reg.compile(&spec, &proto.default_params()).unwrap();
        let sim = Simulator::new(c.params.clone()).unwrap();
        let tr = sim
            .run_timeline(&random_state(&sim, 4), &c.timeline, &Sampling::new(vec![]))
            .unwrap();
        assert!(tr.max_norm_drift() < 1e-9, "{id}: {}", tr.max_norm_drift());
    }
}

#[test]
fn trajectory_csv_has_tracked_columns() {
    let p = st();
    let sim = Simulator::new(p.clone()).unwrap();
    let tracked = vec![DeviceKet::nves(Zero, U), DeviceKet::new(U, 1, SpqLevel::G, 0, U)];
    let tl = Timeline::new("pair", vec![resonant_nve1(&p, 5.0)]);
    let sampling = Sampling {
        samples: 11,
        tracked,
    };
    let tr = sim
        .run_timeline(&sim.basis_state(DeviceKet::nves(Zero, U)).unwrap(), &tl, &sampling)
        .unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t_ns,norm,\"P_0,0,g,0,U\",\"P_U,1,g,0,U\"");
    assert_eq!(text.lines().count(), 12);
}

#[test]
fn exact_rejects_mixed_drive_frequencies() {
    let p = st();
    let mut seg = ControlSegment::idle(&p, "two drives", 10.0);
    for (target, transition) in [(NveId::Nve1, Transition::U1), (NveId::Nve2, Transition::U0)] {
        seg.drives.push(DriveSpec {
            target,
            transition,
            rabi: p.rabi,
            phase: 0.0,
            window_ns: None,
        });
    }
    let tl = Timeline::new("mixed", vec![seg]);
    let sim = Simulator::new(p).unwrap().with_propagator(Arc::new(Exact));
    let psi = sim.basis_state(DeviceKet::nves(One, Zero)).unwrap();
    assert!(matches!(sim.run_final(&psi, &tl), Err(PropagateError::Unsupported { .. })));
    let rk = sim.with_propagator(Arc::new(Rk4));
    assert!(rk.run_final(&psi, &tl).is_ok());
}

#[test]
fn tiny_step_underflows() {
    let p = st();
    let sim = Simulator::new(p.clone()).unwrap().with_propagator(Arc::new(Rk4)).with_step(Some(1e-20));
    let tl = Timeline::new("pair", vec![resonant_nve1(&p, 5.0)]);
    let psi = sim.basis_state(DeviceKet::nves(Zero, U)).unwrap();
    assert!(matches!(sim.run_final(&psi, &tl), Err(PropagateError::StepUnderflow { .. })));
}

#[test]
fn registry_lookup() {
    let reg = PropagatorRegistry::default();
    assert_eq!(reg.names(), vec!["exact", "hybrid", "rk4"]);
    assert!(matches!(reg.get("magnus"), Err(PropagateError::UnknownPropagator(_))));
}

#[test]
fn invalid_inputs_are_rejected() {
    let p = st();
    let sim = Simulator::new(p.clone()).unwrap();
    let tl = Timeline::new("pair", vec![resonant_nve1(&p, 5.0)]);
    let short = PureState::normalized(CVector::from_element(3, C64::new(1.0, 0.0)), Frame::Interaction).unwrap();
    assert!(sim.run_final(&short, &tl).is_err());
    let bad = Timeline::new("bad", vec![ControlSegment { duration_ns: -1.0, ..resonant_nve1(&p, 1.0) }]);
    let psi = sim.basis_state(DeviceKet::nves(Zero, U)).unwrap();
    assert!(sim.run_final(&psi, &bad).is_err());
}

#[test]
fn lab_input_is_moved_into_the_frame() {
    let p = st();
    let sim = Simulator::new(p.clone()).unwrap();
    let seg = ControlSegment {
        role: SegmentRole::Drive,
        ..ControlSegment::idle(&p, "idle", 4.0)
    };
    let psi = random_state(&sim, 8);
    let lab = PureState::new(psi.amps().clone(), Frame::Lab).unwrap();
    let ledger = FrameLedger::new(sim.layout());
    let (a, _) = sim.propagate_segment(&psi, &seg, &ledger).unwrap();
    let (b, _) = sim.propagate_segment(&lab, &seg, &ledger).unwrap();
    // a fresh ledger carries no phase, so both frames coincide
    assert!((a.amps() - b.amps()).norm() < 1e-15);
}
