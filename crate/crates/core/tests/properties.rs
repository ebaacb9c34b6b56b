use proptest::prelude::*;

use nvbus_core::cluster::*;
use nvbus_core::model::{hamiltonian_interaction, hamiltonian_lab, FrameLedger};
use nvbus_core::tensorspace::{max_abs, max_abs_vec, CMatrix, CVector, Frame, C64};
use nvbus_core::*;

fn segment(p: &DeviceParams, dur: f64, g_frac: f64, tune: [bool; 2], drive: Option<(NveId, Transition, f64)>) -> ControlSegment {
    let mut s = ControlSegment::idle(p, "random", dur);
    s.spq_coupling = Freq::ghz(p.g_off.as_ghz() + g_frac * (p.g_on.as_ghz() - p.g_off.as_ghz()));
    if tune[0] {
        s.nve1_freq = p.omega_a;
    }
    if tune[1] {
        s.nve2_freq = p.omega_b;
    }
    if let Some((target, transition, phase)) = drive {
        s.drives.push(DriveSpec {
            target,
            transition,
            rabi: p.rabi,
            phase,
            window_ns: None,
        });
    }
    s
}

fn drive_strategy() -> impl Strategy<Value = Option<(NveId, Transition, f64)>> {
    prop::option::of((
        prop::sample::select(vec![NveId::Nve1, NveId::Nve2]),
        prop::sample::select(vec![Transition::U0, Transition::U1]),
        -3.0f64..3.0,
    ))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generators_are_hermitian(
        g_frac in 0.0f64..1.0,
        tune in prop::array::uniform2(any::<bool>()),
        drive in drive_strategy(),
        t in 0.0f64..20.0,
    ) {
        let p = DeviceParams::paper_cphase();
        let seg = segment(&p, 20.0, g_frac, tune, drive);
        let lab = hamiltonian_lab(&p, &seg, t).unwrap();
        prop_assert!(lab.hermiticity_error() < 1e-12);
        let ledger = FrameLedger::new(&p.layout().unwrap());
        let int = hamiltonian_interaction(&p, &seg, &ledger, t).unwrap();
        prop_assert!(int.hermiticity_error() < 1e-12);
        prop_assert!(max_abs(&(int.matrix() - int.matrix().adjoint())) < 1e-12);
    }

    #[test]
    fn propagation_is_linear(
        g_frac in 0.0f64..1.0,
        tune in prop::array::uniform2(any::<bool>()),
        drive in drive_strategy(),
        dur in 0.5f64..8.0,
        re in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        let p = DeviceParams::paper_state_transfer();
        let seg = segment(&p, dur, g_frac, tune, drive);
        let tl = Timeline::new("random", vec![seg]);
        let sim = Simulator::new(p).unwrap();
        let n = sim.layout().total_dim();
        let mk = |k: usize| {
            let v = CVector::from_fn(n, |i, _| C64::new(re[(i + k) % 6] * ((i + 1) as f64).sin(), re[(i * 7 + k) % 6]));
            PureState::normalized(v, Frame::Interaction).unwrap()
        };
        let (a, b) = (mk(0), mk(3));
        let (ca, cb) = (C64::new(0.6, 0.1), C64::new(-0.2, 0.7));
        let mixed = PureState::normalized(a.amps() * ca + b.amps() * cb, Frame::Interaction).unwrap();
        let scale = (a.amps() * ca + b.amps() * cb).norm();
        let outs = sim.run_many(&[a, b, mixed], &tl).unwrap();
        let sum = (outs[0].amps() * ca + outs[1].amps() * cb).unscale(scale);
        prop_assert!(max_abs_vec(&(outs[2].amps() - sum)) < 1e-10);
    }

    #[test]
    fn ideal_cluster_ignores_edge_order(
        dims in prop::sample::select(vec![vec![4], vec![6], vec![2, 3], vec![3, 3], vec![2, 2, 2], vec![4, 4]]),
        seed in any::<u64>(),
    ) {
        let lat = Lattice::new(dims).unwrap();
        let gate = CMatrix::from_fn(4, 4, |i, j| cz()[(i, j)]);
        let plus = prepare_plus_all(&lat).unwrap();
        let sched = schedule_lattice(&lat);
        let reference = apply_schedule(&plus, &sched, &gate).unwrap();

        let mut edges: Vec<Edge> = lat.edges().to_vec();
        let mut x = seed | 1;
        for i in (1..edges.len()).rev() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            edges.swap(i, (x % (i as u64 + 1)) as usize);
        }
        let shuffled = LatticeSchedule {
            dims: sched.dims.clone(),
            rounds: vec![Round { axis: 0, parity: 0, edges }],
        };
        let other = apply_schedule(&plus, &shuffled, &gate).unwrap();
        prop_assert!(max_abs_vec(&(reference.amps() - other.amps())) < 1e-12);
        for k in stabilizer_check(&reference, &lat).unwrap() {
            prop_assert!((k - 1.0).abs() < 1e-12);
        }
    }
}
