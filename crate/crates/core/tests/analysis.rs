use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use nalgebra::Matrix4;
use nvbus_core::analysis::*;
use nvbus_core::protocols::*;
use nvbus_core::tensorspace::{max_abs_vec, slot, CVector, C64};
use nvbus_core::*;

use NveLevel::{One, Zero, U};

const R: C64 = C64::new(FRAC_1_SQRT_2, 0.0);

fn compile(id: &str, policy: CalibrationPolicy) -> CompiledProtocol {
    let reg = ProtocolRegistry::default();
    let spec = ProtocolSpec::new(id, policy).unwrap();
    reg.compile(&spec, &reg.get(id).unwrap().default_params()).unwrap()
}

fn sim_st() -> Simulator {
    Simulator::new(DeviceParams::paper_state_transfer()).unwrap()
}

#[test]
fn product_state_is_pure() {
    let sim = sim_st();
    let psi = sim.superposition(&[(R, DeviceKet::nves(Zero, U)), (R, DeviceKet::nves(One, U))]).unwrap();
    let rho = partial_trace(&psi, sim.layout(), &[slot::NVE1]).unwrap();
    assert!((rho.purity() - 1.0).abs() < 1e-12);
    assert!((rho.trace() - 1.0).norm() < 1e-12);
}

#[test]
fn initial_transfer_state_entries() {
    let sim = sim_st();
    let psi = sim.superposition(&[(R, DeviceKet::nves(Zero, U)), (R, DeviceKet::nves(One, U))]).unwrap();
    let rho = partial_trace(&psi, sim.layout(), &[slot::NVE1, slot::NVE2]).unwrap();
    assert_eq!(rho.basis.len(), 9);
    assert_eq!(rho.basis[0], "UU");
    for (r, c) in [("0U", "0U"), ("0U", "1U"), ("1U", "0U"), ("1U", "1U")] {
        assert!((rho.entry(r, c).unwrap().norm() - 0.5).abs() < 1e-12);
    }
    assert!(rho.min_eigenvalue() > -1e-12);
}

#[test]
fn entangled_pair_reduces_to_mixture() {
    let sim = sim_st();
    let psi = sim.superposition(&[(R, DeviceKet::nves(Zero, Zero)), (R, DeviceKet::nves(One, One))]).unwrap();
    let rho = partial_trace(&psi, sim.layout(), &[slot::NVE1]).unwrap();
    let want = [0.0, 0.5, 0.5];
    for i in 0..3 {
        for j in 0..3 {
            let w = if i == j { want[i] } else { 0.0 };
            assert!((rho.matrix[(i, j)] - C64::new(w, 0.0)).norm() < 1e-12);
        }
    }
}

#[test]
fn partial_trace_rejects_bad_selection() {
    let sim = sim_st();
    let psi = sim.basis_state(DeviceKet::nves(Zero, U)).unwrap();
    assert!(matches!(partial_trace(&psi, sim.layout(), &[]), Err(AnalysisError::EmptyKeep)));
    assert!(partial_trace(&psi, sim.layout(), &[0, 0]).is_err());
    assert!(partial_trace(&psi, sim.layout(), &[7]).is_err());
}

#[test]
fn density_exports() {
    let sim = sim_st();
    let psi = sim.superposition(&[(R, DeviceKet::nves(Zero, U)), (R, DeviceKet::nves(One, U))]).unwrap();
    let rho = partial_trace(&psi, sim.layout(), &[slot::NVE1]).unwrap();
    let mut buf = Vec::new();
    rho.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "row,col,re,im");
    assert_eq!(lines.len(), 10);
    let entry: Vec<f64> = lines[6].split(',').skip(2).map(|x| x.parse().unwrap()).collect();
    assert!(lines[6].starts_with("0,1,") && (entry[0] - 0.5).abs() < 1e-12 && entry[1] == 0.0);
    let json = serde_json::to_string(&rho).unwrap();
    let back: DensityMatrixReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rho);
}

#[test]
fn identity_transfer_is_perfect() {
    let sim = sim_st();
    let task = TransferTask {
        inputs: [DeviceKet::nves(Zero, U), DeviceKet::nves(One, U)],
        targets: [(C64::new(1.0, 0.0), DeviceKet::nves(Zero, U)), (C64::new(1.0, 0.0), DeviceKet::nves(One, U))],
    };
    let r = avg_fidelity_transfer(&sim, &Timeline::new("empty", vec![]), &task, 16).unwrap();
    assert_eq!(r.average, 1.0);
    assert_eq!(r.per_node.len(), 16);
}

#[test]
fn empty_timeline_is_identity_gate() {
    let sim = Simulator::new(DeviceParams::paper_cphase()).unwrap();
    let LogicalTask::Gate(task) = CPhase.task() else { unreachable!() };
    let g = extract_logical_gate(&sim, &Timeline::new("empty", vec![]), &task.basis).unwrap();
    assert!(gate_metric(&Matrix4::identity(), &g.matrix) < 1e-12);
    assert_eq!(g.leakage, 0.0);
}

#[test]
fn gate_metric_ignores_global_phase() {
    let t = Matrix4::<C64>::identity();
    let u = t * C64::from_polar(1.0, 0.7);
    assert!(gate_metric(&t, &u).abs() < 1e-15);
    let mut flip = t;
    flip[(3, 3)] = -flip[(3, 3)];
    assert!((gate_metric(&t, &flip) - 0.5).abs() < 1e-15);
}

#[test]
fn small_grids_are_rejected() {
    let sim = sim_st();
    let LogicalTask::Transfer(task) = StateTransfer.task() else { unreachable!() };
    let r = avg_fidelity_transfer(&sim, &Timeline::new("empty", vec![]), &task, 8);
    assert!(matches!(r, Err(AnalysisError::GridTooSmall(8))));
}

#[test]
fn quadrature_is_exact_beyond_nine_nodes() {
    for id in ["state_transfer", "cphase"] {
        let c = compile(id, CalibrationPolicy::Formula);
        let sim = Simulator::new(c.params.clone()).unwrap();
        let a = avg_fidelity(&sim, &c.timeline, &c.task, 9).unwrap().average;
        let b = avg_fidelity(&sim, &c.timeline, &c.task, 64).unwrap().average;
        assert!((a - b).abs() < 1e-12, "{id}: {a} vs {b}");
    }
}

#[test]
fn effective_fidelities_are_unity() {
    for id in ["state_transfer", "cphase"] {
        let c = compile(id, CalibrationPolicy::Formula);
        let sim = Simulator::new(c.params.clone()).unwrap().with_mode(Mode::Effective);
        let r = avg_fidelity(&sim, &c.timeline, &c.task, 16).unwrap();
        assert!(r.average > 1.0 - 1e-6, "{id}: {}", r.average);
    }
}

#[test]
fn superposed_basis_runs_match_direct_runs() {
    let c = compile("cphase", CalibrationPolicy::Formula);
    let LogicalTask::Gate(task) = &c.task else { unreachable!() };
    let sim = Simulator::new(c.params.clone()).unwrap();
    let inputs: Vec<PureState> = task.basis.iter().map(|k| sim.basis_state(*k).unwrap()).collect();
    let outs = sim.run_many(&inputs, &c.timeline).unwrap();
    for (t1, t2) in [(0.3, 1.1), (2.0, -0.4), (4.4, 0.9), (1.7, 5.5), (3.0, 3.0)] {
        let w = gate_input(t1, t2);
        let terms: Vec<(C64, DeviceKet)> = (0..4).map(|i| (C64::new(w[i], 0.0), task.basis[i])).collect();
        let direct = sim.run_final(&sim.superposition(&terms).unwrap(), &c.timeline).unwrap();
        let mut sum = CVector::zeros(sim.layout().total_dim());
        for i in 0..4 {
            sum += outs[i].amps() * C64::new(w[i], 0.0);
        }
        assert!(max_abs_vec(&(direct.amps() - sum)) < 1e-8);
    }
}

#[test]
fn cphase_checkpoint_block_signs() {
    let c = compile("cphase", CalibrationPolicy::Formula);
    let sim = Simulator::new(c.params.clone()).unwrap().with_mode(Mode::Effective);
    let w = gate_input(FRAC_PI_4, FRAC_PI_4);
    let LogicalTask::Gate(task) = &c.task else { unreachable!() };
    let terms: Vec<(C64, DeviceKet)> = (0..4).map(|i| (C64::new(w[i], 0.0), task.basis[i])).collect();
    let out = sim.run_final(&sim.superposition(&terms).unwrap(), &c.timeline).unwrap();
    let rho = partial_trace(&out, sim.layout(), &[slot::NVE1, slot::NVE2, slot::SPQ]).unwrap();
    let block = rho.block(&["00g", "00e", "01g", "01e", "10g", "10e", "11g", "11e"]).unwrap();
    assert!((block.trace() - 1.0).norm() < 1e-6);
    for r in ["00g", "01g", "10g", "11g"] {
        assert!((block.entry(r, r).unwrap() - 0.25).norm() < 1e-6);
        for col in ["00g", "01g", "11g"] {
            let want = if (r == "10g") == (col == "10g") { 0.25 } else { -0.25 };
            assert!((block.entry(r, col).unwrap() - want).norm() < 1e-6, "{r} {col}");
        }
    }
}

#[test]
fn leakage_summary_is_populated() {
    let c = compile("state_transfer", CalibrationPolicy::Formula);
    let sim = Simulator::new(c.params.clone()).unwrap();
    let r = avg_fidelity(&sim, &c.timeline, &c.task, 9).unwrap();
    assert!(r.leakage.max_photon2 >= 0.0 && r.leakage.max_photon2 < 1e-3);
    assert!(r.leakage.final_nontarget > 0.0 && r.leakage.final_nontarget < 0.05);
    assert!(r.min() <= r.average && r.average <= r.max());
}
