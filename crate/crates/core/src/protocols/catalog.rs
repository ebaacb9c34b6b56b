use std::f64::consts::{PI, SQRT_2};

use nalgebra::Matrix4;

use super::{GateTask, LogicalTask, Protocol, TransferTask};
use crate::error::ProtocolError;
use crate::model::{
    ControlSegment, DeviceKet, DeviceParams, DriveSpec, NveId, NveLevel, SegmentRole, SpqLevel, Transition,
};
use crate::propagate::Timeline;
use crate::tensorspace::{I, ONE};

use NveLevel::{One, Zero, U};

const fn ket(nve1: NveLevel, a: usize, b: usize, nve2: NveLevel) -> DeviceKet {
    DeviceKet::new(nve1, a, SpqLevel::G, b, nve2)
}

/// Pulse-area durations. Transfers complete at `g t = π/2`.
struct Areas<'a>(&'a DeviceParams);

impl Areas<'_> {
    fn drive(&self, area: f64) -> f64 {
        area / self.0.rabi.rad_per_ns()
    }

    fn nve_transfer(&self, k: NveId) -> f64 {
        PI / (2.0 * self.0.nve_coupling(k).rad_per_ns())
    }

    fn nve_area(&self, k: NveId, gt: f64) -> f64 {
        gt / self.0.nve_coupling(k).rad_per_ns()
    }

    fn bus(&self) -> f64 {
        PI / (SQRT_2 * self.0.g_on.rad_per_ns())
    }
}

fn drive(target: NveId, transition: Transition, p: &DeviceParams, window_ns: Option<f64>) -> DriveSpec {
    DriveSpec {
        target,
        transition,
        rabi: p.rabi,
        phase: 0.0,
        window_ns,
    }
}

fn drive_segment(p: &DeviceParams, label: &str, target: NveId, transition: Transition, area: f64) -> ControlSegment {
    let t = Areas(p).drive(area);
    ControlSegment {
        drives: vec![drive(target, transition, p, None)],
        ..ControlSegment::idle(p, label, t)
    }
}

fn resonance(p: &DeviceParams, label: &str, k: NveId, duration: f64, role: SegmentRole) -> ControlSegment {
    let mut s = ControlSegment::idle(p, label, duration);
    match k {
        NveId::Nve1 => s.nve1_freq = p.omega_a,
        NveId::Nve2 => s.nve2_freq = p.omega_b,
    }
    s.role = role;
    s
}

fn bus(p: &DeviceParams, label: &str, from: DeviceKet, to: DeviceKet) -> ControlSegment {
    ControlSegment {
        spq_coupling: p.g_on,
        role: SegmentRole::Transfer { from, to },
        ..ControlSegment::idle(p, label, Areas(p).bus())
    }
}

/// NVE1 resonance of `gt` area alongside an NVE2 `U↔0` rotation of
/// `drive_area`; the shorter one switches off early.
fn composite(p: &DeviceParams, label: &str, gt: f64, drive_area: f64) -> ControlSegment {
    let a = Areas(p);
    let t_res = a.nve_area(NveId::Nve1, gt);
    let t_drive = a.drive(drive_area);
    let duration = t_res.max(t_drive);
    let mut s = resonance(p, label, NveId::Nve1, duration, SegmentRole::Composite);
    if t_res < duration {
        s.nve1_window_ns = Some(t_res);
    }
    let window = (t_drive < duration).then_some(t_drive);
    s.drives = vec![drive(NveId::Nve2, Transition::U0, p, window)];
    s
}

fn logical_basis() -> [DeviceKet; 4] {
    [
        DeviceKet::nves(Zero, Zero),
        DeviceKet::nves(Zero, One),
        DeviceKet::nves(One, Zero),
        DeviceKet::nves(One, One),
    ]
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StateTransfer;

impl Protocol for StateTransfer {
    fn id(&self) -> &'static str {
        "state_transfer"
    }

    fn summary(&self) -> &'static str {
        "five-step transfer of an NVE1 qubit to NVE2 through the bus"
    }

    fn default_params(&self) -> DeviceParams {
        DeviceParams::paper_state_transfer()
    }

    fn compile_formula(&self, p: &DeviceParams) -> Result<Timeline, ProtocolError> {
        p.validate()?;
        let a = Areas(p);
        let segments = vec![
            drive_segment(p, "rotate_nve1", NveId::Nve1, Transition::U1, PI),
            resonance(
                p,
                "nve1_to_tlr_a",
                NveId::Nve1,
                a.nve_transfer(NveId::Nve1),
                SegmentRole::Transfer {
                    from: ket(Zero, 0, 0, U),
                    to: ket(U, 1, 0, U),
                },
            ),
            bus(p, "tlr_a_to_tlr_b", ket(U, 1, 0, U), ket(U, 0, 1, U)),
            resonance(
                p,
                "tlr_b_to_nve2",
                NveId::Nve2,
                a.nve_transfer(NveId::Nve2),
                SegmentRole::Transfer {
                    from: ket(U, 0, 1, U),
                    to: ket(U, 0, 0, Zero),
                },
            ),
            drive_segment(p, "rotate_nve2", NveId::Nve2, Transition::U1, 3.0 * PI),
        ];
        Ok(Timeline::new(self.id(), segments))
    }

    fn task(&self) -> LogicalTask {
        LogicalTask::Transfer(TransferTask {
            inputs: [DeviceKet::nves(Zero, U), DeviceKet::nves(One, U)],
            targets: [(ONE, DeviceKet::nves(U, Zero)), (ONE, DeviceKet::nves(U, One))],
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CPhase;

impl Protocol for CPhase {
    fn id(&self) -> &'static str {
        "cphase"
    }

    fn summary(&self) -> &'static str {
        "five-step controlled phase diag(1,1,-1,1) on the two NVEs"
    }

    fn default_params(&self) -> DeviceParams {
        DeviceParams::paper_cphase()
    }

    fn compile_formula(&self, p: &DeviceParams) -> Result<Timeline, ProtocolError> {
        p.validate()?;
        let segments = vec![
            composite(p, "nve1_to_tlr_a+rotate_nve2", PI / 2.0, PI),
            bus(p, "tlr_a_to_tlr_b", ket(U, 1, 0, U), ket(U, 0, 1, U)),
            resonance(
                p,
                "tlr_b_nve2_cycle",
                NveId::Nve2,
                Areas(p).nve_area(NveId::Nve2, PI),
                SegmentRole::PhaseFlip,
            ),
            bus(p, "tlr_b_to_tlr_a", ket(U, 0, 1, U), ket(U, 1, 0, U)),
            composite(p, "tlr_a_to_nve1+rotate_nve2", 1.5 * PI, PI),
        ];
        Ok(Timeline::new(self.id(), segments))
    }

    fn task(&self) -> LogicalTask {
        let mut m = Matrix4::identity();
        m[(2, 2)] = -ONE;
        LogicalTask::Gate(GateTask {
            basis: logical_basis(),
            target: m,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Cnot;

impl Protocol for Cnot {
    fn id(&self) -> &'static str {
        "cnot"
    }

    fn summary(&self) -> &'static str {
        "nine-step NOT on NVE2 conditioned on NVE1 in |0>"
    }

    fn default_params(&self) -> DeviceParams {
        DeviceParams::paper_cnot()
    }

    fn compile_formula(&self, p: &DeviceParams) -> Result<Timeline, ProtocolError> {
        p.validate()?;
        let a = Areas(p);
        let absorb = || SegmentRole::Transfer {
            from: ket(U, 0, 1, U),
            to: ket(U, 0, 0, Zero),
        };
        let t2 = a.nve_transfer(NveId::Nve2);
        let segments = vec![
            composite(p, "nve1_to_tlr_a+rotate_nve2", PI / 2.0, PI),
            bus(p, "tlr_a_to_tlr_b", ket(U, 1, 0, U), ket(U, 0, 1, U)),
            resonance(p, "tlr_b_to_nve2", NveId::Nve2, t2, absorb()),
            drive_segment(p, "rotate_nve2_u1", NveId::Nve2, Transition::U1, PI),
            resonance(p, "tlr_b_to_nve2_again", NveId::Nve2, t2, absorb()),
            drive_segment(p, "rotate_nve2_u1_3pi", NveId::Nve2, Transition::U1, 3.0 * PI),
            resonance(
                p,
                "nve2_to_tlr_b",
                NveId::Nve2,
                t2,
                SegmentRole::Transfer {
                    from: ket(U, 0, 0, Zero),
                    to: ket(U, 0, 1, U),
                },
            ),
            bus(p, "tlr_b_to_tlr_a", ket(U, 0, 1, U), ket(U, 1, 0, U)),
            composite(p, "tlr_a_to_nve1+rotate_nve2_3pi", PI / 2.0, 3.0 * PI),
        ];
        Ok(Timeline::new(self.id(), segments))
    }

    fn task(&self) -> LogicalTask {
        let mut m = Matrix4::zeros();
        m[(0, 1)] = ONE;
        m[(1, 0)] = ONE;
        m[(2, 2)] = ONE;
        m[(3, 3)] = ONE;
        LogicalTask::Gate(GateTask {
            basis: logical_basis(),
            target: m,
        })
    }
}

/// Four-step transfer for strong NVE couplings: the amplitude on `|0⟩₁`
/// travels through the bus while the `|U⟩₁` amplitude is rebuilt on NVE2
/// by a single rotation.
#[derive(Debug, Clone, Copy, Default)]
pub struct FastTransfer;

impl Protocol for FastTransfer {
    fn id(&self) -> &'static str {
        "fast_transfer"
    }

    fn summary(&self) -> &'static str {
        "four-step transfer for strongly coupled NVEs"
    }

    fn default_params(&self) -> DeviceParams {
        DeviceParams::paper_fast_transfer()
    }

    fn compile_formula(&self, p: &DeviceParams) -> Result<Timeline, ProtocolError> {
        let mut tl = StateTransfer.compile_formula(p)?;
        tl.segments.remove(0);
        tl.segments.pop();
        tl.segments
            .push(drive_segment(p, "rotate_nve2", NveId::Nve2, Transition::U1, PI));
        tl.name = self.id().to_string();
        Ok(tl)
    }

    fn task(&self) -> LogicalTask {
        LogicalTask::Transfer(TransferTask {
            inputs: [DeviceKet::nves(Zero, U), DeviceKet::nves(U, U)],
            targets: [(ONE, DeviceKet::nves(U, Zero)), (-I, DeviceKet::nves(U, One))],
        })
    }
}
