//! Time evolution through control segments and timelines.

mod registry;
mod strategies;

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use registry::PropagatorRegistry;
pub use strategies::{Exact, Hybrid, PieceContext, PieceEvolver, Propagator, Rk4};

use crate::error::{ModelError, PropagateError};
use crate::model::{
    excitation_number, ControlSegment, DeviceKet, DeviceParams, FrameLedger, Mode, PieceHamiltonian, TermSelection,
};
use crate::tensorspace::{max_abs_vec, slot, CVector, Frame, PureState, SubsystemLayout, C64};

const NORM_DRIFT_LIMIT: f64 = 1e-7;

/// How the interaction frame is carried across segment boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameConvention {
    /// Re-anchored to the lab frame at every segment start, so each segment's
    /// phase factors start from zero.
    #[default]
    Segment,
    /// One ledger accumulated over the whole timeline.
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timeline {
    pub name: String,
    pub segments: Vec<ControlSegment>,
}

impl Timeline {
    pub fn new(name: impl Into<String>, segments: Vec<ControlSegment>) -> Self {
        Self {
            name: name.into(),
            segments,
        }
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_ns).sum()
    }

    pub fn validate(&self, params: &DeviceParams) -> Result<(), ModelError> {
        self.segments.iter().try_for_each(|s| s.validate(params))
    }

    /// Start time of every segment.
    pub fn starts(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let t0 = t;
                t += s.duration_ns;
                t0
            })
            .collect()
    }
}

/// Uniform sampling of a run; `samples` includes both end points.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampling {
    pub samples: usize,
    pub tracked: Vec<DeviceKet>,
}

impl Sampling {
    pub const DEFAULT_SAMPLES: usize = 1000;

    pub fn new(tracked: Vec<DeviceKet>) -> Self {
        Self {
            samples: Self::DEFAULT_SAMPLES,
            tracked,
        }
    }

    pub fn final_only() -> Self {
        Self {
            samples: 0,
            tracked: Vec::new(),
        }
    }

    pub fn sample_times(&self, total: f64) -> Vec<f64> {
        match self.samples {
            0 => Vec::new(),
            1 => vec![total],
            n => (0..n).map(|k| total * k as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub tracked: Vec<DeviceKet>,
    /// `populations[k][j]`: population of `tracked[j]` at `times[k]`.
    pub populations: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    /// Population with at least two photons in either resonator.
    pub photon2: Vec<f64>,
    pub final_state: PureState,
    pub final_ledger: FrameLedger,
}

impl Trajectory {
    pub fn max_norm_drift(&self) -> f64 {
        self.norms
            .iter()
            .chain([self.final_state.norm()].iter())
            .fold(0.0, |m, n| m.max((n - 1.0).abs()))
    }

    pub fn max_photon2(&self) -> f64 {
        self.photon2.iter().fold(0.0, |m: f64, &p| m.max(p))
    }

    /// Columns `t_ns, norm, P_<ket>...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PropagateError> {
        let io = |e: csv::Error| PropagateError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t_ns".to_string(), "norm".to_string()];
        header.extend(self.tracked.iter().map(|k| format!("P_{k}")));
        w.write_record(&header).map_err(io)?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t}"), format!("{}", self.norms[k])];
            row.extend(self.populations[k].iter().map(|p| format!("{p}")));
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| PropagateError::Io(e.to_string()))
    }
}

struct PreparedPiece {
    segment: usize,
    start_abs: f64,
    len: f64,
    last_in_segment: bool,
    evolver: Box<dyn PieceEvolver>,
}

/// Timeline with every piece generator built, ready for many inputs.
pub struct PreparedTimeline {
    pieces: Vec<PreparedPiece>,
    labels: Vec<String>,
    total: f64,
    final_ledger: FrameLedger,
    layout: SubsystemLayout,
}

impl PreparedTimeline {
    pub fn total_duration(&self) -> f64 {
        self.total
    }

    pub fn final_ledger(&self) -> &FrameLedger {
        &self.final_ledger
    }

    /// Evolves `psi`, calling `observe` at each requested time (ascending).
    fn apply(
        &self,
        psi: &mut CVector,
        times: &[f64],
        mut observe: impl FnMut(f64, &CVector),
    ) -> Result<(), PropagateError> {
        let mut next = 0;
        while next < times.len() && times[next] <= 0.0 {
            observe(times[next], psi);
            next += 1;
        }
        for p in &self.pieces {
            let mut tau = 0.0;
            let end_abs = p.start_abs + p.len;
            while next < times.len() && times[next] < end_abs {
                let target = (times[next] - p.start_abs).max(0.0);
                p.evolver.advance(psi, tau, target)?;
                tau = target;
                observe(times[next], psi);
                next += 1;
            }
            p.evolver.advance(psi, tau, p.len)?;
            if p.last_in_segment {
                let drift = (psi.norm() - 1.0).abs();
                if drift > NORM_DRIFT_LIMIT {
                    return Err(PropagateError::NormDrift {
                        segment: self.labels[p.segment].clone(),
                        drift,
                    });
                }
            }
        }
        while next < times.len() {
            observe(times[next], psi);
            next += 1;
        }
        Ok(())
    }

    /// Runs `initial`, handing the state vector to `observe` at each of the
    /// ascending `times`.
    pub fn run_observed(
        &self,
        initial: &PureState,
        times: &[f64],
        observe: impl FnMut(f64, &CVector),
    ) -> Result<PureState, PropagateError> {
        check_input(initial, &self.layout)?;
        let mut psi = initial.amps().clone();
        self.apply(&mut psi, times, observe)?;
        Ok(PureState::from_raw(psi, Frame::Interaction))
    }

    pub fn run(&self, initial: &PureState) -> Result<PureState, PropagateError> {
        check_input(initial, &self.layout)?;
        let mut psi = initial.amps().clone();
        self.apply(&mut psi, &[], |_, _| {})?;
        Ok(PureState::from_raw(psi, Frame::Interaction))
    }
}

fn check_input(state: &PureState, layout: &SubsystemLayout) -> Result<(), PropagateError> {
    if state.dim() != layout.total_dim() {
        return Err(crate::error::ShapeError::Length {
            got: state.dim(),
            expected: layout.total_dim(),
        }
        .into());
    }
    let n = state.norm();
    if (n - 1.0).abs() > 1e-9 {
        return Err(crate::error::ShapeError::NotNormalized(n).into());
    }
    Ok(())
}

/// Propagation settings bound to one parameter set.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: DeviceParams,
    layout: SubsystemLayout,
    excitations: Vec<f64>,
    mode: Mode,
    frame: FrameConvention,
    propagator: Arc<dyn Propagator>,
    step_ns: Option<f64>,
}

impl Simulator {
    pub fn new(params: DeviceParams) -> Result<Self, PropagateError> {
        params.validate()?;
        let layout = params.layout()?;
        Ok(Self {
            excitations: excitation_number(&layout),
            layout,
            params,
            mode: Mode::Full,
            frame: FrameConvention::Segment,
            propagator: Arc::new(Hybrid),
            step_ns: None,
        })
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_frame(mut self, frame: FrameConvention) -> Self {
        self.frame = frame;
        self
    }

    pub fn with_propagator(mut self, p: Arc<dyn Propagator>) -> Self {
        self.propagator = p;
        self
    }

    /// Fixed integrator step in ns, replacing the default bound.
    pub fn with_step(mut self, step_ns: Option<f64>) -> Self {
        self.step_ns = step_ns;
        self
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn frame(&self) -> FrameConvention {
        self.frame
    }

    pub fn propagator_name(&self) -> &'static str {
        self.propagator.name()
    }

    /// Default step bound: `min(1/(40 f_max), Δt/100)`, `f_max` the largest
    /// transition frequency in GHz.
    pub fn default_step(&self, seg: &ControlSegment) -> f64 {
        let f_max = self.params.max_transition([seg.nve1_freq, seg.nve2_freq]);
        let cap = 1.0 / (40.0 * f_max);
        if seg.duration_ns > 0.0 {
            cap.min(seg.duration_ns / 100.0)
        } else {
            cap
        }
    }

    fn prepare_from(
        &self,
        segments: &[ControlSegment],
        mut ledger: FrameLedger,
    ) -> Result<PreparedTimeline, PropagateError> {
        ledger.check(&self.layout)?;
        let mut pieces = Vec::new();
        let mut t_abs = 0.0;
        for (si, seg) in segments.iter().enumerate() {
            seg.validate(&self.params)?;
            if self.frame == FrameConvention::Segment {
                ledger.reanchor();
            }
            let at_start = ledger.clone();
            let parts = seg.pieces(&self.params);
            let count = parts.len();
            let max_step = self.step_ns.unwrap_or_else(|| self.default_step(seg));
            for (pi, piece) in parts.iter().enumerate() {
                let selection = match self.mode {
                    Mode::Full => TermSelection::all(),
                    Mode::Effective => TermSelection::effective(&self.params, seg.spq_coupling, piece.nve_freq),
                };
                let ham = PieceHamiltonian::build(
                    &self.params,
                    &self.layout,
                    seg.spq_coupling,
                    piece,
                    selection,
                    &at_start,
                );
                let phi0 = ledger.global(&self.layout);
                let ctx = PieceContext {
                    segment_label: &seg.label,
                    piece,
                    hamiltonian: &ham,
                    phi0: &phi0,
                    excitations: &self.excitations,
                    mode: self.mode,
                    max_step,
                };
                let evolver = self.propagator.prepare(&ctx)?;
                pieces.push(PreparedPiece {
                    segment: si,
                    start_abs: t_abs + piece.start,
                    len: piece.len(),
                    last_in_segment: pi + 1 == count,
                    evolver,
                });
                ledger.advance(&ham.local, piece.len());
            }
            t_abs += seg.duration_ns;
        }
        Ok(PreparedTimeline {
            pieces,
            labels: segments.iter().map(|s| s.label.clone()).collect(),
            total: t_abs,
            final_ledger: ledger,
            layout: self.layout.clone(),
        })
    }

    /// Evolver of a segment made of a single piece, from a fresh frame.
    pub fn single_piece_evolver(&self, seg: &ControlSegment) -> Result<Box<dyn PieceEvolver>, PropagateError> {
        let mut prepared = self.prepare_from(std::slice::from_ref(seg), FrameLedger::new(&self.layout))?;
        match prepared.pieces.len() {
            1 => Ok(prepared.pieces.pop().expect("one piece").evolver),
            n => Err(PropagateError::Unsupported {
                strategy: self.propagator.name().into(),
                segment: seg.label.clone(),
                reason: format!("expected one piece, found {n}"),
            }),
        }
    }

    pub fn prepare(&self, tl: &Timeline) -> Result<PreparedTimeline, PropagateError> {
        self.prepare_from(&tl.segments, FrameLedger::new(&self.layout))
    }

    /// Advances `state` through one segment. A lab-frame input is first moved
    /// into the frame described by `ledger`.
    pub fn propagate_segment(
        &self,
        state: &PureState,
        seg: &ControlSegment,
        ledger: &FrameLedger,
    ) -> Result<(PureState, FrameLedger), PropagateError> {
        check_input(state, &self.layout)?;
        ledger.check(&self.layout)?;
        let mut psi = state.amps().clone();
        if state.frame() == Frame::Lab {
            for (z, p) in psi.iter_mut().zip(ledger.global(&self.layout)) {
                *z *= C64::from_polar(1.0, p);
            }
        }
        let prepared = self.prepare_from(std::slice::from_ref(seg), ledger.clone())?;
        prepared.apply(&mut psi, &[], |_, _| {})?;
        Ok((
            PureState::from_raw(psi, Frame::Interaction),
            prepared.final_ledger,
        ))
    }

    pub fn run_timeline(
        &self,
        initial: &PureState,
        tl: &Timeline,
        sampling: &Sampling,
    ) -> Result<Trajectory, PropagateError> {
        check_input(initial, &self.layout)?;
        let prepared = self.prepare(tl)?;
        let idx: Vec<usize> = sampling
            .tracked
            .iter()
            .map(|k| k.index(&self.layout))
            .collect::<Result<_, _>>()?;
        let times = sampling.sample_times(prepared.total);
        let photon2_idx: Vec<usize> = (0..self.layout.total_dim())
            .filter(|&i| self.layout.level(i, slot::TLR_A) >= 2 || self.layout.level(i, slot::TLR_B) >= 2)
            .collect();
        let mut populations = Vec::with_capacity(times.len());
        let mut norms = Vec::with_capacity(times.len());
        let mut photon2 = Vec::with_capacity(times.len());
        let mut psi = initial.amps().clone();
        prepared.apply(&mut psi, &times, |_, v| {
            populations.push(idx.iter().map(|&i| v[i].norm_sqr()).collect());
            norms.push(v.norm());
            photon2.push(photon2_idx.iter().map(|&i| v[i].norm_sqr()).sum());
        })?;
        Ok(Trajectory {
            times,
            tracked: sampling.tracked.clone(),
            populations,
            norms,
            photon2,
            final_state: PureState::from_raw(psi, Frame::Interaction),
            final_ledger: prepared.final_ledger,
        })
    }

    pub fn run_final(&self, initial: &PureState, tl: &Timeline) -> Result<PureState, PropagateError> {
        self.prepare(tl)?.run(initial)
    }

    /// Runs independent inputs in parallel, sharing one preparation.
    pub fn run_many(&self, inputs: &[PureState], tl: &Timeline) -> Result<Vec<PureState>, PropagateError> {
        let prepared = self.prepare(tl)?;
        inputs.par_iter().map(|s| prepared.run(s)).collect()
    }

    pub fn basis_state(&self, ket: DeviceKet) -> Result<PureState, PropagateError> {
        Ok(PureState::basis(&self.layout, &ket.levels(), Frame::Interaction)?)
    }

    /// Normalized superposition `Σ c_k |ket_k⟩`.
    pub fn superposition(&self, terms: &[(C64, DeviceKet)]) -> Result<PureState, PropagateError> {
        let mut v = CVector::zeros(self.layout.total_dim());
        for (c, k) in terms {
            v[k.index(&self.layout)?] += *c;
        }
        Ok(PureState::normalized(v, Frame::Interaction)?)
    }
}

/// Advances `state` through `seg` with the default simulator settings.
pub fn propagate_segment(
    state: &PureState,
    seg: &ControlSegment,
    params: &DeviceParams,
    ledger: &FrameLedger,
) -> Result<(PureState, FrameLedger), PropagateError> {
    Simulator::new(params.clone())?.propagate_segment(state, seg, ledger)
}

/// Runs `tl` with the default simulator settings.
pub fn run_timeline(
    initial: &PureState,
    tl: &Timeline,
    params: &DeviceParams,
    sampling: &Sampling,
) -> Result<Trajectory, PropagateError> {
    Simulator::new(params.clone())?.run_timeline(initial, tl, sampling)
}

/// Largest final-amplitude difference between exact lab-frame evolution and
/// stepped interaction-frame evolution.
pub fn cross_check_frames(initial: &PureState, tl: &Timeline, params: &DeviceParams) -> Result<f64, PropagateError> {
    let base = Simulator::new(params.clone())?;
    cross_check_with(&base, initial, tl)
}

/// [`cross_check_frames`] under the mode and frame convention of `sim`.
pub fn cross_check_with(sim: &Simulator, initial: &PureState, tl: &Timeline) -> Result<f64, PropagateError> {
    let lab = sim.clone().with_propagator(Arc::new(Exact)).run_final(initial, tl)?;
    let stepped = sim.clone().with_propagator(Arc::new(Rk4)).run_final(initial, tl)?;
    Ok(max_abs_vec(&(lab.amps() - stepped.amps())))
}
