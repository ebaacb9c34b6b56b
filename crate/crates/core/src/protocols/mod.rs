//! Protocol compilers: control tables to timelines, plus duration calibration.

mod calibrate;
mod catalog;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

pub use calibrate::{calibrate_segment, calibrate_with, CalibrationResult, CalibrationStatus};
pub use catalog::{CPhase, Cnot, FastTransfer, StateTransfer};

use crate::error::ProtocolError;
use crate::model::{DeviceKet, DeviceParams, Freq, SegmentRole};
use crate::propagate::{Simulator, Timeline};
use crate::tensorspace::C64;

/// Two inputs mapped onto two weighted targets. Input 0 carries `sin θ`,
/// input 1 carries `cos θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTask {
    pub inputs: [DeviceKet; 2],
    pub targets: [(C64, DeviceKet); 2],
}

/// Two-NVE gate on `basis` (ordered `00, 01, 10, 11`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateTask {
    pub basis: [DeviceKet; 4],
    pub target: Matrix4<C64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogicalTask {
    Transfer(TransferTask),
    Gate(GateTask),
}

pub trait Protocol: Send + Sync + fmt::Debug {
    fn id(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    fn default_params(&self) -> DeviceParams;
    /// Timeline with durations from the pulse-area formulas.
    fn compile_formula(&self, params: &DeviceParams) -> Result<Timeline, ProtocolError>;
    fn task(&self) -> LogicalTask;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationPolicy {
    Formula,
    #[default]
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g1: Option<Freq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2: Option<Freq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_on: Option<Freq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_off: Option<Freq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rabi: Option<Freq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
}

impl ParamOverrides {
    pub fn apply(&self, p: &DeviceParams) -> DeviceParams {
        DeviceParams {
            g1: self.g1.unwrap_or(p.g1),
            g2: self.g2.unwrap_or(p.g2),
            g_on: self.g_on.unwrap_or(p.g_on),
            g_off: self.g_off.unwrap_or(p.g_off),
            rabi: self.rabi.unwrap_or(p.rabi),
            n_max: self.n_max.unwrap_or(p.n_max),
            ..p.clone()
        }
    }
}

pub const PROTOCOL_IDS: [&str; 4] = ["state_transfer", "cphase", "cnot", "fast_transfer"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub id: String,
    #[serde(default)]
    pub policy: CalibrationPolicy,
    #[serde(default)]
    pub overrides: ParamOverrides,
}

impl ProtocolSpec {
    pub fn new(id: &str, policy: CalibrationPolicy) -> Result<Self, ProtocolError> {
        if !PROTOCOL_IDS.contains(&id) {
            return Err(ProtocolError::Unknown(id.to_string()));
        }
        Ok(Self {
            id: id.to_string(),
            policy,
            overrides: ParamOverrides::default(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct CompiledProtocol {
    pub id: String,
    pub params: DeviceParams,
    pub timeline: Timeline,
    pub calibrations: Vec<CalibrationResult>,
    pub task: LogicalTask,
}

/// Protocol compilers by id.
#[derive(Debug, Clone)]
pub struct ProtocolRegistry {
    entries: BTreeMap<String, Arc<dyn Protocol>>,
}

impl ProtocolRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, p: Arc<dyn Protocol>) -> Option<Arc<dyn Protocol>> {
        self.entries.insert(p.id().to_string(), p)
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn Protocol>, ProtocolError> {
        self.entries
            .get(id)
            .cloned()
            .ok_or_else(|| ProtocolError::Unknown(id.to_string()))
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn compile(&self, spec: &ProtocolSpec, params: &DeviceParams) -> Result<CompiledProtocol, ProtocolError> {
        let proto = self.get(&spec.id)?;
        let params = spec.overrides.apply(params);
        params.validate()?;
        let mut timeline = proto.compile_formula(&params)?;
        let mut calibrations = Vec::new();
        if spec.policy == CalibrationPolicy::Calibrated {
            calibrations = calibrate_transfers(&params, &timeline)?;
            for c in &calibrations {
                timeline.segments[c.segment_index].duration_ns = c.calibrated_ns;
            }
        }
        Ok(CompiledProtocol {
            id: spec.id.clone(),
            params,
            timeline,
            calibrations,
            task: proto.task(),
        })
    }
}

impl Default for ProtocolRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(StateTransfer));
        r.register(Arc::new(CPhase));
        r.register(Arc::new(Cnot));
        r.register(Arc::new(FastTransfer));
        r
    }
}

/// Calibrates every transfer segment of `tl` against its formula duration.
pub fn calibrate_transfers(params: &DeviceParams, tl: &Timeline) -> Result<Vec<CalibrationResult>, ProtocolError> {
    let sim = Simulator::new(params.clone())?;
    let mut out = Vec::new();
    for (i, seg) in tl.segments.iter().enumerate() {
        if let SegmentRole::Transfer { from, to } = seg.role {
            let src = sim.basis_state(from)?;
            let dst = sim.basis_state(to)?;
            out.push(calibrate_with(&sim, i, seg, &src, &dst, seg.formula_duration_ns)?);
        }
    }
    Ok(out)
}

fn compile_as(id: &str, params: &DeviceParams, spec: &ProtocolSpec) -> Result<CompiledProtocol, ProtocolError> {
    let spec = ProtocolSpec {
        id: id.to_string(),
        ..spec.clone()
    };
    ProtocolRegistry::default().compile(&spec, params)
}

pub fn compile_state_transfer(params: &DeviceParams, spec: &ProtocolSpec) -> Result<CompiledProtocol, ProtocolError> {
    compile_as("state_transfer", params, spec)
}

pub fn compile_cphase(params: &DeviceParams, spec: &ProtocolSpec) -> Result<CompiledProtocol, ProtocolError> {
    compile_as("cphase", params, spec)
}

pub fn compile_cnot(params: &DeviceParams, spec: &ProtocolSpec) -> Result<CompiledProtocol, ProtocolError> {
    compile_as("cnot", params, spec)
}

/// Four-step variant, always calibrated.
pub fn compile_fast_transfer(params: &DeviceParams) -> Result<CompiledProtocol, ProtocolError> {
    let spec = ProtocolSpec::new("fast_transfer", CalibrationPolicy::Calibrated)?;
    ProtocolRegistry::default().compile(&spec, params)
}

pub fn timeline_to_document(tl: &Timeline) -> String {
    serde_json::to_string_pretty(tl).expect("timeline serializes")
}

pub fn timeline_from_document(text: &str) -> Result<Timeline, ProtocolError> {
    serde_json::from_str(text).map_err(|e| ProtocolError::Document(e.to_string()))
}
