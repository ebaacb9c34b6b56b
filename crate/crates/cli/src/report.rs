use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use nvbus_core::analysis::FidelityReport;
use nvbus_core::protocols::CalibrationResult;
use nvbus_core::Timeline;

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub index: usize,
    pub label: String,
    pub formula_ns: f64,
    pub duration_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineSummary {
    pub name: String,
    pub total_ns: f64,
    pub segments: Vec<SegmentSummary>,
}

impl TimelineSummary {
    pub fn new(tl: &Timeline) -> Self {
        Self {
            name: tl.name.clone(),
            total_ns: tl.total_duration(),
            segments: tl
                .segments
                .iter()
                .enumerate()
                .map(|(index, s)| SegmentSummary {
                    index,
                    label: s.label.clone(),
                    formula_ns: s.formula_duration_ns,
                    duration_ns: s.duration_ns,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSummary {
    pub metric: f64,
    pub leakage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub angular: BTreeMap<String, f64>,
    pub hilbert_dim: usize,
    pub propagator: String,
    pub timeline: TimelineSummary,
    pub calibrations: Vec<CalibrationResult>,
    pub fidelity: FidelityReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateSummary>,
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assertion: Option<AssertionOutcome>,
    pub timing: Timing,
}

impl RunReport {
    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_document(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
