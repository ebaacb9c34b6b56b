//! Run configuration as read from disk. Frequencies are linear (ω/2π) with the
//! unit in the key name.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use nvbus_core::protocols::{CalibrationPolicy, PROTOCOL_IDS};
use nvbus_core::{DeviceParams, Freq, FrameConvention, Mode, ModelError};

use crate::CliError;

pub const BUNDLED: [(&str, &str); 4] = [
    ("paper_state_transfer", include_str!("../configs/paper_state_transfer.json")),
    ("paper_cphase", include_str!("../configs/paper_cphase.json")),
    ("paper_cnot", include_str!("../configs/paper_cnot.json")),
    ("paper_fast_transfer", include_str!("../configs/paper_fast_transfer.json")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    #[serde(rename = "omega_a_over_2pi_GHz")]
    pub omega_a_ghz: f64,
    #[serde(rename = "omega_b_over_2pi_GHz")]
    pub omega_b_ghz: f64,
    #[serde(rename = "omega_eg_over_2pi_GHz")]
    pub omega_eg_ghz: f64,
    #[serde(rename = "omega_nve1_1_over_2pi_GHz")]
    pub omega_nve1_1_ghz: f64,
    #[serde(rename = "omega_nve2_1_over_2pi_GHz")]
    pub omega_nve2_1_ghz: f64,
    #[serde(rename = "omega_nve1_0_detuned_over_2pi_GHz")]
    pub omega_nve1_0_detuned_ghz: f64,
    #[serde(rename = "omega_nve2_0_detuned_over_2pi_GHz")]
    pub omega_nve2_0_detuned_ghz: f64,
    #[serde(rename = "g_on_over_2pi_MHz")]
    pub g_on_mhz: f64,
    #[serde(rename = "g_off_over_2pi_MHz")]
    pub g_off_mhz: f64,
    #[serde(rename = "g1_over_2pi_MHz")]
    pub g1_mhz: f64,
    #[serde(rename = "g2_over_2pi_MHz")]
    pub g2_mhz: f64,
    #[serde(rename = "rabi_over_2pi_MHz")]
    pub rabi_mhz: f64,
    pub n_max: usize,
}

/// Core field name to config key.
const KEYS: [(&str, &str); 13] = [
    ("omega_a", "omega_a_over_2pi_GHz"),
    ("omega_b", "omega_b_over_2pi_GHz"),
    ("omega_eg", "omega_eg_over_2pi_GHz"),
    ("omega_nve1_1", "omega_nve1_1_over_2pi_GHz"),
    ("omega_nve2_1", "omega_nve2_1_over_2pi_GHz"),
    ("omega_nve1_0_detuned", "omega_nve1_0_detuned_over_2pi_GHz"),
    ("omega_nve2_0_detuned", "omega_nve2_0_detuned_over_2pi_GHz"),
    ("g_on", "g_on_over_2pi_MHz"),
    ("g_off", "g_off_over_2pi_MHz"),
    ("g1", "g1_over_2pi_MHz"),
    ("g2", "g2_over_2pi_MHz"),
    ("rabi", "rabi_over_2pi_MHz"),
    ("n_max", "n_max"),
];

pub fn config_key(core_field: &str) -> &str {
    KEYS.iter()
        .find(|(c, _)| *c == core_field)
        .map(|(_, k)| *k)
        .unwrap_or(core_field)
}

impl DeviceConfig {
    pub fn to_params(&self) -> DeviceParams {
        DeviceParams {
            omega_a: Freq::ghz(self.omega_a_ghz),
            omega_b: Freq::ghz(self.omega_b_ghz),
            omega_eg: Freq::ghz(self.omega_eg_ghz),
            omega_nve1_1: Freq::ghz(self.omega_nve1_1_ghz),
            omega_nve2_1: Freq::ghz(self.omega_nve2_1_ghz),
            omega_nve1_0_detuned: Freq::ghz(self.omega_nve1_0_detuned_ghz),
            omega_nve2_0_detuned: Freq::ghz(self.omega_nve2_0_detuned_ghz),
            g_on: Freq::mhz(self.g_on_mhz),
            g_off: Freq::mhz(self.g_off_mhz),
            g1: Freq::mhz(self.g1_mhz),
            g2: Freq::mhz(self.g2_mhz),
            rabi: Freq::mhz(self.rabi_mhz),
            n_max: self.n_max,
        }
    }

    pub fn from_params(p: &DeviceParams) -> Self {
        Self {
            omega_a_ghz: p.omega_a.as_ghz(),
            omega_b_ghz: p.omega_b.as_ghz(),
            omega_eg_ghz: p.omega_eg.as_ghz(),
            omega_nve1_1_ghz: p.omega_nve1_1.as_ghz(),
            omega_nve2_1_ghz: p.omega_nve2_1.as_ghz(),
            omega_nve1_0_detuned_ghz: p.omega_nve1_0_detuned.as_ghz(),
            omega_nve2_0_detuned_ghz: p.omega_nve2_0_detuned.as_ghz(),
            g_on_mhz: p.g_on.as_mhz(),
            g_off_mhz: p.g_off.as_mhz(),
            g1_mhz: p.g1.as_mhz(),
            g2_mhz: p.g2.as_mhz(),
            rabi_mhz: p.rabi.as_mhz(),
            n_max: p.n_max,
        }
    }

    /// Angular frequencies in rad/ns keyed `<field>_rad_per_ns`.
    pub fn angular(&self) -> BTreeMap<String, f64> {
        let p = self.to_params();
        let freqs = [
            ("omega_a", p.omega_a),
            ("omega_b", p.omega_b),
            ("omega_eg", p.omega_eg),
            ("omega_nve1_1", p.omega_nve1_1),
            ("omega_nve2_1", p.omega_nve2_1),
            ("omega_nve1_0_detuned", p.omega_nve1_0_detuned),
            ("omega_nve2_0_detuned", p.omega_nve2_0_detuned),
            ("g_on", p.g_on),
            ("g_off", p.g_off),
            ("g1", p.g1),
            ("g2", p.g2),
            ("rabi", p.rabi),
        ];
        freqs
            .iter()
            .map(|(k, f)| (format!("{k}_rad_per_ns"), f.rad_per_ns()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_csv: Option<String>,
    #[serde(default)]
    pub density_csv: bool,
}

fn default_report() -> String {
    "report.json".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            report: default_report(),
            trajectory_csv: None,
            density_csv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: String,
    #[serde(default)]
    pub policy: CalibrationPolicy,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagator: Option<String>,
    #[serde(default)]
    pub frame: FrameConvention,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_ns: Option<f64>,
    #[serde(default = "default_grid")]
    pub theta_grid: usize,
    pub device: DeviceConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn default_mode() -> Mode {
    Mode::Full
}

fn default_grid() -> usize {
    nvbus_core::analysis::DEFAULT_GRID
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Bundled name or path to a JSON file.
    pub fn load(name_or_path: &str) -> Result<Self, CliError> {
        if let Some((_, text)) = BUNDLED.iter().find(|(n, _)| *n == name_or_path) {
            return Self::parse(text);
        }
        let text = std::fs::read_to_string(Path::new(name_or_path))
            .map_err(|e| CliError::Config(format!("{name_or_path}: {e}")))?;
        Self::parse(&text)
    }

    /// Calibration targets the full model, so effective runs keep the
    /// formula durations.
    pub fn applied_policy(&self) -> CalibrationPolicy {
        match self.mode {
            Mode::Effective => CalibrationPolicy::Formula,
            Mode::Full => self.policy,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, reason: &str| Err(CliError::Config(format!("{field}: {reason}")));
        if !PROTOCOL_IDS.contains(&self.protocol.as_str()) {
            return bad("protocol", &format!("unknown protocol {:?}", self.protocol));
        }
        if self.theta_grid < nvbus_core::analysis::MIN_GRID {
            return bad("theta_grid", &format!("must be at least {}", nvbus_core::analysis::MIN_GRID));
        }
        if let Some(h) = self.step_ns {
            if !(h > 0.0 && h.is_finite()) {
                return bad("step_ns", "must be positive and finite");
            }
        }
        if let Some(name) = &self.propagator {
            if nvbus_core::propagate::PropagatorRegistry::default().get(name).is_err() {
                return bad("propagator", &format!("unknown propagator {name:?}"));
            }
        }
        for (field, name) in [("outputs.report", Some(&self.outputs.report)), ("outputs.trajectory_csv", self.outputs.trajectory_csv.as_ref())] {
            if let Some(name) = name {
                if name.is_empty() || Path::new(name).file_name().is_none() {
                    return bad(field, "must name a file");
                }
            }
        }
        match self.device.to_params().validate() {
            Ok(()) => Ok(()),
            Err(ModelError::Param { field, reason }) => bad(&format!("device.{}", config_key(field)), &reason),
            Err(e) => Err(CliError::Config(e.to_string())),
        }
    }
}
