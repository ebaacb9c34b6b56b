//! Device parameters, control segments and Hamiltonian assembly.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ShapeError};
use crate::tensorspace::{slot, CMatrix, Operator, SubsystemLayout, C64};

/// Linear frequency stored in GHz; `rad_per_ns` gives the angular value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Freq(f64);

impl Freq {
    pub const ZERO: Freq = Freq(0.0);

    pub const fn ghz(v: f64) -> Self {
        Freq(v)
    }

    pub fn mhz(v: f64) -> Self {
        Freq(v * 1e-3)
    }

    pub fn from_rad_per_ns(w: f64) -> Self {
        Freq(w / TAU)
    }

    pub fn as_ghz(self) -> f64 {
        self.0
    }

    pub fn as_mhz(self) -> f64 {
        self.0 * 1e3
    }

    pub fn rad_per_ns(self) -> f64 {
        TAU * self.0
    }

    pub fn approx_eq(self, other: Freq) -> bool {
        (self.0 - other.0).abs() <= 1e-12 * self.0.abs().max(other.0.abs())
    }
}

impl fmt::Display for Freq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} GHz", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub omega_a: Freq,
    pub omega_b: Freq,
    pub omega_eg: Freq,
    pub omega_nve1_1: Freq,
    pub omega_nve2_1: Freq,
    pub omega_nve1_0_detuned: Freq,
    pub omega_nve2_0_detuned: Freq,
    pub g_on: Freq,
    pub g_off: Freq,
    pub g1: Freq,
    pub g2: Freq,
    pub rabi: Freq,
    pub n_max: usize,
}

impl DeviceParams {
    fn reference(resonator_ghz: f64, detuned_ghz: f64) -> Self {
        let w = Freq::ghz(resonator_ghz);
        let det = Freq::ghz(detuned_ghz);
        let dgs = Freq::ghz(2.88);
        Self {
            omega_a: w,
            omega_b: w,
            omega_eg: w,
            omega_nve1_1: dgs,
            omega_nve2_1: dgs,
            omega_nve1_0_detuned: det,
            omega_nve2_0_detuned: det,
            g_on: Freq::mhz(104.0),
            g_off: Freq::mhz(0.5),
            g1: Freq::mhz(16.0),
            g2: Freq::mhz(20.0),
            rabi: Freq::mhz(50.0),
            n_max: 2,
        }
    }

    pub fn paper_state_transfer() -> Self {
        Self::reference(1.3, 1.73)
    }

    pub fn paper_cphase() -> Self {
        Self::reference(1.4, 2.08)
    }

    /// The CNOT runs on the c-phase hardware point.
    pub fn paper_cnot() -> Self {
        Self::paper_cphase()
    }

    pub fn paper_fast_transfer() -> Self {
        Self {
            g1: Freq::mhz(70.0),
            g2: Freq::mhz(70.0),
            ..Self::paper_state_transfer()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("omega_a", self.omega_a),
            ("omega_b", self.omega_b),
            ("omega_eg", self.omega_eg),
            ("omega_nve1_1", self.omega_nve1_1),
            ("omega_nve2_1", self.omega_nve2_1),
            ("omega_nve1_0_detuned", self.omega_nve1_0_detuned),
            ("omega_nve2_0_detuned", self.omega_nve2_0_detuned),
            ("g_on", self.g_on),
            ("g_off", self.g_off),
            ("g1", self.g1),
            ("g2", self.g2),
            ("rabi", self.rabi),
        ];
        for (field, v) in fields {
            if !(v.as_ghz() > 0.0 && v.as_ghz().is_finite()) {
                return Err(param(field, format!("must be positive and finite, got {v}")));
            }
        }
        if self.n_max < 1 {
            return Err(param("n_max", "must be at least 1".into()));
        }
        if !(self.g_off < self.g1 && self.g_off < self.g2) {
            return Err(param("g_off", "must be below g1 and g2".into()));
        }
        if !(self.g_off < self.g_on) {
            return Err(param("g_on", "must exceed g_off".into()));
        }
        if !self.omega_eg.approx_eq(self.omega_a) {
            return Err(param("omega_eg", "must equal omega_a".into()));
        }
        if !self.omega_b.approx_eq(self.omega_a) {
            return Err(param("omega_b", "must equal omega_a".into()));
        }
        for (field, v) in [
            ("omega_nve1_1", self.omega_nve1_1),
            ("omega_nve2_1", self.omega_nve2_1),
            ("omega_nve1_0_detuned", self.omega_nve1_0_detuned),
            ("omega_nve2_0_detuned", self.omega_nve2_0_detuned),
        ] {
            if !(v > self.omega_a) || v.approx_eq(self.omega_a) {
                return Err(param(field, "must lie above the resonator frequency".into()));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<SubsystemLayout, ShapeError> {
        SubsystemLayout::device(self.n_max)
    }

    pub fn resonator(&self, nve: NveId) -> Freq {
        match nve {
            NveId::Nve1 => self.omega_a,
            NveId::Nve2 => self.omega_b,
        }
    }

    pub fn parked(&self, nve: NveId) -> Freq {
        match nve {
            NveId::Nve1 => self.omega_nve1_0_detuned,
            NveId::Nve2 => self.omega_nve2_0_detuned,
        }
    }

    pub fn upper(&self, nve: NveId) -> Freq {
        match nve {
            NveId::Nve1 => self.omega_nve1_1,
            NveId::Nve2 => self.omega_nve2_1,
        }
    }

    pub fn nve_coupling(&self, nve: NveId) -> Freq {
        match nve {
            NveId::Nve1 => self.g1,
            NveId::Nve2 => self.g2,
        }
    }

    /// Largest bare transition frequency for the given NVE settings, GHz.
    pub fn max_transition(&self, nve_freq: [Freq; 2]) -> f64 {
        [
            self.omega_a,
            self.omega_b,
            self.omega_eg,
            self.omega_nve1_1,
            self.omega_nve2_1,
            nve_freq[0],
            nve_freq[1],
        ]
        .iter()
        .fold(0.0, |m, f| m.max(f.as_ghz()))
    }
}

fn param(field: &'static str, reason: String) -> ModelError {
    ModelError::Param { field, reason }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NveId {
    Nve1,
    Nve2,
}

impl NveId {
    pub const BOTH: [NveId; 2] = [NveId::Nve1, NveId::Nve2];

    pub fn slot(self) -> usize {
        match self {
            NveId::Nve1 => slot::NVE1,
            NveId::Nve2 => slot::NVE2,
        }
    }

    pub fn resonator_slot(self) -> usize {
        match self {
            NveId::Nve1 => slot::TLR_A,
            NveId::Nve2 => slot::TLR_B,
        }
    }

    pub fn index(self) -> usize {
        match self {
            NveId::Nve1 => 0,
            NveId::Nve2 => 1,
        }
    }
}

/// Driven NVE transition: `U↔0` or `U↔1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transition {
    U0,
    U1,
}

impl Transition {
    pub fn upper_level(self) -> usize {
        match self {
            Transition::U0 => 1,
            Transition::U1 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub target: NveId,
    pub transition: Transition,
    #[serde(rename = "rabi_over_2pi_GHz")]
    pub rabi: Freq,
    #[serde(rename = "phase_rad")]
    pub phase: f64,
    /// Drive is on during `[0, window_ns)`; the whole segment when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_ns: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NveLevel {
    U,
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "1")]
    One,
}

impl NveLevel {
    pub fn index(self) -> usize {
        match self {
            NveLevel::U => 0,
            NveLevel::Zero => 1,
            NveLevel::One => 2,
        }
    }

    pub fn logical(bit: usize) -> Self {
        if bit == 0 {
            NveLevel::Zero
        } else {
            NveLevel::One
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpqLevel {
    G,
    E,
}

/// Product basis ket `|nve1, n_a, spq, n_b, nve2⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DeviceKet {
    pub nve1: NveLevel,
    pub a: usize,
    pub spq: SpqLevel,
    pub b: usize,
    pub nve2: NveLevel,
}

impl DeviceKet {
    pub const fn new(nve1: NveLevel, a: usize, spq: SpqLevel, b: usize, nve2: NveLevel) -> Self {
        Self {
            nve1,
            a,
            spq,
            b,
            nve2,
        }
    }

    /// Both NVEs given, resonators empty, SPQ in `g`.
    pub const fn nves(nve1: NveLevel, nve2: NveLevel) -> Self {
        Self::new(nve1, 0, SpqLevel::G, 0, nve2)
    }

    pub fn levels(&self) -> [usize; 5] {
        [
            self.nve1.index(),
            self.a,
            match self.spq {
                SpqLevel::G => 0,
                SpqLevel::E => 1,
            },
            self.b,
            self.nve2.index(),
        ]
    }

    pub fn index(&self, layout: &SubsystemLayout) -> Result<usize, ShapeError> {
        layout.index(&self.levels())
    }

    pub fn photons(&self) -> usize {
        self.a + self.b
    }
}

impl fmt::Display for DeviceKet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = |l: NveLevel| match l {
            NveLevel::U => "U",
            NveLevel::Zero => "0",
            NveLevel::One => "1",
        };
        let q = match self.spq {
            SpqLevel::G => "g",
            SpqLevel::E => "e",
        };
        write!(f, "{},{},{},{},{}", n(self.nve1), self.a, q, self.b, n(self.nve2))
    }
}

impl FromStr for DeviceKet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 5 {
            return Err(format!("ket `{s}` needs five comma-separated levels"));
        }
        let nve = |p: &str| match p {
            "U" => Ok(NveLevel::U),
            "0" => Ok(NveLevel::Zero),
            "1" => Ok(NveLevel::One),
            _ => Err(format!("bad NVE level `{p}`")),
        };
        let fock = |p: &str| p.parse::<usize>().map_err(|_| format!("bad photon number `{p}`"));
        let spq = match parts[2] {
            "g" => SpqLevel::G,
            "e" => SpqLevel::E,
            p => return Err(format!("bad SPQ level `{p}`")),
        };
        Ok(Self::new(nve(parts[0])?, fock(parts[1])?, spq, fock(parts[3])?, nve(parts[4])?))
    }
}

impl TryFrom<String> for DeviceKet {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<DeviceKet> for String {
    fn from(k: DeviceKet) -> String {
        k.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentRole {
    /// Single-NVE rotation with every coupling idle.
    Drive,
    /// Population transfer `from → to`; eligible for duration calibration.
    Transfer { from: DeviceKet, to: DeviceKet },
    /// Full Rabi cycle imprinting a sign.
    PhaseFlip,
    /// Simultaneous resonance and drive.
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSegment {
    pub label: String,
    pub duration_ns: f64,
    pub formula_duration_ns: f64,
    #[serde(rename = "g_over_2pi_GHz")]
    pub spq_coupling: Freq,
    #[serde(rename = "nve1_freq_over_2pi_GHz")]
    pub nve1_freq: Freq,
    #[serde(rename = "nve2_freq_over_2pi_GHz")]
    pub nve2_freq: Freq,
    /// NVE1 sits at `nve1_freq` during `[0, window)` and at its parking
    /// frequency afterwards; the whole segment when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nve1_window_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nve2_window_ns: Option<f64>,
    #[serde(default)]
    pub drives: Vec<DriveSpec>,
    pub role: SegmentRole,
}

/// Stretch of a segment over which the generator is piecewise constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub nve_freq: [Freq; 2],
    pub drives: Vec<DriveSpec>,
}

impl Piece {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

fn window_active(window: Option<f64>, t: f64, duration: f64) -> bool {
    match window {
        None => true,
        Some(w) => t < w || w >= duration,
    }
}

impl ControlSegment {
    /// Idle segment: coupler down, both NVEs parked.
    pub fn idle(params: &DeviceParams, label: &str, duration_ns: f64) -> Self {
        Self {
            label: label.to_string(),
            duration_ns,
            formula_duration_ns: duration_ns,
            spq_coupling: params.g_off,
            nve1_freq: params.omega_nve1_0_detuned,
            nve2_freq: params.omega_nve2_0_detuned,
            nve1_window_ns: None,
            nve2_window_ns: None,
            drives: Vec::new(),
            role: SegmentRole::Drive,
        }
    }

    pub fn nve_freq(&self, nve: NveId) -> Freq {
        match nve {
            NveId::Nve1 => self.nve1_freq,
            NveId::Nve2 => self.nve2_freq,
        }
    }

    fn nve_window(&self, nve: NveId) -> Option<f64> {
        match nve {
            NveId::Nve1 => self.nve1_window_ns,
            NveId::Nve2 => self.nve2_window_ns,
        }
    }

    pub fn validate(&self, params: &DeviceParams) -> Result<(), ModelError> {
        let err = |reason: String| ModelError::Segment {
            label: self.label.clone(),
            reason,
        };
        if !(self.duration_ns >= 0.0 && self.duration_ns.is_finite()) {
            return Err(err(format!("duration {} ns must be non-negative", self.duration_ns)));
        }
        let g = self.spq_coupling.as_ghz();
        if !(g > 0.0 && g <= params.g_on.as_ghz() * (1.0 + 1e-12)) {
            return Err(err(format!("SPQ coupling {} outside (0, g_on]", self.spq_coupling)));
        }
        for nve in NveId::BOTH {
            let f = self.nve_freq(nve);
            if !(f.as_ghz() > 0.0 && f.as_ghz().is_finite()) {
                return Err(err(format!("{nve:?} frequency must be positive")));
            }
            if let Some(w) = self.nve_window(nve) {
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(err(format!("{nve:?} window must be non-negative")));
                }
            }
        }
        for d in &self.drives {
            if !(d.rabi.as_ghz() >= 0.0 && d.rabi.as_ghz().is_finite()) {
                return Err(err("drive Rabi frequency must be non-negative".into()));
            }
            if !d.phase.is_finite() {
                return Err(err("drive phase must be finite".into()));
            }
            if let Some(w) = d.window_ns {
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(err("drive window must be non-negative".into()));
                }
            }
            if d.transition == Transition::U0 && self.nve_window(d.target).is_some() {
                return Err(err("a U↔0 drive needs a fixed transition frequency".into()));
            }
        }
        Ok(())
    }

    /// Splits the segment at every window edge.
    pub fn pieces(&self, params: &DeviceParams) -> Vec<Piece> {
        let t_end = self.duration_ns;
        let mut cuts = vec![0.0, t_end];
        let windows = self
            .drives
            .iter()
            .map(|d| d.window_ns)
            .chain([self.nve1_window_ns, self.nve2_window_ns]);
        for w in windows.flatten() {
            if w > 0.0 && w < t_end {
                cuts.push(w);
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2)
            .map(|c| self.piece_at(params, c[0], c[1]))
            .collect()
    }

    fn piece_at(&self, params: &DeviceParams, start: f64, end: f64) -> Piece {
        let nve_freq = NveId::BOTH.map(|k| {
            if window_active(self.nve_window(k), start, self.duration_ns) {
                self.nve_freq(k)
            } else {
                params.parked(k)
            }
        });
        let drives = self
            .drives
            .iter()
            .filter(|d| d.rabi.as_ghz() > 0.0 && window_active(d.window_ns, start, self.duration_ns))
            .cloned()
            .collect();
        Piece {
            start,
            end,
            nve_freq,
            drives,
        }
    }

    fn check_time(&self, t: f64) -> Result<(), ModelError> {
        if !(t >= 0.0 && t <= self.duration_ns) {
            return Err(ModelError::TimeOutOfRange {
                t,
                duration: self.duration_ns,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Full,
    Effective,
}

/// Per-level free energy of each subsystem, rad/ns, ground level at 0.
pub fn local_energies(params: &DeviceParams, nve_freq: [Freq; 2], layout: &SubsystemLayout) -> Vec<Vec<f64>> {
    let fock = |w: Freq, dim: usize| (0..dim).map(|n| n as f64 * w.rad_per_ns()).collect();
    let nve = |k: NveId| vec![0.0, nve_freq[k.index()].rad_per_ns(), params.upper(k).rad_per_ns()];
    vec![
        nve(NveId::Nve1),
        fock(params.omega_a, layout.dim(slot::TLR_A)),
        vec![0.0, params.omega_eg.rad_per_ns()],
        fock(params.omega_b, layout.dim(slot::TLR_B)),
        nve(NveId::Nve2),
    ]
}

pub fn free_energies(local: &[Vec<f64>], layout: &SubsystemLayout) -> Vec<f64> {
    (0..layout.total_dim())
        .map(|i| (0..layout.len()).map(|s| local[s][layout.level(i, s)]).sum())
        .collect()
}

/// `N_exc` diagonal: photons + SPQ excitation + NVE excitations.
pub fn excitation_number(layout: &SubsystemLayout) -> Vec<f64> {
    (0..layout.total_dim())
        .map(|i| {
            let l = layout.levels(i);
            let nve = |x: usize| if x > 0 { 1.0 } else { 0.0 };
            nve(l[slot::NVE1]) + l[slot::TLR_A] as f64 + l[slot::SPQ] as f64 + l[slot::TLR_B] as f64 + nve(l[slot::NVE2])
        })
        .collect()
}

/// Real coupling `value·(|row⟩⟨col| + |col⟩⟨row|)`, `row` the raised-photon state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// `amp·e^{-i(ω_d τ + lock)}|up⟩⟨low| + h.c.` in the lab frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveTerm {
    pub up: usize,
    pub low: usize,
    pub amp: C64,
    pub omega_d: f64,
    pub lock: f64,
}

/// Which coupling families enter the generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermSelection {
    pub spq: bool,
    pub nve_u0: [bool; 2],
    pub nve_u1: [bool; 2],
}

impl TermSelection {
    pub fn all() -> Self {
        Self {
            spq: true,
            nve_u0: [true; 2],
            nve_u1: [true; 2],
        }
    }

    /// Resonant terms only: the bus if the coupler is up, and any NVE sitting
    /// on its resonator.
    pub fn effective(params: &DeviceParams, spq_coupling: Freq, nve_freq: [Freq; 2]) -> Self {
        Self {
            spq: spq_coupling > params.g_off && !spq_coupling.approx_eq(params.g_off),
            nve_u0: NveId::BOTH.map(|k| nve_freq[k.index()].approx_eq(params.resonator(k))),
            nve_u1: [false; 2],
        }
    }
}

/// Generator of one piece in sparse form.
#[derive(Debug, Clone)]
pub struct PieceHamiltonian {
    pub local: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
    pub couplings: Vec<Coupling>,
    pub drives: Vec<DriveTerm>,
}

impl PieceHamiltonian {
    pub fn build(
        params: &DeviceParams,
        layout: &SubsystemLayout,
        spq_coupling: Freq,
        piece: &Piece,
        selection: TermSelection,
        ledger: &FrameLedger,
    ) -> Self {
        let local = local_energies(params, piece.nve_freq, layout);
        let energies = free_energies(&local, layout);
        let couplings = coupling_terms(params, layout, spq_coupling, selection);
        let drives = piece
            .drives
            .iter()
            .flat_map(|d| drive_terms(d, layout, &local, ledger))
            .collect();
        Self {
            local,
            energies,
            couplings,
            drives,
        }
    }

    /// Lab-frame matrix at segment-local time `tau`.
    pub fn lab_matrix(&self, tau: f64) -> CMatrix {
        let n = self.energies.len();
        let mut h = CMatrix::zeros(n, n);
        for (i, &e) in self.energies.iter().enumerate() {
            h[(i, i)] = C64::new(e, 0.0);
        }
        for c in &self.couplings {
            h[(c.row, c.col)] += c.value;
            h[(c.col, c.row)] += c.value;
        }
        for d in &self.drives {
            let v = d.amp * C64::from_polar(1.0, -(d.omega_d * tau + d.lock));
            h[(d.up, d.low)] += v;
            h[(d.low, d.up)] += v.conj();
        }
        h
    }

    /// Off-diagonal part conjugated by frame phases `phi`.
    pub fn interaction_matrix(&self, phi: &[f64], tau: f64) -> CMatrix {
        let n = self.energies.len();
        let mut h = CMatrix::zeros(n, n);
        for c in &self.couplings {
            let v = C64::from_polar(c.value, phi[c.row] - phi[c.col]);
            h[(c.row, c.col)] += v;
            h[(c.col, c.row)] += v.conj();
        }
        for d in &self.drives {
            let v = d.amp * C64::from_polar(1.0, phi[d.up] - phi[d.low] - d.omega_d * tau - d.lock);
            h[(d.up, d.low)] += v;
            h[(d.low, d.up)] += v.conj();
        }
        h
    }
}

/// Bus and NVE–resonator exchange terms in rotating-wave form.
pub fn coupling_terms(
    params: &DeviceParams,
    layout: &SubsystemLayout,
    spq_coupling: Freq,
    sel: TermSelection,
) -> Vec<Coupling> {
    let mut out = Vec::new();
    let g = spq_coupling.rad_per_ns();
    for col in 0..layout.total_dim() {
        let lv = layout.levels(col);
        // a†σ⁻ and b†σ⁻
        if sel.spq && lv[slot::SPQ] == 1 {
            for r in [slot::TLR_A, slot::TLR_B] {
                let n = lv[r];
                if n + 1 < layout.dim(r) {
                    let row = col - layout.stride(slot::SPQ) + layout.stride(r);
                    out.push(Coupling {
                        row,
                        col,
                        value: g * ((n + 1) as f64).sqrt(),
                    });
                }
            }
        }
        // a†S⁻_{1,x} and b†S⁻_{2,x}
        for k in NveId::BOTH {
            let s = k.slot();
            let r = k.resonator_slot();
            let level = lv[s];
            let on = match level {
                1 => sel.nve_u0[k.index()],
                2 => sel.nve_u1[k.index()],
                _ => false,
            };
            let n = lv[r];
            if on && n + 1 < layout.dim(r) {
                let row = col - level * layout.stride(s) + layout.stride(r);
                out.push(Coupling {
                    row,
                    col,
                    value: params.nve_coupling(k).rad_per_ns() * ((n + 1) as f64).sqrt(),
                });
            }
        }
    }
    out
}

fn drive_terms(d: &DriveSpec, layout: &SubsystemLayout, local: &[Vec<f64>], ledger: &FrameLedger) -> Vec<DriveTerm> {
    let s = d.target.slot();
    let up = d.transition.upper_level();
    let omega_d = local[s][up] - local[s][0];
    let lock = ledger.phase(s, up) - ledger.phase(s, 0);
    let amp = C64::from_polar(0.5 * d.rabi.rad_per_ns(), -d.phase);
    (0..layout.total_dim())
        .filter(|&i| layout.level(i, s) == 0)
        .map(|low| DriveTerm {
            up: low + up * layout.stride(s),
            low,
            amp,
            omega_d,
            lock,
        })
        .collect()
}

/// Accumulated free phase per subsystem level. The phase of a product basis
/// state is the sum over its subsystems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLedger {
    phases: Vec<Vec<f64>>,
    elapsed_ns: f64,
}

impl FrameLedger {
    pub fn new(layout: &SubsystemLayout) -> Self {
        Self {
            phases: layout.subsystems().iter().map(|s| vec![0.0; s.dim]).collect(),
            elapsed_ns: 0.0,
        }
    }

    pub fn check(&self, layout: &SubsystemLayout) -> Result<(), ModelError> {
        let ok = self.phases.len() == layout.len()
            && self.phases.iter().zip(layout.subsystems()).all(|(p, s)| p.len() == s.dim);
        if ok {
            Ok(())
        } else {
            Err(ModelError::LedgerMismatch)
        }
    }

    pub fn elapsed_ns(&self) -> f64 {
        self.elapsed_ns
    }

    pub fn phase(&self, slot: usize, level: usize) -> f64 {
        self.phases[slot][level]
    }

    pub fn advance(&mut self, local: &[Vec<f64>], dt: f64) {
        for (p, e) in self.phases.iter_mut().zip(local) {
            for (pl, el) in p.iter_mut().zip(e) {
                *pl += el * dt;
            }
        }
        self.elapsed_ns += dt;
    }

    /// Zeroes the phases: the frame now coincides with the lab frame.
    pub fn reanchor(&mut self) {
        for p in &mut self.phases {
            p.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn is_anchored(&self) -> bool {
        self.phases.iter().flatten().all(|&x| x == 0.0)
    }

    /// Phase of every product basis state.
    pub fn global(&self, layout: &SubsystemLayout) -> Vec<f64> {
        (0..layout.total_dim())
            .map(|i| (0..layout.len()).map(|s| self.phases[s][layout.level(i, s)]).sum())
            .collect()
    }
}

fn segment_ledger_at(
    params: &DeviceParams,
    layout: &SubsystemLayout,
    seg: &ControlSegment,
    ledger: &FrameLedger,
    t: f64,
) -> (Piece, FrameLedger) {
    let pieces = seg.pieces(params);
    let mut l = ledger.clone();
    let mut current = pieces.first().cloned().unwrap_or(Piece {
        start: 0.0,
        end: 0.0,
        nve_freq: [seg.nve1_freq, seg.nve2_freq],
        drives: seg.drives.clone(),
    });
    for p in pieces {
        if t < p.start {
            break;
        }
        current = p.clone();
        let local = local_energies(params, p.nve_freq, layout);
        l.advance(&local, t.min(p.end) - p.start);
        if t < p.end {
            break;
        }
    }
    (current, l)
}

/// Full lab-frame Hamiltonian at segment-local time `t`, with the frame
/// anchored at the segment start.
pub fn hamiltonian_lab(params: &DeviceParams, seg: &ControlSegment, t: f64) -> Result<Operator, ModelError> {
    let layout = params.layout()?;
    hamiltonian_lab_locked(params, seg, &FrameLedger::new(&layout), t)
}

/// As [`hamiltonian_lab`], with drive phases locked to `ledger`.
pub fn hamiltonian_lab_locked(
    params: &DeviceParams,
    seg: &ControlSegment,
    ledger: &FrameLedger,
    t: f64,
) -> Result<Operator, ModelError> {
    params.validate()?;
    seg.validate(params)?;
    seg.check_time(t)?;
    let layout = params.layout()?;
    ledger.check(&layout)?;
    let (piece, _) = segment_ledger_at(params, &layout, seg, ledger, t);
    let h = PieceHamiltonian::build(params, &layout, seg.spq_coupling, &piece, TermSelection::all(), ledger);
    Ok(Operator::hermitian(h.lab_matrix(t))?)
}

/// Interaction-picture Hamiltonian at segment-local time `t`, given the
/// ledger at the segment start.
pub fn hamiltonian_interaction(
    params: &DeviceParams,
    seg: &ControlSegment,
    ledger: &FrameLedger,
    t: f64,
) -> Result<Operator, ModelError> {
    params.validate()?;
    seg.validate(params)?;
    seg.check_time(t)?;
    let layout = params.layout()?;
    ledger.check(&layout)?;
    let (piece, at_t) = segment_ledger_at(params, &layout, seg, ledger, t);
    let h = PieceHamiltonian::build(params, &layout, seg.spq_coupling, &piece, TermSelection::all(), ledger);
    Ok(Operator::hermitian(h.interaction_matrix(&at_t.global(&layout), t))?)
}
