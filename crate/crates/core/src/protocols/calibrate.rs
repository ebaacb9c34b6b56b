use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ProtocolError;
use crate::model::{ControlSegment, DeviceParams, Mode};
use crate::propagate::{Exact, PieceEvolver, Simulator, Timeline};
use crate::tensorspace::{CVector, PureState};

const SCAN_POINTS: usize = 301;
const REFINE_TOL_NS: f64 = 1e-3;
/// Amplitude slack within which an earlier local maximum beats the best one.
const PEAK_TOL: f64 = 1e-3;
/// How far past a bracket edge the fitted optimum may sit, relative to the guess.
const EDGE_SLACK: f64 = 0.01;
const SANITY_BOUND: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CalibrationStatus {
    Converged,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub segment_index: usize,
    pub label: String,
    pub formula_ns: f64,
    pub calibrated_ns: f64,
    /// `|⟨target|ψ(T)⟩|²` at the returned duration.
    pub achieved: f64,
    #[serde(flatten)]
    pub status: CalibrationStatus,
}

impl CalibrationResult {
    pub fn converged(&self) -> bool {
        self.status == CalibrationStatus::Converged
    }
}

enum Objective<'a> {
    /// One static piece: a single evolver serves every duration.
    Static {
        evolver: Box<dyn PieceEvolver>,
        source: &'a CVector,
        target: &'a CVector,
    },
    General {
        sim: Simulator,
        seg: ControlSegment,
        source: &'a PureState,
        target: &'a PureState,
    },
}

impl Objective<'_> {
    fn amplitude(&self, t: f64) -> Result<f64, ProtocolError> {
        match self {
            Objective::Static {
                evolver,
                source,
                target,
            } => {
                let mut psi = (*source).clone();
                evolver.advance(&mut psi, 0.0, t)?;
                Ok(target.dotc(&psi).norm())
            }
            Objective::General {
                sim,
                seg,
                source,
                target,
            } => {
                let s = ControlSegment {
                    duration_ns: t,
                    ..seg.clone()
                };
                let out = sim.run_final(source, &Timeline::new("calibration", vec![s]))?;
                Ok(target.overlap(&out).norm())
            }
        }
    }
}

fn golden(obj: &Objective<'_>, mut a: f64, mut b: f64) -> Result<(f64, f64), ProtocolError> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = obj.amplitude(c)?;
    let mut fd = obj.amplitude(d)?;
    while b - a > REFINE_TOL_NS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = obj.amplitude(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = obj.amplitude(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, obj.amplitude(x)?))
}

/// Vertex of the parabola through three equally spaced samples.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<f64> {
    let h = x[1] - x[0];
    let curv = y[0] - 2.0 * y[1] + y[2];
    if curv >= 0.0 {
        return None;
    }
    Some(x[1] + 0.5 * h * (y[0] - y[2]) / curv)
}

/// Scans `[0.5·guess, 2·guess]` for the shortest near-best maximum of
/// `|⟨target|ψ(T)⟩|` and refines it by golden section.
pub fn calibrate_segment(
    params: &DeviceParams,
    seg: &ControlSegment,
    source: &PureState,
    target: &PureState,
    guess: f64,
) -> Result<CalibrationResult, ProtocolError> {
    let sim = Simulator::new(params.clone())?;
    calibrate_with(&sim, 0, seg, source, target, guess)
}

pub fn calibrate_with(
    sim: &Simulator,
    index: usize,
    seg: &ControlSegment,
    source: &PureState,
    target: &PureState,
    guess: f64,
) -> Result<CalibrationResult, ProtocolError> {
    let sim = sim.clone().with_mode(Mode::Full).with_propagator(Arc::new(Exact));
    let formula = seg.formula_duration_ns;
    let lo = 0.5 * guess;
    let hi = 2.0 * guess;
    let single_piece = seg.drives.is_empty() && seg.nve1_window_ns.is_none() && seg.nve2_window_ns.is_none();
    let obj = if single_piece && guess > 0.0 && guess.is_finite() {
        let probe = ControlSegment {
            duration_ns: hi,
            ..seg.clone()
        };
        Objective::Static {
            evolver: sim.single_piece_evolver(&probe)?,
            source: source.amps(),
            target: target.amps(),
        }
    } else {
        Objective::General {
            sim: sim.clone(),
            seg: seg.clone(),
            source,
            target,
        }
    };
    let result = |t: f64, status: CalibrationStatus| -> Result<CalibrationResult, ProtocolError> {
        let amp = if t > 0.0 { obj.amplitude(t)? } else { target.overlap(source).norm() };
        Ok(CalibrationResult {
            segment_index: index,
            label: seg.label.clone(),
            formula_ns: formula,
            calibrated_ns: t,
            achieved: amp * amp,
            status,
        })
    };
    let fail = |reason: &str| {
        result(
            formula,
            CalibrationStatus::Failed {
                reason: reason.to_string(),
            },
        )
    };
    if !(guess > 0.0 && guess.is_finite()) {
        return fail("degenerate bracket: guess must be positive");
    }

    let xs: Vec<f64> = (0..SCAN_POINTS)
        .map(|k| lo + (hi - lo) * k as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let ys = xs.iter().map(|&x| obj.amplitude(x)).collect::<Result<Vec<_>, _>>()?;
    let best = ys.iter().cloned().fold(f64::MIN, f64::max);
    let worst = ys.iter().cloned().fold(f64::MAX, f64::min);
    if best - worst < PEAK_TOL {
        return fail("flat objective over the bracket");
    }
    let last = SCAN_POINTS - 1;
    let peak = (0..SCAN_POINTS).find(|&i| {
        let left = i == 0 || ys[i] >= ys[i - 1];
        let right = i == last || ys[i] >= ys[i + 1];
        left && right && ys[i] >= best - PEAK_TOL
    });
    let Some(i) = peak else {
        return fail("no maximum in bracket");
    };
    let (a, b) = if i == 0 || i == last {
        let j = if i == 0 { 0 } else { last - 2 };
        let vertex = parabola_vertex([xs[j], xs[j + 1], xs[j + 2]], [ys[j], ys[j + 1], ys[j + 2]]);
        let slack = EDGE_SLACK * guess;
        let inside = match vertex {
            Some(v) if i == 0 => v >= lo - slack,
            Some(v) => v <= hi + slack,
            None => false,
        };
        if !inside {
            return fail("no interior maximum in bracket");
        }
        if i == 0 {
            (xs[0], xs[1])
        } else {
            (xs[last - 1], xs[last])
        }
    } else {
        (xs[i - 1], xs[i + 1])
    };
    let (t, _) = golden(&obj, a, b)?;
    if (t - formula).abs() > SANITY_BOUND * formula {
        return fail("optimum outside ±50% of the formula duration");
    }
    result(t, CalibrationStatus::Converged)
}
