use std::fmt;

use crate::error::PropagateError;
use crate::model::{Mode, Piece, PieceHamiltonian};
use crate::tensorspace::{eig_hermitian_matrix, CMatrix, CVector, Eigen, C64};

/// Everything a strategy needs to evolve one piece.
pub struct PieceContext<'a> {
    pub segment_label: &'a str,
    pub piece: &'a Piece,
    pub hamiltonian: &'a PieceHamiltonian,
    /// Frame phase of each basis state at the start of the piece.
    pub phi0: &'a [f64],
    /// `N_exc` diagonal.
    pub excitations: &'a [f64],
    pub mode: Mode,
    /// Upper bound on the integrator step, ns.
    pub max_step: f64,
}

/// Evolves interaction-frame amplitudes across a piece. Times are measured
/// from the piece start.
pub trait PieceEvolver: Send + Sync {
    fn advance(&self, psi: &mut CVector, from: f64, to: f64) -> Result<(), PropagateError>;
}

pub trait Propagator: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn prepare(&self, ctx: &PieceContext<'_>) -> Result<Box<dyn PieceEvolver>, PropagateError>;
}

/// Interaction-frame term `amp·e^{i freq τ}|row⟩⟨col| + h.c.`
#[derive(Debug, Clone, Copy)]
struct Term {
    row: usize,
    col: usize,
    amp: C64,
    freq: usize,
}

/// Sparse interaction-frame generator with phases grouped by frequency.
#[derive(Debug, Clone)]
struct SparseGenerator {
    dim: usize,
    freqs: Vec<f64>,
    terms: Vec<Term>,
}

impl SparseGenerator {
    fn new(ctx: &PieceContext<'_>) -> Self {
        let h = ctx.hamiltonian;
        let mut freqs: Vec<f64> = Vec::new();
        let mut slot = |f: f64| -> usize {
            match freqs.iter().position(|&x| (x - f).abs() <= 1e-12 * f.abs().max(1.0)) {
                Some(i) => i,
                None => {
                    freqs.push(f);
                    freqs.len() - 1
                }
            }
        };
        let mut terms = Vec::new();
        match ctx.mode {
            Mode::Full => {
                let e = &h.energies;
                let phi = ctx.phi0;
                for c in &h.couplings {
                    terms.push(Term {
                        row: c.row,
                        col: c.col,
                        amp: C64::from_polar(c.value, phi[c.row] - phi[c.col]),
                        freq: slot(e[c.row] - e[c.col]),
                    });
                }
                for d in &h.drives {
                    let t0 = ctx.piece.start;
                    terms.push(Term {
                        row: d.up,
                        col: d.low,
                        amp: d.amp * C64::from_polar(1.0, phi[d.up] - phi[d.low] - d.omega_d * t0 - d.lock),
                        freq: slot(e[d.up] - e[d.low] - d.omega_d),
                    });
                }
            }
            Mode::Effective => {
                for c in &h.couplings {
                    terms.push(Term {
                        row: c.row,
                        col: c.col,
                        amp: C64::new(c.value, 0.0),
                        freq: slot(0.0),
                    });
                }
                for d in &h.drives {
                    terms.push(Term {
                        row: d.up,
                        col: d.low,
                        amp: d.amp,
                        freq: slot(0.0),
                    });
                }
            }
        }
        Self {
            dim: h.energies.len(),
            freqs,
            terms,
        }
    }

    /// `out = -i H(τ) ψ`
    fn apply(&self, tau: f64, psi: &CVector, phasors: &mut [C64], out: &mut CVector) {
        for (p, &f) in phasors.iter_mut().zip(&self.freqs) {
            *p = C64::from_polar(1.0, f * tau);
        }
        out.fill(C64::new(0.0, 0.0));
        for t in &self.terms {
            let v = t.amp * phasors[t.freq];
            out[t.row] += v * psi[t.col];
            out[t.col] += v.conj() * psi[t.row];
        }
        for z in out.iter_mut() {
            *z = C64::new(z.im, -z.re);
        }
    }

    /// Dense constant generator; only meaningful when every frequency is 0.
    fn dense_static(&self) -> CMatrix {
        let mut h = CMatrix::zeros(self.dim, self.dim);
        for t in &self.terms {
            h[(t.row, t.col)] += t.amp;
            h[(t.col, t.row)] += t.amp.conj();
        }
        h
    }
}

/// Classical fixed-step RK4 on the interaction-frame generator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rk4;

struct Rk4Evolver {
    gen: SparseGenerator,
    max_step: f64,
    segment_end: f64,
}

impl PieceEvolver for Rk4Evolver {
    fn advance(&self, psi: &mut CVector, from: f64, to: f64) -> Result<(), PropagateError> {
        let span = to - from;
        if span <= 0.0 {
            return Ok(());
        }
        let n = (span / self.max_step - 1e-9).ceil().max(1.0) as usize;
        let h = span / n as f64;
        if h <= f64::EPSILON * self.segment_end.max(1.0) {
            return Err(PropagateError::StepUnderflow(h));
        }
        let dim = self.gen.dim;
        let mut ph = vec![C64::new(0.0, 0.0); self.gen.freqs.len()];
        let mut k1 = CVector::zeros(dim);
        let mut k2 = CVector::zeros(dim);
        let mut k3 = CVector::zeros(dim);
        let mut k4 = CVector::zeros(dim);
        let mut tmp = CVector::zeros(dim);
        for s in 0..n {
            let t = from + s as f64 * h;
            self.gen.apply(t, psi, &mut ph, &mut k1);
            tmp.copy_from(psi);
            tmp.axpy(C64::new(0.5 * h, 0.0), &k1, C64::new(1.0, 0.0));
            self.gen.apply(t + 0.5 * h, &tmp, &mut ph, &mut k2);
            tmp.copy_from(psi);
            tmp.axpy(C64::new(0.5 * h, 0.0), &k2, C64::new(1.0, 0.0));
            self.gen.apply(t + 0.5 * h, &tmp, &mut ph, &mut k3);
            tmp.copy_from(psi);
            tmp.axpy(C64::new(h, 0.0), &k3, C64::new(1.0, 0.0));
            self.gen.apply(t + h, &tmp, &mut ph, &mut k4);
            for i in 0..dim {
                psi[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
            }
        }
        Ok(())
    }
}

impl Propagator for Rk4 {
    fn name(&self) -> &'static str {
        "rk4"
    }

    fn prepare(&self, ctx: &PieceContext<'_>) -> Result<Box<dyn PieceEvolver>, PropagateError> {
        Ok(Box::new(Rk4Evolver {
            gen: SparseGenerator::new(ctx),
            max_step: ctx.max_step,
            segment_end: ctx.piece.end,
        }))
    }
}

/// Diagonalizes the piece generator. Driven pieces are handled in the frame
/// rotating at the drive frequency times `N_exc`, where the rotating-wave
/// drive is static.
#[derive(Debug, Clone, Copy, Default)]
pub struct Exact;

enum ExactKind {
    /// Generator already static in the interaction frame.
    Static,
    /// Lab-frame eigenbasis, optionally co-rotating at `omega_d`.
    Lab { omega_d: f64 },
}

struct ExactEvolver {
    eig: Eigen,
    kind: ExactKind,
    phi0: Vec<f64>,
    energies: Vec<f64>,
    excitations: Vec<f64>,
    start: f64,
}

impl ExactEvolver {
    /// Diagonal phase taking interaction-frame amplitudes at piece time τ to
    /// the evolution frame: `-Φ(τ) + ω_d N (start + τ)`.
    fn frame_phase(&self, i: usize, tau: f64, omega_d: f64) -> f64 {
        -(self.phi0[i] + self.energies[i] * tau) + omega_d * self.excitations[i] * (self.start + tau)
    }
}

impl PieceEvolver for ExactEvolver {
    fn advance(&self, psi: &mut CVector, from: f64, to: f64) -> Result<(), PropagateError> {
        if to <= from {
            return Ok(());
        }
        match self.kind {
            ExactKind::Static => {
                *psi = self.eig.evolve(psi, to - from);
            }
            ExactKind::Lab { omega_d } => {
                for (i, z) in psi.iter_mut().enumerate() {
                    *z *= C64::from_polar(1.0, self.frame_phase(i, from, omega_d));
                }
                *psi = self.eig.evolve(psi, to - from);
                for (i, z) in psi.iter_mut().enumerate() {
                    *z *= C64::from_polar(1.0, -self.frame_phase(i, to, omega_d));
                }
            }
        }
        Ok(())
    }
}

impl Propagator for Exact {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn prepare(&self, ctx: &PieceContext<'_>) -> Result<Box<dyn PieceEvolver>, PropagateError> {
        let h = ctx.hamiltonian;
        let n = h.energies.len();
        let (matrix, kind) = match ctx.mode {
            Mode::Effective => (SparseGenerator::new(ctx).dense_static(), ExactKind::Static),
            Mode::Full => {
                let omega_d = match h.drives.first() {
                    None => 0.0,
                    Some(d) => d.omega_d,
                };
                if h.drives.iter().any(|d| (d.omega_d - omega_d).abs() > 1e-12 * omega_d.abs()) {
                    return Err(PropagateError::Unsupported {
                        strategy: self.name().into(),
                        segment: ctx.segment_label.into(),
                        reason: "simultaneous drives at different frequencies".into(),
                    });
                }
                let mut m = CMatrix::zeros(n, n);
                for i in 0..n {
                    m[(i, i)] = C64::new(h.energies[i] - omega_d * ctx.excitations[i], 0.0);
                }
                for c in &h.couplings {
                    m[(c.row, c.col)] += c.value;
                    m[(c.col, c.row)] += c.value;
                }
                for d in &h.drives {
                    let v = d.amp * C64::from_polar(1.0, -d.lock);
                    m[(d.up, d.low)] += v;
                    m[(d.low, d.up)] += v.conj();
                }
                (m, ExactKind::Lab { omega_d })
            }
        };
        Ok(Box::new(ExactEvolver {
            eig: eig_hermitian_matrix(matrix)?,
            kind,
            phi0: ctx.phi0.to_vec(),
            energies: h.energies.clone(),
            excitations: ctx.excitations.to_vec(),
            start: ctx.piece.start,
        }))
    }
}

/// Exact on drive-free pieces, RK4 on driven ones.
#[derive(Debug, Clone, Copy, Default)]
pub struct Hybrid;

impl Propagator for Hybrid {
    fn name(&self) -> &'static str {
        "hybrid"
    }

    fn prepare(&self, ctx: &PieceContext<'_>) -> Result<Box<dyn PieceEvolver>, PropagateError> {
        if ctx.mode == Mode::Full && !ctx.hamiltonian.drives.is_empty() {
            Rk4.prepare(ctx)
        } else {
            Exact.prepare(ctx)
        }
    }
}
