//! Reduced density matrices, average fidelities and logical-gate extraction.

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{AnalysisError, ShapeError};
use crate::model::DeviceKet;
use crate::propagate::{Sampling, Simulator, Timeline};
use crate::protocols::{GateTask, LogicalTask, TransferTask};
use crate::tensorspace::{eig_hermitian_matrix, slot, CMatrix, CVector, PureState, SubsystemLayout, C64};

pub const MIN_GRID: usize = 9;
pub const DEFAULT_GRID: usize = 16;

/// Reduced density matrix over a subset of subsystems. Basis labels
/// concatenate level labels in `keep` order, first subsystem most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DensityDoc", try_from = "DensityDoc")]
pub struct DensityMatrixReport {
    pub subsystems: Vec<String>,
    pub basis: Vec<String>,
    pub matrix: CMatrix,
}

#[derive(Serialize, Deserialize)]
struct DensityDoc {
    subsystems: Vec<String>,
    basis: Vec<String>,
    real: Vec<Vec<f64>>,
    imag: Vec<Vec<f64>>,
}

impl From<DensityMatrixReport> for DensityDoc {
    fn from(r: DensityMatrixReport) -> Self {
        let n = r.basis.len();
        let part = |f: fn(&C64) -> f64| (0..n).map(|i| (0..n).map(|j| f(&r.matrix[(i, j)])).collect()).collect();
        DensityDoc {
            real: part(|z| z.re),
            imag: part(|z| z.im),
            subsystems: r.subsystems,
            basis: r.basis,
        }
    }
}

impl TryFrom<DensityDoc> for DensityMatrixReport {
    type Error = String;
    fn try_from(d: DensityDoc) -> Result<Self, String> {
        let n = d.basis.len();
        let square = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|r| r.len() == n);
        if !square(&d.real) || !square(&d.imag) {
            return Err("density matrix shape does not match its basis".into());
        }
        Ok(Self {
            matrix: CMatrix::from_fn(n, n, |i, j| C64::new(d.real[i][j], d.imag[i][j])),
            subsystems: d.subsystems,
            basis: d.basis,
        })
    }
}

impl DensityMatrixReport {
    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()).unscale(2.0);
        eig_hermitian_matrix(h).map(|e| e.values[0]).unwrap_or(f64::NAN)
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.basis.iter().position(|b| b == label)
    }

    pub fn entry(&self, row: &str, col: &str) -> Option<C64> {
        Some(self.matrix[(self.position(row)?, self.position(col)?)])
    }

    /// Sub-block on the given basis labels, in that order. Its trace is the
    /// population of the block.
    pub fn block(&self, labels: &[&str]) -> Option<DensityMatrixReport> {
        let idx: Vec<usize> = labels.iter().map(|l| self.position(l)).collect::<Option<_>>()?;
        Some(DensityMatrixReport {
            subsystems: self.subsystems.clone(),
            basis: labels.iter().map(|s| s.to_string()).collect(),
            matrix: CMatrix::from_fn(idx.len(), idx.len(), |i, j| self.matrix[(idx[i], idx[j])]),
        })
    }

    /// `⟨v|ρ|v⟩` for a vector written in this basis.
    pub fn expectation(&self, v: &CVector) -> f64 {
        v.dotc(&(&self.matrix * v)).re
    }

    /// Rows `row, col, re, im`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AnalysisError> {
        let io = |e: csv::Error| AnalysisError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "re", "im"]).map_err(io)?;
        for (i, r) in self.basis.iter().enumerate() {
            for (j, c) in self.basis.iter().enumerate() {
                let z = self.matrix[(i, j)];
                w.write_record([r.as_str(), c.as_str(), &z.re.to_string(), &z.im.to_string()])
                    .map_err(io)?;
            }
        }
        w.flush().map_err(|e| AnalysisError::Io(e.to_string()))
    }
}

/// Traces out every subsystem not listed in `keep`.
pub fn partial_trace(
    state: &PureState,
    layout: &SubsystemLayout,
    keep: &[usize],
) -> Result<DensityMatrixReport, AnalysisError> {
    if keep.is_empty() {
        return Err(AnalysisError::EmptyKeep);
    }
    if state.dim() != layout.total_dim() {
        return Err(ShapeError::Length {
            got: state.dim(),
            expected: layout.total_dim(),
        }
        .into());
    }
    for (i, &k) in keep.iter().enumerate() {
        if k >= layout.len() || keep[..i].contains(&k) {
            return Err(ShapeError::Slot { slot: k, len: layout.len() }.into());
        }
    }
    let n = state.norm();
    if (n - 1.0).abs() > 1e-9 {
        return Err(ShapeError::NotNormalized(n).into());
    }
    let kdims: Vec<usize> = keep.iter().map(|&k| layout.dim(k)).collect();
    let dk: usize = kdims.iter().product();
    let env: Vec<usize> = (0..layout.len()).filter(|s| !keep.contains(s)).collect();
    let de: usize = env.iter().map(|&s| layout.dim(s)).product();
    let mut psi = CMatrix::zeros(dk, de);
    for (i, a) in state.amps().iter().enumerate() {
        let lv = layout.levels(i);
        let r = keep.iter().fold(0, |acc, &k| acc * layout.dim(k) + lv[k]);
        let c = env.iter().fold(0, |acc, &k| acc * layout.dim(k) + lv[k]);
        psi[(r, c)] = *a;
    }
    let rho = &psi * psi.adjoint();
    let basis = (0..dk)
        .map(|mut r| {
            let mut parts = vec![String::new(); keep.len()];
            for p in (0..keep.len()).rev() {
                parts[p] = layout.level_label(keep[p], r % kdims[p]);
                r /= kdims[p];
            }
            parts.concat()
        })
        .collect();
    Ok(DensityMatrixReport {
        subsystems: keep.iter().map(|&k| layout.subsystems()[k].name.clone()).collect(),
        basis,
        matrix: rho,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageSummary {
    /// Largest two-photon population over the sampled times and the input
    /// grid.
    pub max_photon2: f64,
    /// Largest final population outside the target subspace over the input
    /// grid.
    pub final_nontarget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub protocol: String,
    pub average: f64,
    /// Row-major over `(θ₁, θ₂)` for gates.
    pub per_node: Vec<f64>,
    pub grid: usize,
    pub total_time_ns: f64,
    pub leakage: LeakageSummary,
}

impl FidelityReport {
    pub fn min(&self) -> f64 {
        self.per_node.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.per_node.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn grid(m: usize) -> Result<Vec<f64>, AnalysisError> {
    if m < MIN_GRID {
        return Err(AnalysisError::GridTooSmall(m));
    }
    Ok((0..m).map(|k| TAU * k as f64 / m as f64).collect())
}

/// Real part of the Gram matrix of `vs`. Input amplitudes are real, so the
/// imaginary part never contributes to `c^T G c`.
fn real_gram(vs: &[CVector]) -> DMatrix<f64> {
    DMatrix::from_fn(vs.len(), vs.len(), |i, j| vs[i].dotc(&vs[j]).re)
}

/// Largest `c^T G c` over the input family.
fn family_max(g: &DMatrix<f64>, family: &[DVector<f64>]) -> f64 {
    family.iter().map(|c| c.dot(&(g * c))).fold(0.0, f64::max)
}

fn photon2_indices(layout: &SubsystemLayout) -> Vec<usize> {
    (0..layout.total_dim())
        .filter(|&i| layout.level(i, slot::TLR_A) >= 2 || layout.level(i, slot::TLR_B) >= 2)
        .collect()
}

struct BasisRuns {
    outputs: Vec<CVector>,
    max_photon2: f64,
}

/// Runs each basis input once and tracks the largest two-photon population
/// any member of `family` reaches on a uniform sample grid.
fn basis_runs(
    sim: &Simulator,
    tl: &Timeline,
    inputs: &[DeviceKet],
    family: &[DVector<f64>],
) -> Result<BasisRuns, AnalysisError> {
    let states = inputs
        .iter()
        .map(|k| sim.basis_state(*k))
        .collect::<Result<Vec<_>, _>>()?;
    let prepared = sim.prepare(tl)?;
    let times = Sampling::new(Vec::new()).sample_times(prepared.total_duration());
    let p2 = photon2_indices(sim.layout());
    use rayon::prelude::*;
    let runs: Vec<(CVector, Vec<CVector>)> = states
        .par_iter()
        .map(|s| {
            let mut snaps = Vec::with_capacity(times.len());
            let out = prepared.run_observed(s, &times, |_, v| {
                snaps.push(CVector::from_iterator(p2.len(), p2.iter().map(|&i| v[i])));
            })?;
            Ok((out.into_amps(), snaps))
        })
        .collect::<Result<_, AnalysisError>>()?;
    let max_photon2 = (0..times.len())
        .into_par_iter()
        .map(|t| {
            let vs: Vec<CVector> = runs.iter().map(|r| r.1[t].clone()).collect();
            family_max(&real_gram(&vs), family)
        })
        .reduce(|| 0.0, f64::max);
    Ok(BasisRuns {
        outputs: runs.into_iter().map(|r| r.0).collect(),
        max_photon2,
    })
}

fn nontarget_max(outputs: &[CVector], target_idx: &[usize], family: &[DVector<f64>]) -> f64 {
    let vs: Vec<CVector> = outputs
        .iter()
        .map(|v| {
            let mut w = v.clone();
            for &i in target_idx {
                w[i] = C64::new(0.0, 0.0);
            }
            w
        })
        .collect();
    family_max(&real_gram(&vs), family)
}

/// Averages `|⟨φ(θ)|ψ(θ)⟩|²` over `θ ∈ [0, 2π)` with `m` nodes; input 0 of
/// the task carries `sin θ`, input 1 `cos θ`.
pub fn avg_fidelity_transfer(
    sim: &Simulator,
    tl: &Timeline,
    task: &TransferTask,
    m: usize,
) -> Result<FidelityReport, AnalysisError> {
    let thetas = grid(m)?;
    let layout = sim.layout();
    let family: Vec<DVector<f64>> = thetas.iter().map(|t| DVector::from_vec(vec![t.sin(), t.cos()])).collect();
    let runs = basis_runs(sim, tl, &task.inputs, &family)?;
    let tidx = [task.targets[0].1.index(layout)?, task.targets[1].1.index(layout)?];
    // a[i][j] = conj(c_i) ⟨t_i|out_j⟩
    let a: Vec<Vec<C64>> = (0..2)
        .map(|i| (0..2).map(|j| task.targets[i].0.conj() * runs.outputs[j][tidx[i]]).collect())
        .collect();
    let per_node: Vec<f64> = thetas
        .iter()
        .map(|&th| {
            let c = [th.sin(), th.cos()];
            let mut z = C64::new(0.0, 0.0);
            for i in 0..2 {
                for j in 0..2 {
                    z += a[i][j] * (c[i] * c[j]);
                }
            }
            z.norm_sqr()
        })
        .collect();
    Ok(FidelityReport {
        protocol: tl.name.clone(),
        average: mean(&per_node),
        per_node,
        grid: m,
        total_time_ns: tl.total_duration(),
        leakage: LeakageSummary {
            max_photon2: runs.max_photon2,
            final_nontarget: nontarget_max(&runs.outputs, &tidx, &family),
        },
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Input amplitudes `(cos θ₁ cos θ₂, cos θ₁ sin θ₂, sin θ₁ cos θ₂, sin θ₁ sin θ₂)`.
pub fn gate_input(theta1: f64, theta2: f64) -> Vector4<f64> {
    let (s1, c1) = theta1.sin_cos();
    let (s2, c2) = theta2.sin_cos();
    Vector4::new(c1 * c2, c1 * s2, s1 * c2, s1 * s2)
}

/// Averages the two-NVE gate fidelity over an `m × m` grid of `(θ₁, θ₂)`.
pub fn avg_fidelity_gate(
    sim: &Simulator,
    tl: &Timeline,
    task: &GateTask,
    m: usize,
) -> Result<FidelityReport, AnalysisError> {
    let thetas = grid(m)?;
    let family: Vec<DVector<f64>> = thetas
        .iter()
        .flat_map(|&t1| thetas.iter().map(move |&t2| DVector::from_column_slice(gate_input(t1, t2).as_slice())))
        .collect();
    let runs = basis_runs(sim, tl, &task.basis, &family)?;
    let idx: Vec<usize> = task
        .basis
        .iter()
        .map(|k| k.index(sim.layout()))
        .collect::<Result<_, _>>()?;
    let u = logical_block(&runs.outputs, &idx);
    // ⟨target|ψ⟩ = c^T (T† U) c for real c.
    let k = task.target.adjoint() * u;
    let mut per_node = Vec::with_capacity(m * m);
    for &t1 in &thetas {
        for &t2 in &thetas {
            let c = gate_input(t1, t2).map(|x| C64::new(x, 0.0));
            per_node.push((c.transpose() * k * c)[(0, 0)].norm_sqr());
        }
    }
    Ok(FidelityReport {
        protocol: tl.name.clone(),
        average: mean(&per_node),
        per_node,
        grid: m,
        total_time_ns: tl.total_duration(),
        leakage: LeakageSummary {
            max_photon2: runs.max_photon2,
            final_nontarget: nontarget_max(&runs.outputs, &idx, &family),
        },
    })
}

/// [`avg_fidelity_gate`] for a c-phase task.
pub fn avg_fidelity_cphase(
    sim: &Simulator,
    tl: &Timeline,
    task: &GateTask,
    m: usize,
) -> Result<FidelityReport, AnalysisError> {
    avg_fidelity_gate(sim, tl, task, m)
}

pub fn avg_fidelity(sim: &Simulator, tl: &Timeline, task: &LogicalTask, m: usize) -> Result<FidelityReport, AnalysisError> {
    match task {
        LogicalTask::Transfer(t) => avg_fidelity_transfer(sim, tl, t, m),
        LogicalTask::Gate(g) => avg_fidelity_gate(sim, tl, g, m),
    }
}

fn logical_block(outputs: &[CVector], idx: &[usize]) -> Matrix4<C64> {
    Matrix4::from_fn(|i, j| outputs[j][idx[i]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalGate {
    pub matrix: Matrix4<C64>,
    pub leakage: f64,
}

impl LogicalGate {
    /// `1 − |tr(T† U)|/4`
    pub fn metric(&self, target: &Matrix4<C64>) -> f64 {
        gate_metric(target, &self.matrix)
    }
}

pub fn gate_metric(target: &Matrix4<C64>, u: &Matrix4<C64>) -> f64 {
    1.0 - (target.adjoint() * u).trace().norm() / 4.0
}

/// Runs the four logical basis inputs and projects the outputs back onto
/// the logical subspace.
pub fn extract_logical_gate(sim: &Simulator, tl: &Timeline, basis: &[DeviceKet; 4]) -> Result<LogicalGate, AnalysisError> {
    let inputs = basis
        .iter()
        .map(|k| sim.basis_state(*k))
        .collect::<Result<Vec<_>, _>>()?;
    let outputs: Vec<CVector> = sim.run_many(&inputs, tl)?.into_iter().map(PureState::into_amps).collect();
    let idx: Vec<usize> = basis.iter().map(|k| k.index(sim.layout())).collect::<Result<_, _>>()?;
    let matrix = logical_block(&outputs, &idx);
    let min_col = (0..4)
        .map(|j| matrix.column(j).norm_squared())
        .fold(f64::INFINITY, f64::min);
    let leakage = 1.0 - min_col;
    if leakage > 0.5 {
        return Err(AnalysisError::Degenerate(leakage));
    }
    Ok(LogicalGate { matrix, leakage })
}
