//! Cluster-state construction from rounds of two-NVE gates, at the logical
//! level (one qubit per NVE).
//!
//! Node 0 is the most significant qubit. A gate on edge `(a, b)` with `a < b`
//! acts with `a` as its first qubit.

use std::fmt;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::ClusterError;
use crate::tensorspace::{CMatrix, CVector, C64};

/// Largest lattice held as a state vector.
pub const NODE_CAP: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge(pub usize, pub usize);

/// Hypercubic lattice with nearest-neighbour edges, row-major node order
/// (last axis fastest).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    dims: Vec<usize>,
    edges: Vec<Edge>,
}

impl Lattice {
    pub fn new(dims: Vec<usize>) -> Result<Self, ClusterError> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(ClusterError::EmptyExtent);
        }
        let mut lat = Self { dims, edges: Vec::new() };
        let mut edges = Vec::new();
        for axis in 0..lat.dims.len() {
            for a in 0..lat.nodes() {
                let mut c = lat.coords(a);
                if c[axis] + 1 < lat.dims[axis] {
                    c[axis] += 1;
                    edges.push(Edge(a, lat.index(&c)));
                }
            }
        }
        edges.sort();
        lat.edges = edges;
        Ok(lat)
    }

    pub fn chain(n: usize) -> Result<Self, ClusterError> {
        Self::new(vec![n])
    }

    pub fn square(n: usize) -> Result<Self, ClusterError> {
        Self::new(vec![n, n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn nodes(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn coords(&self, mut node: usize) -> Vec<usize> {
        let mut c = vec![0; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            c[k] = node % self.dims[k];
            node /= self.dims[k];
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.dims).fold(0, |acc, (c, d)| acc * d + c)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|e| match *e {
                Edge(a, b) if a == node => Some(b),
                Edge(a, b) if b == node => Some(a),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub axis: usize,
    /// Lower coordinate of each paired node is even (`A`) or odd (`B`).
    pub parity: usize,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSchedule {
    pub dims: Vec<usize>,
    pub rounds: Vec<Round>,
}

impl LatticeSchedule {
    pub fn edge_count(&self) -> usize {
        self.rounds.iter().map(|r| r.edges.len()).sum()
    }

    /// Plain-text listing of rounds with edges in coordinates.
    pub fn describe(&self, lat: &Lattice) -> String {
        let mut s = String::new();
        for (i, r) in self.rounds.iter().enumerate() {
            let tag = if r.parity == 0 { 'A' } else { 'B' };
            s.push_str(&format!("round {} axis {} {}:", i + 1, r.axis, tag));
            for e in &r.edges {
                s.push_str(&format!(" {:?}-{:?}", lat.coords(e.0), lat.coords(e.1)));
            }
            s.push('\n');
        }
        s
    }
}

/// Two rounds per axis, in `dims` order: pairs starting at even coordinates,
/// then pairs starting at odd ones. Empty rounds are kept.
pub fn schedule_lattice(lat: &Lattice) -> LatticeSchedule {
    let mut rounds = Vec::with_capacity(2 * lat.dims.len());
    for axis in 0..lat.dims.len() {
        for parity in 0..2 {
            let edges = lat
                .edges
                .iter()
                .copied()
                .filter(|e| {
                    let (ca, cb) = (lat.coords(e.0), lat.coords(e.1));
                    cb[axis] == ca[axis] + 1 && ca[axis] % 2 == parity
                })
                .collect();
            rounds.push(Round { axis, parity, edges });
        }
    }
    LatticeSchedule {
        dims: lat.dims.clone(),
        rounds,
    }
}

/// Normalized state over `qubits` logical qubits. `retained_weight` is the
/// product of the norms squared lost and renormalized by non-unitary gates.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalState {
    qubits: usize,
    amps: CVector,
    pub retained_weight: f64,
}

impl LogicalState {
    pub fn new(qubits: usize, amps: CVector) -> Result<Self, ClusterError> {
        if qubits > NODE_CAP {
            return Err(ClusterError::TooLarge(qubits, NODE_CAP));
        }
        if amps.len() != 1 << qubits {
            return Err(ClusterError::Size {
                got: amps.len().trailing_zeros() as usize,
                expected: qubits,
            });
        }
        let n = amps.norm();
        if n < 1e-300 {
            return Err(ClusterError::Annihilated);
        }
        Ok(Self {
            qubits,
            amps: amps.unscale(n),
            retained_weight: 1.0,
        })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amps(&self) -> &CVector {
        &self.amps
    }

    fn bit(&self, node: usize) -> usize {
        1 << (self.qubits - 1 - node)
    }
}

impl fmt::Display for LogicalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm() > 1e-12 {
                writeln!(f, "{:0w$b} {:+.6} {:+.6}i", i, a.re, a.im, w = self.qubits)?;
            }
        }
        Ok(())
    }
}

/// `(|0⟩+|1⟩)/√2` on every node.
pub fn prepare_plus_all(lat: &Lattice) -> Result<LogicalState, ClusterError> {
    let n = lat.nodes();
    if n > NODE_CAP {
        return Err(ClusterError::TooLarge(n, NODE_CAP));
    }
    let dim = 1usize << n;
    LogicalState::new(n, CVector::from_element(dim, C64::new(1.0, 0.0)))
}

pub fn cz() -> Matrix4<C64> {
    let mut m = Matrix4::identity();
    m[(3, 3)] = C64::new(-1.0, 0.0);
    m
}

/// `diag(1, 1, −1, 1)`, the device's c-phase.
pub fn paper_cphase() -> Matrix4<C64> {
    let mut m = Matrix4::identity();
    m[(2, 2)] = C64::new(-1.0, 0.0);
    m
}

/// `(Z ⊗ I)·g`: maps the device c-phase onto `cz()`.
pub fn to_cluster_frame(g: &Matrix4<C64>) -> Matrix4<C64> {
    let z = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, -1.0, -1.0).map(|x| C64::new(x, 0.0)));
    z * g
}

fn as_gate(gate: &CMatrix) -> Result<Matrix4<C64>, ClusterError> {
    if gate.shape() != (4, 4) {
        return Err(ClusterError::GateShape(gate.nrows(), gate.ncols()));
    }
    Ok(Matrix4::from_fn(|i, j| gate[(i, j)]))
}

fn apply_pair(state: &mut LogicalState, g: &Matrix4<C64>, e: Edge) -> Result<(), ClusterError> {
    let (ba, bb) = (state.bit(e.0), state.bit(e.1));
    let mut out = state.amps.clone();
    for x in 0..state.amps.len() {
        if x & (ba | bb) != 0 {
            continue;
        }
        let idx = [x, x | bb, x | ba, x | ba | bb];
        for (r, &xr) in idx.iter().enumerate() {
            out[xr] = (0..4).map(|c| g[(r, c)] * state.amps[idx[c]]).sum();
        }
    }
    let n2 = out.norm_squared();
    if n2 < 1e-300 {
        return Err(ClusterError::Annihilated);
    }
    state.retained_weight *= n2;
    state.amps = out.unscale(n2.sqrt());
    Ok(())
}

/// Applies each round in order, edges in index order, renormalizing after
/// every gate.
pub fn apply_schedule(
    state: &LogicalState,
    sched: &LatticeSchedule,
    gate: &CMatrix,
) -> Result<LogicalState, ClusterError> {
    let g = as_gate(gate)?;
    let mut s = state.clone();
    for r in &sched.rounds {
        for &e in &r.edges {
            if e.0.max(e.1) >= s.qubits {
                return Err(ClusterError::Size {
                    got: s.qubits,
                    expected: e.0.max(e.1) + 1,
                });
            }
            apply_pair(&mut s, &g, e)?;
        }
    }
    Ok(s)
}

/// `⟨X_a ∏_{b∈nbr(a)} Z_b⟩` for every node `a`.
pub fn stabilizer_check(state: &LogicalState, lat: &Lattice) -> Result<Vec<f64>, ClusterError> {
    if state.qubits != lat.nodes() {
        return Err(ClusterError::Size {
            got: state.qubits,
            expected: lat.nodes(),
        });
    }
    Ok((0..lat.nodes())
        .map(|a| {
            let flip = state.bit(a);
            let zmask = lat.neighbors(a).iter().fold(0, |m, &b| m | state.bit(b));
            let v: C64 = (0..state.amps.len())
                .map(|x| {
                    let sign = if (x & zmask).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                    state.amps[x ^ flip].conj() * state.amps[x] * sign
                })
                .sum();
            v.re
        })
        .collect())
}

/// Schedule plus, within the node cap, the ideal-gate cluster state.
pub fn build_cluster(lat: &Lattice, gate: &CMatrix) -> Result<(LatticeSchedule, Option<LogicalState>), ClusterError> {
    let sched = schedule_lattice(lat);
    if lat.nodes() > NODE_CAP {
        return Ok((sched, None));
    }
    let state = apply_schedule(&prepare_plus_all(lat)?, &sched, gate)?;
    Ok((sched, Some(state)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dyn4(m: Matrix4<C64>) -> CMatrix {
        CMatrix::from_fn(4, 4, |i, j| m[(i, j)])
    }

    #[test]
    fn edge_counts() {
        for dims in [vec![1], vec![4], vec![3, 3], vec![2, 3, 4]] {
            let lat = Lattice::new(dims.clone()).unwrap();
            let expected: usize = (0..dims.len())
                .map(|k| (dims[k] - 1) * dims.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, d)| d).product::<usize>())
                .sum();
            assert_eq!(lat.edges().len(), expected);
        }
        assert!(Lattice::new(vec![3, 0]).is_err());
        assert!(Lattice::new(vec![]).is_err());
    }

    #[test]
    fn chain_rounds() {
        let s = schedule_lattice(&Lattice::chain(4).unwrap());
        assert_eq!(s.rounds.len(), 2);
        assert_eq!(s.rounds[0].edges, vec![Edge(0, 1), Edge(2, 3)]);
        assert_eq!(s.rounds[1].edges, vec![Edge(1, 2)]);
        let s = schedule_lattice(&Lattice::chain(1).unwrap());
        assert_eq!(s.rounds.len(), 2);
        assert_eq!(s.edge_count(), 0);
    }

    #[test]
    fn grid_rounds_cover_edges_once() {
        let lat = Lattice::square(3).unwrap();
        let s = schedule_lattice(&lat);
        assert_eq!(s.rounds.len(), 4);
        let mut all: Vec<Edge> = s.rounds.iter().flat_map(|r| r.edges.clone()).collect();
        all.sort();
        assert_eq!(all, lat.edges());
        for r in &s.rounds {
            let mut seen = std::collections::HashSet::new();
            for e in &r.edges {
                assert!(seen.insert(e.0) && seen.insert(e.1));
            }
        }
    }

    #[test]
    fn plus_state() {
        let s = prepare_plus_all(&Lattice::chain(9).unwrap()).unwrap();
        assert_eq!(s.amps().len(), 512);
        let a = 1.0 / 512f64.sqrt();
        assert!(s.amps().iter().all(|z| (z.re - a).abs() < 1e-15 && z.im == 0.0));
    }

    #[test]
    fn two_node_cluster() {
        let lat = Lattice::chain(2).unwrap();
        let s = apply_schedule(&prepare_plus_all(&lat).unwrap(), &schedule_lattice(&lat), &dyn4(cz())).unwrap();
        let want = [0.5, 0.5, 0.5, -0.5];
        for (z, w) in s.amps().iter().zip(want) {
            assert!((z - C64::new(w, 0.0)).norm() < 1e-12);
        }
        let plus = prepare_plus_all(&lat).unwrap();
        for k in stabilizer_check(&plus, &lat).unwrap() {
            assert!(k.abs() < 1e-12);
        }
    }

    #[test]
    fn device_cphase_maps_to_cz() {
        assert_eq!(to_cluster_frame(&paper_cphase()), cz());
    }

    #[test]
    fn two_by_two_signs() {
        let lat = Lattice::square(2).unwrap();
        let s = apply_schedule(&prepare_plus_all(&lat).unwrap(), &schedule_lattice(&lat), &dyn4(cz())).unwrap();
        for (x, z) in s.amps().iter().enumerate() {
            let bit = |n: usize| (x >> (3 - n)) & 1;
            let parity: usize = lat.edges().iter().map(|e| bit(e.0) & bit(e.1)).sum();
            let sign = if parity % 2 == 0 { 0.25 } else { -0.25 };
            assert!((z - C64::new(sign, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let lat = Lattice::chain(3).unwrap();
        let plus = prepare_plus_all(&lat).unwrap();
        let bad = CMatrix::identity(3, 3);
        assert!(matches!(
            apply_schedule(&plus, &schedule_lattice(&lat), &bad),
            Err(ClusterError::GateShape(3, 3))
        ));
        assert!(stabilizer_check(&plus, &Lattice::chain(2).unwrap()).is_err());
        assert!(prepare_plus_all(&Lattice::chain(17).unwrap()).is_err());
        let (sched, state) = build_cluster(&Lattice::square(5).unwrap(), &dyn4(cz())).unwrap();
        assert_eq!(sched.rounds.len(), 4);
        assert!(state.is_none());
    }

    #[test]
    fn lossy_gate_reports_weight() {
        let lat = Lattice::chain(2).unwrap();
        let g = dyn4(cz()).scale(0.9);
        let s = apply_schedule(&prepare_plus_all(&lat).unwrap(), &schedule_lattice(&lat), &g).unwrap();
        assert!((s.retained_weight - 0.81).abs() < 1e-12);
        assert!((s.amps().norm() - 1.0).abs() < 1e-12);
    }
}
