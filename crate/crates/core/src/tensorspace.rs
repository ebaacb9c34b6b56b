//! Tensor-product Hilbert space of the device and the dense linear algebra
//! shared by the rest of the crate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ShapeError;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

const HERMITIAN_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsystemKind {
    Nve,
    Resonator,
    Spq,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsystem {
    pub kind: SubsystemKind,
    pub dim: usize,
    pub name: String,
}

/// Slot indices of the canonical device layout.
pub mod slot {
    pub const NVE1: usize = 0;
    pub const TLR_A: usize = 1;
    pub const SPQ: usize = 2;
    pub const TLR_B: usize = 3;
    pub const NVE2: usize = 4;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsystemLayout {
    subsystems: Vec<Subsystem>,
    strides: Vec<usize>,
    total: usize,
}

impl SubsystemLayout {
    pub fn new(subsystems: Vec<Subsystem>) -> Result<Self, ShapeError> {
        if subsystems.is_empty() {
            return Err(ShapeError::Layout("no subsystems".into()));
        }
        for s in &subsystems {
            let ok = match s.kind {
                SubsystemKind::Nve => s.dim == 3,
                SubsystemKind::Spq => s.dim == 2,
                SubsystemKind::Resonator => s.dim >= 2,
            };
            if !ok {
                return Err(ShapeError::Layout(format!(
                    "{} ({:?}) cannot have dimension {}",
                    s.name, s.kind, s.dim
                )));
            }
        }
        let mut strides = vec![1; subsystems.len()];
        for k in (0..subsystems.len() - 1).rev() {
            strides[k] = strides[k + 1] * subsystems[k + 1].dim;
        }
        let total = strides[0] * subsystems[0].dim;
        Ok(Self {
            subsystems,
            strides,
            total,
        })
    }

    /// `[NVE1, TLRa, SPQ, TLRb, NVE2]` with `n_max` photons per resonator.
    pub fn device(n_max: usize) -> Result<Self, ShapeError> {
        if n_max < 1 {
            return Err(ShapeError::Layout("n_max must be at least 1".into()));
        }
        let sub = |kind, dim, name: &str| Subsystem {
            kind,
            dim,
            name: name.to_string(),
        };
        Self::new(vec![
            sub(SubsystemKind::Nve, 3, "nve1"),
            sub(SubsystemKind::Resonator, n_max + 1, "tlr_a"),
            sub(SubsystemKind::Spq, 2, "spq"),
            sub(SubsystemKind::Resonator, n_max + 1, "tlr_b"),
            sub(SubsystemKind::Nve, 3, "nve2"),
        ])
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn dim(&self, slot: usize) -> usize {
        self.subsystems[slot].dim
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.dim).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    pub fn stride(&self, slot: usize) -> usize {
        self.strides[slot]
    }

    /// Flat index of a product basis state; first slot is most significant.
    pub fn index(&self, levels: &[usize]) -> Result<usize, ShapeError> {
        if levels.len() != self.len() {
            return Err(ShapeError::Length {
                got: levels.len(),
                expected: self.len(),
            });
        }
        let mut idx = 0;
        for (k, &l) in levels.iter().enumerate() {
            if l >= self.dim(k) {
                return Err(ShapeError::Layout(format!(
                    "level {l} out of range for {}",
                    self.subsystems[k].name
                )));
            }
            idx += l * self.strides[k];
        }
        Ok(idx)
    }

    pub fn levels(&self, index: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.subsystems)
            .map(|(st, s)| (index / st) % s.dim)
            .collect()
    }

    pub fn level(&self, index: usize, slot: usize) -> usize {
        (index / self.strides[slot]) % self.subsystems[slot].dim
    }

    pub fn level_label(&self, slot: usize, level: usize) -> String {
        match self.subsystems[slot].kind {
            SubsystemKind::Nve => ["U", "0", "1"][level].to_string(),
            SubsystemKind::Spq => ["g", "e"][level].to_string(),
            SubsystemKind::Resonator => level.to_string(),
        }
    }

    /// Compact label such as `0,0,g,0,U`.
    pub fn label(&self, index: usize) -> String {
        self.levels(index)
            .iter()
            .enumerate()
            .map(|(k, &l)| self.level_label(k, l))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn check_slot(&self, slot: usize) -> Result<(), ShapeError> {
        if slot >= self.len() {
            return Err(ShapeError::Slot {
                slot,
                len: self.len(),
            });
        }
        Ok(())
    }
}

/// Square matrix over the full space, tagged with its Hermiticity.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
    hermitian: bool,
}

impl Operator {
    pub fn general(matrix: CMatrix) -> Result<Self, ShapeError> {
        if !matrix.is_square() {
            return Err(ShapeError::Length {
                got: matrix.ncols(),
                expected: matrix.nrows(),
            });
        }
        Ok(Self {
            matrix,
            hermitian: false,
        })
    }

    pub fn hermitian(matrix: CMatrix) -> Result<Self, ShapeError> {
        let op = Self::general(matrix)?;
        let dev = op.hermiticity_error();
        if dev >= HERMITIAN_TOL {
            return Err(ShapeError::NotHermitian(dev));
        }
        Ok(Self {
            hermitian: true,
            ..op
        })
    }

    /// Tags the operator Hermitian when it is, within tolerance.
    pub fn detect(matrix: CMatrix) -> Result<Self, ShapeError> {
        let mut op = Self::general(matrix)?;
        op.hermitian = op.hermiticity_error() < HERMITIAN_TOL;
        Ok(op)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn compose(&self, other: &Operator) -> Operator {
        Operator {
            matrix: &self.matrix * &other.matrix,
            hermitian: false,
        }
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.matrix * v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Lab,
    Interaction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: CVector,
    frame: Frame,
}

impl PureState {
    pub fn new(amps: CVector, frame: Frame) -> Result<Self, ShapeError> {
        let n = amps.norm();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(ShapeError::NotNormalized(n));
        }
        Ok(Self { amps, frame })
    }

    /// Normalizes `amps` first; fails only on a zero vector.
    pub fn normalized(amps: CVector, frame: Frame) -> Result<Self, ShapeError> {
        let n = amps.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(ShapeError::NotNormalized(n));
        }
        Ok(Self {
            amps: amps.unscale(n),
            frame,
        })
    }

    /// Skips the norm check; used by propagators that report drift separately.
    pub(crate) fn from_raw(amps: CVector, frame: Frame) -> Self {
        Self { amps, frame }
    }

    pub fn basis(layout: &SubsystemLayout, levels: &[usize], frame: Frame) -> Result<Self, ShapeError> {
        let mut amps = CVector::zeros(layout.total_dim());
        amps[layout.index(levels)?] = ONE;
        Ok(Self { amps, frame })
    }

    pub fn amps(&self) -> &CVector {
        &self.amps
    }

    pub fn into_amps(self) -> CVector {
        self.amps
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn overlap(&self, other: &PureState) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` with `op` at `slot`.
pub fn lift_local(op: &CMatrix, slot: usize, layout: &SubsystemLayout) -> Result<Operator, ShapeError> {
    layout.check_slot(slot)?;
    let d = layout.dim(slot);
    if op.nrows() != d || op.ncols() != d {
        return Err(ShapeError::LocalDim {
            slot,
            rows: op.nrows(),
            cols: op.ncols(),
            expected: d,
        });
    }
    let n = layout.total_dim();
    let stride = layout.stride(slot);
    let mut m = CMatrix::zeros(n, n);
    for col in 0..n {
        let lc = layout.level(col, slot);
        let base = col - lc * stride;
        for lr in 0..d {
            let v = op[(lr, lc)];
            if v != ZERO {
                m[(base + lr * stride, col)] = v;
            }
        }
    }
    Operator::detect(m)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// `|row⟩⟨col|` on a `dim`-level system.
pub fn ket_bra(dim: usize, row: usize, col: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    m[(row, col)] = ONE;
    m
}

pub fn annihilation(dim: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    m
}

#[derive(Debug, Clone)]
pub struct NveGenerators {
    /// `|U⟩⟨0|`
    pub s0_minus: Operator,
    /// `|0⟩⟨U|`
    pub s0_plus: Operator,
    /// `|U⟩⟨1|`
    pub s1_minus: Operator,
    /// `|1⟩⟨U|`
    pub s1_plus: Operator,
    pub proj0: Operator,
    pub proj1: Operator,
}

#[derive(Debug, Clone)]
pub struct LocalGenerators {
    pub a: Operator,
    pub a_dag: Operator,
    pub b: Operator,
    pub b_dag: Operator,
    pub sigma_minus: Operator,
    pub sigma_plus: Operator,
    pub sigma_z: Operator,
    pub nve: [NveGenerators; 2],
}

impl LocalGenerators {
    pub fn get(&self, name: &str) -> Option<&Operator> {
        let k = |i: usize| &self.nve[i];
        Some(match name {
            "a" => &self.a,
            "a_dag" => &self.a_dag,
            "b" => &self.b,
            "b_dag" => &self.b_dag,
            "sigma_minus" => &self.sigma_minus,
            "sigma_plus" => &self.sigma_plus,
            "sigma_z" => &self.sigma_z,
            "s10_minus" => &k(0).s0_minus,
            "s10_plus" => &k(0).s0_plus,
            "s11_minus" => &k(0).s1_minus,
            "s11_plus" => &k(0).s1_plus,
            "s20_minus" => &k(1).s0_minus,
            "s20_plus" => &k(1).s0_plus,
            "s21_minus" => &k(1).s1_minus,
            "s21_plus" => &k(1).s1_plus,
            _ => return None,
        })
    }

    pub const NAMES: [&'static str; 15] = [
        "a",
        "a_dag",
        "b",
        "b_dag",
        "sigma_minus",
        "sigma_plus",
        "sigma_z",
        "s10_minus",
        "s10_plus",
        "s11_minus",
        "s11_plus",
        "s20_minus",
        "s20_plus",
        "s21_minus",
        "s21_plus",
    ];
}

/// Ladder and projector operators of the canonical device layout.
pub fn local_generators(layout: &SubsystemLayout) -> Result<LocalGenerators, ShapeError> {
    let kinds: Vec<_> = layout.subsystems().iter().map(|s| s.kind).collect();
    use SubsystemKind::*;
    if kinds != [Nve, Resonator, Spq, Resonator, Nve] {
        return Err(ShapeError::Layout("expected [nve, resonator, spq, resonator, nve]".into()));
    }
    let lift = |m: CMatrix, s| lift_local(&m, s, layout);
    let nve = |s| -> Result<NveGenerators, ShapeError> {
        Ok(NveGenerators {
            s0_minus: lift(ket_bra(3, 0, 1), s)?,
            s0_plus: lift(ket_bra(3, 1, 0), s)?,
            s1_minus: lift(ket_bra(3, 0, 2), s)?,
            s1_plus: lift(ket_bra(3, 2, 0), s)?,
            proj0: lift(ket_bra(3, 1, 1), s)?,
            proj1: lift(ket_bra(3, 2, 2), s)?,
        })
    };
    let fa = annihilation(layout.dim(slot::TLR_A));
    let fb = annihilation(layout.dim(slot::TLR_B));
    let mut sz = CMatrix::zeros(2, 2);
    sz[(0, 0)] = -ONE;
    sz[(1, 1)] = ONE;
    Ok(LocalGenerators {
        a_dag: lift(fa.adjoint(), slot::TLR_A)?,
        a: lift(fa, slot::TLR_A)?,
        b_dag: lift(fb.adjoint(), slot::TLR_B)?,
        b: lift(fb, slot::TLR_B)?,
        sigma_minus: lift(ket_bra(2, 0, 1), slot::SPQ)?,
        sigma_plus: lift(ket_bra(2, 1, 0), slot::SPQ)?,
        sigma_z: lift(sz, slot::SPQ)?,
        nve: [nve(slot::NVE1)?, nve(slot::NVE2)?],
    })
}

/// Spectral decomposition of a Hermitian operator, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigen {
    /// `V e^{-iλt} V† ψ`
    pub fn evolve(&self, psi: &CVector, t: f64) -> CVector {
        let mut c = self.vectors.ad_mul(psi);
        for (ci, &l) in c.iter_mut().zip(&self.values) {
            *ci *= C64::from_polar(1.0, -l * t);
        }
        &self.vectors * c
    }

    pub fn unitary(&self, t: f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let ph = C64::from_polar(1.0, -self.values[j] * t);
            for i in 0..n {
                scaled[(i, j)] *= ph;
            }
        }
        scaled * self.vectors.adjoint()
    }

    pub fn reconstruct(&self) -> CMatrix {
        let d = CMatrix::from_diagonal(&CVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&l| C64::new(l, 0.0)),
        ));
        &self.vectors * d * self.vectors.adjoint()
    }
}

pub fn eig_hermitian(op: &Operator) -> Result<Eigen, ShapeError> {
    if !op.is_hermitian() {
        return Err(ShapeError::NotHermitian(op.hermiticity_error()));
    }
    eig_hermitian_matrix(op.matrix().clone())
}

pub(crate) fn eig_hermitian_matrix(m: CMatrix) -> Result<Eigen, ShapeError> {
    let n = m.nrows();
    let se = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let values = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| se.eigenvectors[(r, order[c])]);
    Ok(Eigen { values, vectors })
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_vec(v: &CVector) -> f64 {
    v.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SubsystemLayout {
        SubsystemLayout::device(1).unwrap()
    }

    fn brute_lift(op: &CMatrix, slot: usize, layout: &SubsystemLayout) -> CMatrix {
        let mut m = CMatrix::identity(1, 1);
        for k in 0..layout.len() {
            let f = if k == slot {
                op.clone()
            } else {
                CMatrix::identity(layout.dim(k), layout.dim(k))
            };
            m = kron(&m, &f);
        }
        m
    }

    #[test]
    fn layout_dimensions() {
        let l = SubsystemLayout::device(2).unwrap();
        assert_eq!(l.total_dim(), 162);
        assert_eq!(l.dims(), vec![3, 3, 2, 3, 3]);
        assert!(SubsystemLayout::device(0).is_err());
        let bad = Subsystem {
            kind: SubsystemKind::Nve,
            dim: 2,
            name: "x".into(),
        };
        assert!(SubsystemLayout::new(vec![bad]).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let l = SubsystemLayout::device(2).unwrap();
        for i in 0..l.total_dim() {
            assert_eq!(l.index(&l.levels(i)).unwrap(), i);
        }
        assert_eq!(l.label(l.index(&[1, 0, 0, 0, 0]).unwrap()), "0,0,g,0,U");
    }

    #[test]
    fn lift_identity_is_identity() {
        let l = small();
        for s in 0..l.len() {
            let d = l.dim(s);
            let op = lift_local(&CMatrix::identity(d, d), s, &l).unwrap();
            assert_eq!(op.matrix(), &CMatrix::identity(l.total_dim(), l.total_dim()));
        }
    }

    #[test]
    fn lift_diag_at_spq() {
        let l = small();
        let mut z = CMatrix::zeros(2, 2);
        z[(0, 0)] = ONE;
        z[(1, 1)] = -ONE;
        let op = lift_local(&z, slot::SPQ, &l).unwrap();
        let i = l.index(&[0, 0, 1, 0, 0]).unwrap();
        assert_eq!(op.matrix()[(i, i)], -ONE);
        assert!(op.is_hermitian());
    }

    #[test]
    fn lift_matches_kronecker() {
        let l = SubsystemLayout::device(2).unwrap();
        let a = annihilation(3);
        for s in [slot::TLR_A, slot::TLR_B] {
            let lifted = lift_local(&a.adjoint(), s, &l).unwrap();
            assert!(max_abs(&(lifted.matrix() - brute_lift(&a.adjoint(), s, &l))) == 0.0);
        }
        let op = lift_local(&a.adjoint(), slot::TLR_A, &l).unwrap();
        let from = l.index(&[0, 0, 0, 0, 0]).unwrap();
        let to = l.index(&[0, 1, 0, 0, 0]).unwrap();
        assert_eq!(op.matrix()[(to, from)], ONE);
    }

    #[test]
    fn lift_rejects_wrong_shape() {
        let l = small();
        let e = lift_local(&CMatrix::identity(3, 3), slot::SPQ, &l).unwrap_err();
        assert!(matches!(e, ShapeError::LocalDim { .. }));
        assert!(lift_local(&CMatrix::identity(3, 3), 9, &l).is_err());
    }

    #[test]
    fn lift_respects_products() {
        let l = SubsystemLayout::device(2).unwrap();
        let a = annihilation(3);
        let b = ket_bra(3, 2, 0) + ket_bra(3, 0, 1);
        let lab = lift_local(&(&a * &b), slot::TLR_A, &l).unwrap();
        let la = lift_local(&a, slot::TLR_A, &l).unwrap();
        let lb = lift_local(&b, slot::TLR_A, &l).unwrap();
        assert!(max_abs(&(lab.matrix() - la.compose(&lb).matrix())) < 1e-12);
    }

    #[test]
    fn commutator_below_truncation() {
        let l = SubsystemLayout::device(2).unwrap();
        let g = local_generators(&l).unwrap();
        let c = g.a.matrix() * g.a_dag.matrix() - g.a_dag.matrix() * g.a.matrix();
        for i in 0..l.total_dim() {
            for j in 0..l.total_dim() {
                let n = l.level(i, slot::TLR_A);
                if n < 2 && l.level(j, slot::TLR_A) < 2 {
                    let want = if i == j { ONE } else { ZERO };
                    assert!((c[(i, j)] - want).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn raising_operators() {
        let l = SubsystemLayout::device(1).unwrap();
        let g = local_generators(&l).unwrap();
        let u = PureState::basis(&l, &[0, 0, 0, 0, 0], Frame::Lab).unwrap();
        let zero1 = PureState::basis(&l, &[1, 0, 0, 0, 0], Frame::Lab).unwrap();
        assert_eq!(g.nve[0].s0_plus.apply(u.amps()), zero1.amps().clone());
        let e = PureState::basis(&l, &[0, 0, 1, 0, 0], Frame::Lab).unwrap();
        assert_eq!(g.sigma_plus.apply(u.amps()), e.amps().clone());
        assert_eq!(g.sigma_plus.apply(e.amps()).norm(), 0.0);
        for name in LocalGenerators::NAMES {
            assert!(g.get(name).is_some(), "{name}");
        }
    }

    #[test]
    fn eigen_cases() {
        let g = 0.7;
        let m = CMatrix::from_row_slice(2, 2, &[ZERO, C64::new(g, 0.0), C64::new(g, 0.0), ZERO]);
        let e = eig_hermitian(&Operator::hermitian(m).unwrap()).unwrap();
        assert!((e.values[0] + g).abs() < 1e-14 && (e.values[1] - g).abs() < 1e-14);

        let gc = C64::new(g, 0.0);
        let chain = CMatrix::from_row_slice(3, 3, &[ZERO, gc, ZERO, gc, ZERO, gc, ZERO, gc, ZERO]);
        let e = eig_hermitian(&Operator::hermitian(chain.clone()).unwrap()).unwrap();
        let r2 = 2f64.sqrt() * g;
        assert!((e.values[0] + r2).abs() < 1e-13);
        assert!(e.values[1].abs() < 1e-13);
        assert!((e.values[2] - r2).abs() < 1e-13);
        assert!(max_abs(&(e.reconstruct() - chain)) < 1e-10);

        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![ONE * 3.0, ONE, -ONE]));
        let e = eig_hermitian(&Operator::hermitian(d).unwrap()).unwrap();
        assert_eq!(e.values, vec![-1.0, 1.0, 3.0]);
    }

    #[test]
    fn eigen_rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        assert!(Operator::hermitian(m.clone()).is_err());
        let op = Operator::general(m).unwrap();
        assert!(eig_hermitian(&op).is_err());
    }

    #[test]
    fn pure_state_norm_checked() {
        let v = CVector::from_vec(vec![ONE, ONE]);
        assert!(PureState::new(v.clone(), Frame::Lab).is_err());
        let s = PureState::normalized(v, Frame::Lab).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-15);
    }
}
