//! Dense complex operator algebra: Hermitian operators, pure states, POVMs.
//!
//! Every constructor of [`HermitianOperator`] symmetrizes its input, so the
//! stored matrix is Hermitian to machine precision and its diagonal is real.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Eigenvalues below this are treated as numerical zero when deciding
/// whether an operator is effectively PSD.
pub const PSD_CLIP: f64 = -1e-9;

/// Default tolerance on the minimum eigenvalue of a POVM element.
pub const POVM_TOL_PSD: f64 = 1e-9;
/// Default tolerance on `‖Σ Π_j − 𝟙‖_F`.
pub const POVM_TOL_SUM: f64 = 1e-8;

const NOT_PSD: f64 = -1e-6;

#[derive(Clone, PartialEq)]
pub struct HermitianOperator {
    mat: CMatrix,
}

/// Spectral decomposition `H = V diag(values) V†` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    /// Rebuilds `V f(Λ) V†`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            for i in 0..d {
                scaled[(i, k)] *= w;
            }
        }
        HermitianOperator::from_matrix_unchecked(&scaled * self.vectors.adjoint())
    }
}

impl HermitianOperator {
    /// Symmetrizes `m` as `(m + m†)/2`.
    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return invalid(format!("matrix is {}x{}, not square", m.nrows(), m.ncols()));
        }
        if m.nrows() == 0 {
            return invalid("operator dimension must be positive");
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("matrix has non-finite entries");
        }
        Ok(Self::from_matrix_unchecked(m))
    }

    /// Symmetrizes without validating shape or finiteness.
    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        let d = m.nrows();
        let mut out = m;
        for i in 0..d {
            out[(i, i)] = C64::new(out[(i, i)].re, 0.0);
            for j in (i + 1)..d {
                let avg = (out[(i, j)] + out[(j, i)].conj()) * 0.5;
                out[(i, j)] = avg;
                out[(j, i)] = avg.conj();
            }
        }
        Self { mat: out }
    }

    pub fn identity(d: usize) -> Self {
        Self { mat: CMatrix::identity(d, d) }
    }

    pub fn zeros(d: usize) -> Self {
        Self { mat: CMatrix::zeros(d, d) }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut mat = CMatrix::zeros(d, d);
        for (i, &v) in diag.iter().enumerate() {
            mat[(i, i)] = C64::new(v, 0.0);
        }
        Self { mat }
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn projector(state: &PureState) -> Self {
        let a = state.amplitudes();
        Self::from_matrix_unchecked(a * a.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    /// `Re tr(self · other)`, the Hilbert–Schmidt inner product.
    pub fn inner(&self, other: &Self) -> f64 {
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { mat: &self.mat * C64::new(s, 0.0) }
    }

    /// `U H U†`.
    pub fn conjugate_by(&self, u: &CMatrix) -> Self {
        Self::from_matrix_unchecked(u * &self.mat * u.adjoint())
    }

    pub fn eig(&self) -> Result<HermitianEigen> {
        eig_herm(self)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigenvalues(&self.mat)[0]
    }

    pub fn psd_project(&self) -> Self {
        psd_project(self)
    }

    pub fn sqrt_psd(&self) -> Result<Self> {
        matrix_sqrt_psd(self)
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self { mat: self.mat.kronecker(&other.mat) }
    }

    /// Coordinates in the orthonormal Hermitian basis
    /// `{E_aa} ∪ {(E_ab + E_ba)/√2, i(E_ab − E_ba)/√2 : a < b}`.
    pub fn coords(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for a in 0..d {
            out.push(self.mat[(a, a)].re);
        }
        for a in 0..d {
            for b in (a + 1)..d {
                let z = self.mat[(a, b)];
                out.push(std::f64::consts::SQRT_2 * z.re);
                out.push(std::f64::consts::SQRT_2 * z.im);
            }
        }
        out
    }

    /// Inverse of [`HermitianOperator::coords`].
    pub fn from_coords(d: usize, x: &[f64]) -> Self {
        debug_assert_eq!(x.len(), d * d);
        let mut mat = CMatrix::zeros(d, d);
        for a in 0..d {
            mat[(a, a)] = C64::new(x[a], 0.0);
        }
        let mut k = d;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for a in 0..d {
            for b in (a + 1)..d {
                let z = C64::new(s * x[k], s * x[k + 1]);
                mat[(a, b)] = z;
                mat[(b, a)] = z.conj();
                k += 2;
            }
        }
        Self { mat }
    }
}

impl fmt::Debug for HermitianOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermitianOperator(d={}) {}", self.dim(), self.mat)
    }
}

impl Add for &HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: Self) -> HermitianOperator {
        HermitianOperator { mat: &self.mat + &rhs.mat }
    }
}

impl Sub for &HermitianOperator {
    type Output = HermitianOperator;
    fn sub(self, rhs: Self) -> HermitianOperator {
        HermitianOperator { mat: &self.mat - &rhs.mat }
    }
}

impl Mul<f64> for &HermitianOperator {
    type Output = HermitianOperator;
    fn mul(self, rhs: f64) -> HermitianOperator {
        self.scale(rhs)
    }
}

pub(crate) fn eigenvalues(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 1 {
        return vec![m[(0, 0)].re];
    }
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Hermitian eigendecomposition with eigenvalues in ascending order.
pub fn eig_herm(h: &HermitianOperator) -> Result<HermitianEigen> {
    if h.mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return invalid("eigendecomposition of a matrix with non-finite entries");
    }
    let d = h.dim();
    if d == 1 {
        return Ok(HermitianEigen { values: vec![h.mat[(0, 0)].re], vectors: CMatrix::identity(1, 1) });
    }
    let se = SymmetricEigen::new(h.mat.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let values = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(d, d, |i, k| se.eigenvectors[(i, order[k])]);
    Ok(HermitianEigen { values, vectors })
}

/// Nearest PSD operator in Frobenius norm: negative eigenvalues clipped to zero.
pub fn psd_project(h: &HermitianOperator) -> HermitianOperator {
    match eig_herm(h) {
        Ok(e) => {
            if e.values[0] >= 0.0 {
                return h.clone();
            }
            e.reconstruct_with(|l| l.max(0.0))
        }
        Err(_) => h.clone(),
    }
}

/// Principal square root of a PSD operator; eigenvalues in `[-1e-6, 0)` are clipped.
pub fn matrix_sqrt_psd(h: &HermitianOperator) -> Result<HermitianOperator> {
    let e = eig_herm(h)?;
    if e.values[0] < NOT_PSD {
        return Err(Error::NotPsd(e.values[0]));
    }
    Ok(e.reconstruct_with(|l| l.max(0.0).sqrt()))
}

/// `H^{-1/2}` for a positive definite operator whose condition number is at most `max_cond`.
pub(crate) fn inverse_sqrt(h: &HermitianOperator, max_cond: f64) -> Result<HermitianOperator> {
    let e = eig_herm(h)?;
    let lo = e.values[0];
    let hi = *e.values.last().unwrap();
    if lo <= 0.0 || hi / lo > max_cond {
        return Err(Error::NotPsd(lo));
    }
    Ok(e.reconstruct_with(|l| 1.0 / l.sqrt()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: CVector,
}

impl PureState {
    /// Requires a unit-norm vector (to 1e-12).
    pub fn new(amps: CVector) -> Result<Self> {
        let n = amps.norm();
        if amps.is_empty() || (n - 1.0).abs() > 1e-12 {
            return invalid(format!("state vector norm {n} is not 1"));
        }
        Ok(Self { amps })
    }

    /// Normalizes `amps`; fails on a zero or non-finite vector.
    pub fn normalized(amps: CVector) -> Result<Self> {
        let n = amps.norm();
        if !n.is_finite() || n == 0.0 {
            return invalid("cannot normalize a zero or non-finite vector");
        }
        Ok(Self { amps: amps / C64::new(n, 0.0) })
    }

    /// Computational basis ket `|k⟩` of dimension `d`.
    pub fn basis(d: usize, k: usize) -> Self {
        let mut amps = CVector::zeros(d);
        amps[k] = C64::new(1.0, 0.0);
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self { amps: self.amps.kronecker(&other.amps) }
    }

    pub fn density(&self) -> HermitianOperator {
        HermitianOperator::projector(self)
    }

    pub(crate) fn apply(&self, u: &CMatrix) -> Self {
        Self { amps: u * &self.amps }
    }
}

/// Kronecker product with index convention `(a, b) ↦ a·d_B + b`.
pub trait Tensor {
    fn tensor(&self, other: &Self) -> Self;
}

impl Tensor for HermitianOperator {
    fn tensor(&self, other: &Self) -> Self {
        HermitianOperator::tensor(self, other)
    }
}

impl Tensor for PureState {
    fn tensor(&self, other: &Self) -> Self {
        PureState::tensor(self, other)
    }
}

pub fn tensor<T: Tensor>(a: &T, b: &T) -> T {
    a.tensor(b)
}

/// Worst-case violations of the POVM conditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PovmValidity {
    pub min_eigenvalue: f64,
    pub sum_defect: f64,
    pub valid: bool,
}

pub fn validate_povm(elements: &[HermitianOperator], tol_psd: f64, tol_sum: f64) -> Result<PovmValidity> {
    let Some(first) = elements.first() else {
        return invalid("POVM has no elements");
    };
    let d = first.dim();
    let mut sum = CMatrix::zeros(d, d);
    let mut min_eig = f64::INFINITY;
    for e in elements {
        if e.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: e.dim() });
        }
        min_eig = min_eig.min(e.min_eigenvalue());
        sum += e.matrix();
    }
    let defect = (sum - CMatrix::identity(d, d)).norm();
    Ok(PovmValidity {
        min_eigenvalue: min_eig,
        sum_defect: defect,
        valid: min_eig >= -tol_psd && defect <= tol_sum,
    })
}

/// An ordered set of PSD operators resolving the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    dim: usize,
    elements: Vec<HermitianOperator>,
}

impl Povm {
    /// Validates with the default tolerances.
    pub fn new(elements: Vec<HermitianOperator>) -> Result<Self> {
        Self::with_tolerance(elements, POVM_TOL_PSD, POVM_TOL_SUM)
    }

    pub fn with_tolerance(elements: Vec<HermitianOperator>, tol_psd: f64, tol_sum: f64) -> Result<Self> {
        let v = validate_povm(&elements, tol_psd, tol_sum)?;
        if !v.valid {
            return Err(Error::InvalidPovm { min_eigenvalue: v.min_eigenvalue, sum_defect: v.sum_defect });
        }
        Ok(Self { dim: elements[0].dim(), elements })
    }

    /// Wraps a tuple without checking positivity or completeness (dimensions must agree).
    pub fn from_elements_unchecked(elements: Vec<HermitianOperator>) -> Self {
        let dim = elements.first().map_or(0, |e| e.dim());
        Self { dim, elements }
    }

    /// `{𝟙/M, …, 𝟙/M}`.
    pub fn maximally_mixed(d: usize, m: usize) -> Self {
        let e = HermitianOperator::identity(d).scale(1.0 / m as f64);
        Self { dim: d, elements: vec![e; m] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    pub fn into_elements(self) -> Vec<HermitianOperator> {
        self.elements
    }

    pub fn validity(&self, tol_psd: f64, tol_sum: f64) -> Result<PovmValidity> {
        validate_povm(&self.elements, tol_psd, tol_sum)
    }

    /// Element-wise tensor product, outcome `(j, k) ↦ j·M_B + k`.
    pub fn tensor(&self, other: &Povm) -> Povm {
        let elements = self
            .elements
            .iter()
            .flat_map(|a| other.elements.iter().map(move |b| a.tensor(b)))
            .collect();
        Povm { dim: self.dim * other.dim, elements }
    }

    /// Reorders outcomes: element `k` of the result is element `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Povm> {
        let mut seen = vec![false; self.len()];
        if perm.len() != self.len() || perm.iter().any(|&p| p >= self.len() || std::mem::replace(&mut seen[p], true)) {
            return invalid("not a permutation of the outcome labels");
        }
        Ok(Povm { dim: self.dim, elements: perm.iter().map(|&p| self.elements[p].clone()).collect() })
    }
}

// JSON layout: {"dim": d, "elements": [[[re, im], ...], ...]} with row-major rows.

pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(h: &HermitianOperator) -> MatrixJson {
    let d = h.dim();
    (0..d).map(|i| (0..d).map(|j| [h.mat[(i, j)].re, h.mat[(i, j)].im]).collect()).collect()
}

pub fn matrix_from_json(rows: &MatrixJson) -> Result<HermitianOperator> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return invalid("matrix rows must form a square array");
    }
    HermitianOperator::from_matrix(CMatrix::from_fn(d, d, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PovmFile {
    pub dim: usize,
    pub elements: Vec<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<serde_json::Value>,
}

impl PovmFile {
    pub fn from_povm(p: &Povm, spec: Option<serde_json::Value>) -> Self {
        Self { dim: p.dim(), elements: p.elements().iter().map(matrix_to_json).collect(), spec }
    }

    /// Checks dimensions only; positivity and completeness are left to the caller.
    pub fn to_povm_unchecked(&self) -> Result<Povm> {
        let elements = self.elements.iter().map(matrix_from_json).collect::<Result<Vec<_>>>()?;
        if elements.is_empty() {
            return invalid("POVM file has no elements");
        }
        if let Some(e) = elements.iter().find(|e| e.dim() != self.dim) {
            return Err(Error::DimensionMismatch { expected: self.dim, found: e.dim() });
        }
        Ok(Povm::from_elements_unchecked(elements))
    }

    pub fn to_povm(&self) -> Result<Povm> {
        Povm::new(self.to_povm_unchecked()?.into_elements())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_herm(d: usize, rng: &mut ChaCha20Rng) -> HermitianOperator {
        let m = CMatrix::from_fn(d, d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        HermitianOperator::from_matrix(m).unwrap()
    }

    fn random_wishart(d: usize, rng: &mut ChaCha20Rng) -> HermitianOperator {
        let g = CMatrix::from_fn(d, d, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        HermitianOperator::from_matrix(&g * g.adjoint()).unwrap()
    }

    fn sigma_z() -> HermitianOperator {
        HermitianOperator::from_real_diagonal(&[1.0, -1.0])
    }

    #[test]
    fn constructor_symmetrizes() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.3), c(1.0, 1.0), c(3.0, 0.0), c(2.0, 0.0)]);
        let h = HermitianOperator::from_matrix(m).unwrap();
        assert_eq!(h.matrix()[(0, 0)].im, 0.0);
        assert_eq!(h.matrix()[(0, 1)], h.matrix()[(1, 0)].conj());
        assert_eq!(h.matrix()[(0, 1)], c(2.0, 0.5));
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(HermitianOperator::from_matrix(CMatrix::zeros(2, 3)).is_err());
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = c(f64::NAN, 0.0);
        assert!(HermitianOperator::from_matrix(m).is_err());
    }

    #[test]
    fn eig_identity_and_sigma_z() {
        let e = eig_herm(&HermitianOperator::identity(2)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        let e = eig_herm(&sigma_z()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_round_trip_random() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..20 {
            let h = random_herm(4, &mut rng);
            let e = eig_herm(&h).unwrap();
            let back = e.reconstruct_with(|l| l);
            let scale = h.frobenius_norm().max(1.0);
            assert!((&back - &h).frobenius_norm() <= 1e-10 * scale);
            let vtv = e.vectors.adjoint() * &e.vectors;
            assert!((vtv - CMatrix::identity(4, 4)).norm() <= 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn psd_projection_examples() {
        let p = psd_project(&sigma_z());
        assert!((&p - &HermitianOperator::from_real_diagonal(&[1.0, 0.0])).frobenius_norm() < 1e-14);
        let p = psd_project(&HermitianOperator::from_real_diagonal(&[-2.0, -3.0]));
        assert!(p.frobenius_norm() < 1e-14);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let w = random_wishart(3, &mut rng);
        assert!((&psd_project(&w) - &w).frobenius_norm() < 1e-10);
    }

    #[test]
    fn sqrt_examples() {
        let r = matrix_sqrt_psd(&HermitianOperator::from_real_diagonal(&[4.0, 9.0])).unwrap();
        assert!((&r - &HermitianOperator::from_real_diagonal(&[2.0, 3.0])).frobenius_norm() < 1e-12);
        let p0 = HermitianOperator::projector(&PureState::basis(2, 0));
        assert!((&matrix_sqrt_psd(&p0).unwrap() - &p0).frobenius_norm() < 1e-12);
        assert!(matches!(matrix_sqrt_psd(&sigma_z()), Err(Error::NotPsd(_))));
        // tiny negative eigenvalues are clipped
        assert!(matrix_sqrt_psd(&HermitianOperator::from_real_diagonal(&[1.0, -1e-8])).is_ok());
    }

    #[test]
    fn tensor_examples() {
        let i4 = HermitianOperator::identity(2).tensor(&HermitianOperator::identity(2));
        assert_eq!(i4, HermitianOperator::identity(4));
        let k = tensor(&PureState::basis(2, 0), &PureState::basis(2, 1));
        assert_eq!(k, PureState::basis(4, 1));
        let zz = sigma_z().tensor(&sigma_z());
        assert_eq!(zz, HermitianOperator::from_real_diagonal(&[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn validate_examples() {
        let v = validate_povm(&[HermitianOperator::identity(2)], 1e-9, 1e-8).unwrap();
        assert!(v.valid);
        let p0 = HermitianOperator::projector(&PureState::basis(2, 0));
        let p1 = HermitianOperator::projector(&PureState::basis(2, 1));
        assert!(validate_povm(&[p0.clone(), p1], 1e-9, 1e-8).unwrap().valid);
        let bad = validate_povm(&[p0.clone(), p0.clone()], 1e-9, 1e-8).unwrap();
        assert!(!bad.valid);
        assert!((bad.sum_defect - 2f64.sqrt()).abs() < 1e-14);
        let err = validate_povm(&[p0, HermitianOperator::identity(3)], 1e-9, 1e-8);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn coords_round_trip_and_isometry() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let a = random_herm(5, &mut rng);
        let b = random_herm(5, &mut rng);
        let back = HermitianOperator::from_coords(5, &a.coords());
        assert!((&back - &a).frobenius_norm() < 1e-14);
        let dot: f64 = a.coords().iter().zip(b.coords()).map(|(x, y)| x * y).sum();
        assert!((dot - a.inner(&b)).abs() < 1e-12);
    }

    #[test]
    fn pure_state_norm_check() {
        assert!(PureState::new(CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)])).is_err());
        let s = PureState::normalized(CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)])).unwrap();
        assert!((s.amplitudes().norm() - 1.0).abs() < 1e-15);
        assert!(PureState::normalized(CVector::zeros(3)).is_err());
    }

    #[test]
    fn povm_json_round_trip() {
        let p = Povm::new(vec![
            HermitianOperator::projector(&PureState::basis(2, 0)),
            HermitianOperator::projector(&PureState::basis(2, 1)),
        ])
        .unwrap();
        let s = serde_json::to_string(&PovmFile::from_povm(&p, None)).unwrap();
        let back: PovmFile = serde_json::from_str(&s).unwrap();
        assert_eq!(back.to_povm().unwrap(), p);
        assert!(s.starts_with("{\"dim\":2,\"elements\":[[[[1.0,0.0],[0.0,0.0]]"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn herm_strategy(d: usize) -> impl Strategy<Value = HermitianOperator> {
            proptest::collection::vec(-2.0f64..2.0, 2 * d * d).prop_map(move |v| {
                let m = CMatrix::from_fn(d, d, |i, j| C64::new(v[2 * (i * d + j)], v[2 * (i * d + j) + 1]));
                HermitianOperator::from_matrix(m).unwrap()
            })
        }

        proptest! {
            #[test]
            fn psd_project_idempotent(h in herm_strategy(4)) {
                let once = psd_project(&h);
                let twice = psd_project(&once);
                prop_assert!((&once - &twice).frobenius_norm() <= 1e-10 * once.frobenius_norm().max(1.0));
                prop_assert!(once.min_eigenvalue() >= -1e-10);
            }

            #[test]
            fn tensor_associative(a in herm_strategy(2), b in herm_strategy(2), c in herm_strategy(3)) {
                let left = a.tensor(&b).tensor(&c);
                let right = a.tensor(&b.tensor(&c));
                prop_assert!((&left - &right).frobenius_norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn sqrt_round_trip_wishart() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for &d in &[2usize, 3, 4, 8] {
            for _ in 0..100 {
                let w = random_wishart(d, &mut rng);
                let r = matrix_sqrt_psd(&w).unwrap();
                assert!(r.min_eigenvalue() >= -1e-12);
                let r2 = HermitianOperator::from_matrix(r.matrix() * r.matrix()).unwrap();
                assert!((&r2 - &w).frobenius_norm() <= 1e-8 * w.frobenius_norm().max(1.0));
            }
        }
    }
}
