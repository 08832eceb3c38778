//! POVM ensembles: square-root and Haar-random measurements, the two-qubit
//! experiment bases, their rank-2 pair mixtures and tensor-product families.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operators::{inverse_sqrt, CMatrix, HermitianOperator, Povm, PureState};
use crate::probes::{cz_gate, hwp_unitary};
use crate::random::{derive_seed, Gaussian};

const MAX_RETRIES: usize = 5;
const MAX_CONDITION: f64 = 1e12;

/// Fixed first-qubit analyzer angle of the experiment bases, in degrees.
pub const BASIS_THETA_M1: f64 = 22.5;
/// Second-qubit analyzer angles (degrees) for bases 1 through 4.
pub const BASIS_THETA_M2: [f64; 4] = [0.0, 7.0, 14.0, 22.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum EnsembleKind {
    SquareRoot,
    Haar,
    /// Experiment basis `index` (1..=4); `dim` 4 for two qubits, 16 for the product family.
    ProjectiveBasis { index: usize },
    /// Rank-2 cyclic pair mixture of experiment basis `index`.
    PairMixed { index: usize },
    /// Qubit ⊗ rest product of two independent square-root POVMs.
    Product,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PovmEnsembleSpec {
    pub dim: usize,
    pub outcomes: usize,
    pub rank: usize,
    pub kind: EnsembleKind,
    pub seed: u64,
}

impl PovmEnsembleSpec {
    pub fn square_root(dim: usize, outcomes: usize, rank: usize, seed: u64) -> Self {
        Self { dim, outcomes, rank, kind: EnsembleKind::SquareRoot, seed }
    }

    pub fn haar(dim: usize, outcomes: usize, rank: usize, seed: u64) -> Self {
        Self { dim, outcomes, rank, kind: EnsembleKind::Haar, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.outcomes == 0 || self.rank == 0 {
            return invalid("dimension, outcome count and rank must all be positive");
        }
        match self.kind {
            EnsembleKind::SquareRoot | EnsembleKind::Haar if self.dim > self.rank * self.outcomes => {
                invalid(format!("need d <= r*M, got d={} r={} M={}", self.dim, self.rank, self.outcomes))
            }
            EnsembleKind::ProjectiveBasis { index } | EnsembleKind::PairMixed { index } => {
                if !(1..=4).contains(&index) {
                    return invalid(format!("basis index {index} not in 1..=4"));
                }
                if self.dim != 4 && self.dim != 16 {
                    return invalid("experiment bases exist for dim 4 (two qubits) or 16 (four qubits)");
                }
                Ok(())
            }
            EnsembleKind::Product if self.dim % 2 != 0 || self.outcomes % 2 != 0 || self.dim < 2 => {
                invalid("product ensemble needs even dimension and even outcome count")
            }
            EnsembleKind::Product if self.dim / 2 > self.rank * (self.outcomes / 2) => {
                invalid("product ensemble factor violates d <= r*M")
            }
            _ => Ok(()),
        }
    }
}

/// Dispatches on `spec.kind`.
pub fn generate(spec: &PovmEnsembleSpec) -> Result<Povm> {
    spec.validate()?;
    match spec.kind {
        EnsembleKind::SquareRoot => square_root_povm(spec),
        EnsembleKind::Haar => haar_random_povm(spec),
        EnsembleKind::ProjectiveBasis { index } => experiment_basis(index, if spec.dim == 4 { 2 } else { 4 }),
        EnsembleKind::PairMixed { index } => pair_mix(&experiment_basis(index, if spec.dim == 4 { 2 } else { 4 })?),
        EnsembleKind::Product => {
            let a = square_root_povm(&PovmEnsembleSpec::square_root(2, 2, 1, derive_seed(spec.seed, 1, 0)))?;
            let b = square_root_povm(&PovmEnsembleSpec::square_root(
                spec.dim / 2,
                spec.outcomes / 2,
                spec.rank,
                derive_seed(spec.seed, 1, 1),
            ))?;
            Ok(a.tensor(&b))
        }
    }
}

/// `Π_j = S^{-1/2} A_j A_j† S^{-1/2}` with `S = Σ A_j A_j†` and `A_j` d×r Ginibre.
pub fn square_root_povm(spec: &PovmEnsembleSpec) -> Result<Povm> {
    let (d, m, r) = (spec.dim, spec.outcomes, spec.rank);
    if d == 0 || m == 0 || r == 0 {
        return invalid("dimension, outcome count and rank must all be positive");
    }
    let mut g = Gaussian::new(spec.seed);
    for _ in 0..=MAX_RETRIES {
        let grams: Vec<HermitianOperator> = (0..m)
            .map(|_| {
                let a = g.ginibre(d, r);
                HermitianOperator::from_matrix_unchecked(&a * a.adjoint())
            })
            .collect();
        let s = grams.iter().skip(1).fold(grams[0].clone(), |acc, x| &acc + x);
        let Ok(s_inv_half) = inverse_sqrt(&s, MAX_CONDITION) else {
            continue;
        };
        let elements = grams.iter().map(|a| a.conjugate_by(s_inv_half.matrix())).collect();
        return Povm::new(elements);
    }
    Err(Error::GenerationFailed { attempts: MAX_RETRIES + 1, reason: "frame operator S is singular".into() })
}

/// Haar-distributed `n×n` unitary from the QR decomposition of a Ginibre
/// matrix, with the phases of `diag(R)` folded back into `Q`.
pub(crate) fn haar_unitary(n: usize, g: &mut Gaussian) -> Option<CMatrix> {
    let a = g.ginibre(n, n);
    let qr = a.qr();
    let (mut q, r) = qr.unpack();
    for k in 0..n {
        let rk = r[(k, k)];
        if rk.norm() == 0.0 {
            return None;
        }
        let phase = rk / rk.norm();
        for i in 0..n {
            q[(i, k)] *= phase;
        }
    }
    Some(q)
}

/// `Π_j = V† (|j⟩⟨j| ⊗ 𝟙_r) V` for a Haar isometry `V` made of the first `d`
/// columns of an `rM×rM` Haar unitary.
pub fn haar_random_povm(spec: &PovmEnsembleSpec) -> Result<Povm> {
    let (d, m, r) = (spec.dim, spec.outcomes, spec.rank);
    if d == 0 || m == 0 || r == 0 || d > r * m {
        return invalid(format!("need 1 <= d <= r*M, got d={d} r={r} M={m}"));
    }
    let n = r * m;
    let mut g = Gaussian::new(spec.seed);
    for _ in 0..=MAX_RETRIES {
        let Some(u) = haar_unitary(n, &mut g) else {
            continue;
        };
        let v = u.columns(0, d).into_owned();
        let elements = (0..m)
            .map(|j| {
                let block = v.rows(j * r, r);
                HermitianOperator::from_matrix_unchecked(block.adjoint() * block)
            })
            .collect();
        return Povm::new(elements);
    }
    Err(Error::GenerationFailed { attempts: MAX_RETRIES + 1, reason: "zero diagonal in R".into() })
}

/// Kets `|ψ_j⟩ = U_CZ [HWP(θ_m1) ⊗ HWP(θ_m2)] |l l'⟩`, `j = 2l + l'`.
pub fn experiment_kets(index: usize) -> Result<Vec<PureState>> {
    if !(1..=4).contains(&index) {
        return invalid(format!("basis index {index} not in 1..=4"));
    }
    let local = hwp_unitary(BASIS_THETA_M1).kronecker(&hwp_unitary(BASIS_THETA_M2[index - 1]));
    let u = cz_gate() * local;
    Ok((0..4).map(|j| PureState::basis(4, j).apply(&u)).collect())
}

/// Rank-1 experiment basis `index`: 4 outcomes on two qubits, or the
/// 16-outcome product family `Π_j ⊗ Π_k` (outcome `4j + k`) on four qubits.
pub fn experiment_basis(index: usize, n_qubits: usize) -> Result<Povm> {
    let two = Povm::new(experiment_kets(index)?.iter().map(HermitianOperator::projector).collect())?;
    match n_qubits {
        2 => Ok(two),
        4 => Ok(two.tensor(&two)),
        _ => invalid(format!("experiment bases are defined for 2 or 4 qubits, not {n_qubits}")),
    }
}

fn check_orthonormal_rank_one(p: &Povm) -> Result<()> {
    let tol = 1e-8;
    for (a, pa) in p.elements().iter().enumerate() {
        let sq = pa.matrix() * pa.matrix();
        if (sq - pa.matrix()).norm() > tol || (pa.trace() - 1.0).abs() > tol {
            return invalid(format!("element {a} is not a rank-1 projector"));
        }
        for pb in &p.elements()[a + 1..] {
            if (pa.matrix() * pb.matrix()).norm() > tol {
                return invalid("basis elements are not mutually orthogonal");
            }
        }
    }
    Ok(())
}

/// Cyclic pair mixture `(Π_j + Π_{j⊕1})/2` with `⊕` addition modulo 4.
///
/// For the 16-outcome four-qubit product family the mixture acts on both
/// labels at once: `(Π_j⊗Π_k + Π_{j⊕1}⊗Π_{k⊕1})/2`.
pub fn pair_mix(p: &Povm) -> Result<Povm> {
    let partner: Box<dyn Fn(usize) -> usize> = match (p.len(), p.dim()) {
        (4, 4) => Box::new(|j| (j + 1) % 4),
        (16, 16) => Box::new(|jk| 4 * ((jk / 4 + 1) % 4) + (jk % 4 + 1) % 4),
        (m, d) => return invalid(format!("pair mixing needs a 4-outcome two-qubit or 16-outcome four-qubit basis, got M={m} d={d}")),
    };
    check_orthonormal_rank_one(p)?;
    let els = p.elements();
    let mixed = (0..p.len()).map(|j| (&els[j] + &els[partner(j)]).scale(0.5)).collect();
    Povm::new(mixed)
}

/// Schmidt coefficients of a two-qudit ket across the `d_a | d_b` cut.
pub fn schmidt_coefficients(state: &PureState, d_a: usize) -> Result<Vec<f64>> {
    let n = state.dim();
    if d_a == 0 || n % d_a != 0 {
        return invalid(format!("dimension {n} does not factor with d_A = {d_a}"));
    }
    let d_b = n / d_a;
    let a = state.amplitudes();
    let m = CMatrix::from_fn(d_a, d_b, |i, j| a[i * d_b + j]);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

pub fn schmidt_rank(state: &PureState, d_a: usize, tol: f64) -> Result<usize> {
    Ok(schmidt_coefficients(state, d_a)?.iter().filter(|&&s| s > tol).count())
}
