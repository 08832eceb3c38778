//! Choi-operator fidelity between measurements, rank statistics and the
//! phase-retrieval probe-count benchmark.

use crate::error::{invalid, Error, Result};
use crate::operators::{eigenvalues, matrix_sqrt_psd, CMatrix, HermitianOperator, Povm, C64};

/// Trace-normalized Choi operator of a measurement, a `d² × d²` density matrix.
#[derive(Clone, Debug)]
pub struct ChoiOperator {
    dim: usize,
    op: HermitianOperator,
    /// `V` with `E = V V†`, one column per outcome.
    factor: CMatrix,
}

impl ChoiOperator {
    /// Dimension of the measured system (the operator itself is `d² × d²`).
    pub fn system_dim(&self) -> usize {
        self.dim
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.op
    }
}

/// `E = (1/d) Σ_j vec(K_j) vec(K_j)†` with `K_j = √Π_j`, row index `a·d + l`.
pub fn choi_of_povm(p: &Povm) -> Result<ChoiOperator> {
    let v = p.validity(1e-8, 1e-7)?;
    if !v.valid {
        return Err(Error::InvalidPovm { min_eigenvalue: v.min_eigenvalue, sum_defect: v.sum_defect });
    }
    let d = p.dim();
    let n = d * d;
    let mut factor = CMatrix::zeros(n, p.len());
    for (j, el) in p.elements().iter().enumerate() {
        let k = matrix_sqrt_psd(&el.psd_project())?;
        let k = k.matrix();
        for i in 0..n {
            factor[(i, j)] = k[(i / d, i % d)];
        }
    }
    factor *= C64::new(1.0 / (d as f64).sqrt(), 0.0);
    let e = &factor * factor.adjoint();
    let op = HermitianOperator::from_matrix(e)?;
    let tr = op.trace();
    let min = op.min_eigenvalue();
    if (tr - 1.0).abs() > 1e-9 || min < -1e-9 {
        return invalid(format!("Choi operator out of tolerance: trace {tr}, min eigenvalue {min}"));
    }
    Ok(ChoiOperator { dim: d, op, factor })
}

/// Uhlmann fidelity `(tr √(√E E′ √E))²` of two Choi operators.
pub fn choi_fidelity(a: &ChoiOperator, b: &ChoiOperator) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    // with E = V V† and E′ = W W†, tr √(√E E′ √E) is the nuclear norm of
    // V†W; the SVD avoids square roots of rounding-level eigenvalues
    let cross = a.factor.adjoint() * &b.factor;
    let root_trace: f64 = cross.singular_values().iter().sum();
    Ok((root_trace * root_trace).min(1.0))
}

/// Fidelity between two measurements on the same system; outcome counts may differ.
pub fn povm_fidelity(p: &Povm, q: &Povm) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: q.dim() });
    }
    choi_fidelity(&choi_of_povm(p)?, &choi_of_povm(q)?)
}

/// Number of eigenvalues above `tau · λ_max`; zero when `λ_max ≤ 1e-12`.
pub fn numerical_rank(h: &HermitianOperator, tau: f64) -> usize {
    let ev = eigenvalues(h.matrix());
    let top = ev.last().copied().unwrap_or(0.0);
    if top <= 1e-12 {
        return 0;
    }
    ev.iter().filter(|&&l| l > tau * top).count()
}

/// Eigenvalues of every element, each list sorted in descending order.
pub fn spectrum(p: &Povm) -> Vec<Vec<f64>> {
    p.elements()
        .iter()
        .map(|e| {
            let mut ev = eigenvalues(e.matrix());
            ev.reverse();
            ev
        })
        .collect()
}

/// Mean numerical rank of the elements of `p`.
pub fn mean_rank(p: &Povm, tau: f64) -> f64 {
    let n = p.len().max(1) as f64;
    p.elements().iter().map(|e| numerical_rank(e, tau) as f64).sum::<f64>() / n
}

/// Probe count at which rank-`r` phase retrieval in dimension `d` becomes
/// informationally complete. At `r = ⌈d/2⌉` the `d²` branch applies.
pub fn phase_retrieval_ic(d: usize, r: usize) -> Result<usize> {
    if r == 0 || r > d {
        return invalid(format!("rank {r} outside 1..={d}"));
    }
    if r < d.div_ceil(2) {
        Ok(4 * d * r - 4 * r * r)
    } else {
        Ok(d * d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::PureState;
    use crate::povm_gen::{generate, PovmEnsembleSpec};
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn basis_povm(kets: &[PureState]) -> Povm {
        Povm::new(kets.iter().map(HermitianOperator::projector).collect()).unwrap()
    }

    fn z_basis() -> Povm {
        basis_povm(&[PureState::basis(2, 0), PureState::basis(2, 1)])
    }

    fn x_basis() -> Povm {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = PureState::new(DVector::from_vec(vec![C64::new(s, 0.0), C64::new(s, 0.0)])).unwrap();
        let minus = PureState::new(DVector::from_vec(vec![C64::new(s, 0.0), C64::new(-s, 0.0)])).unwrap();
        basis_povm(&[plus, minus])
    }

    /// Fidelity as the squared trace norm of `√E √E′`, via singular values.
    fn svd_fidelity(a: &ChoiOperator, b: &ChoiOperator) -> f64 {
        let sa = matrix_sqrt_psd(&a.op).unwrap();
        let sb = matrix_sqrt_psd(&b.op).unwrap();
        let prod = sa.matrix() * sb.matrix();
        let nuclear: f64 = prod.singular_values().iter().sum();
        nuclear * nuclear
    }

    #[test]
    fn computational_basis_choi() {
        let e = choi_of_povm(&z_basis()).unwrap();
        let mut expected = CMatrix::zeros(4, 4);
        expected[(0, 0)] = C64::new(0.5, 0.0);
        expected[(3, 3)] = C64::new(0.5, 0.0);
        assert!((e.op.matrix() - expected).norm() < 1e-12);
    }

    #[test]
    fn trivial_measurement_gives_maximally_entangled_state() {
        let d = 3;
        let e = choi_of_povm(&Povm::maximally_mixed(d, 1)).unwrap();
        let phi = CMatrix::from_fn(d * d, 1, |i, _| {
            if i / d == i % d {
                C64::new(1.0 / (d as f64).sqrt(), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        assert!((e.op.matrix() - &phi * phi.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn z_x_fidelity_is_one_quarter() {
        let f = povm_fidelity(&z_basis(), &x_basis()).unwrap();
        assert!((f - 0.25).abs() < 1e-9, "{f}");
        let oracle = svd_fidelity(&choi_of_povm(&z_basis()).unwrap(), &choi_of_povm(&x_basis()).unwrap());
        assert!((f - oracle).abs() < 1e-9);
    }

    #[test]
    fn self_and_permuted_fidelity() {
        let p = generate(&PovmEnsembleSpec::square_root(3, 5, 1, 4)).unwrap();
        assert!((povm_fidelity(&p, &p).unwrap() - 1.0).abs() < 1e-9);
        let q = p.permuted(&[4, 2, 0, 1, 3]).unwrap();
        assert!((povm_fidelity(&p, &q).unwrap() - 1.0).abs() < 1e-9);
        let ep = choi_of_povm(&p).unwrap();
        let eq = choi_of_povm(&q).unwrap();
        assert!((ep.op.matrix() - eq.op.matrix()).norm() < 1e-12);
    }

    #[test]
    fn choi_is_density_for_random_povms() {
        for d in [2, 4, 8] {
            for seed in 0..100u64 {
                let p = generate(&PovmEnsembleSpec::square_root(d, d + 1, 1 + (seed as usize % 2), seed)).unwrap();
                let e = choi_of_povm(&p).unwrap();
                assert!((e.op.trace() - 1.0).abs() < 1e-9);
                assert!(e.op.min_eigenvalue() > -1e-9);
            }
        }
    }

    #[test]
    fn dimension_mismatch_errors() {
        assert!(povm_fidelity(&Povm::maximally_mixed(2, 2), &Povm::maximally_mixed(3, 2)).is_err());
    }

    #[test]
    fn ranks() {
        let proj = HermitianOperator::projector(&PureState::basis(4, 2));
        assert_eq!(numerical_rank(&proj, 1e-2), 1);
        let mixed = HermitianOperator::from_real_diagonal(&[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(numerical_rank(&mixed, 1e-2), 2);
        assert_eq!(numerical_rank(&HermitianOperator::zeros(3), 1e-2), 0);
        let s = spectrum(&Povm::new(vec![mixed.clone(), &HermitianOperator::identity(4) - &mixed]).unwrap());
        for (got, want) in s[0].iter().zip([0.5, 0.5, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(s[1].windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn phase_retrieval_values() {
        for d in 3..40 {
            assert_eq!(phase_retrieval_ic(d, 1).unwrap(), 4 * d - 4);
            for r in d.div_ceil(2)..=d {
                assert_eq!(phase_retrieval_ic(d, r).unwrap(), d * d);
            }
        }
        assert_eq!(phase_retrieval_ic(4, 2).unwrap(), 16);
        assert_eq!(phase_retrieval_ic(16, 2).unwrap(), 112);
        assert_eq!(phase_retrieval_ic(6, 2).unwrap(), 32);
        assert_eq!(phase_retrieval_ic(8, 3).unwrap(), 60);
        assert_eq!(phase_retrieval_ic(2, 1).unwrap(), 4);
        assert!(phase_retrieval_ic(4, 0).is_err());
        assert!(phase_retrieval_ic(4, 5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn fidelity_symmetric_and_bounded(s1 in 0u64..1000, s2 in 0u64..1000, m in 3usize..6) {
            let p = generate(&PovmEnsembleSpec::square_root(3, m, 1, s1)).unwrap();
            let q = generate(&PovmEnsembleSpec::square_root(3, m + 1, 2, s2)).unwrap();
            let a = povm_fidelity(&p, &q).unwrap();
            let b = povm_fidelity(&q, &p).unwrap();
            prop_assert!((a - b).abs() <= 1e-9);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
