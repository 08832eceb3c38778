//! Douglas–Rachford splitting between the PSD cone and the affine/objective
//! part. Both steps are exact: an eigenvalue clip per element, and a linear
//! solve whose matrix is factored once per problem.

use nalgebra::{DMatrix, DVector};

use super::{stack, unstack, AffineProjector, FeasibilityProblem, SolverSettings};
use crate::operators::{psd_project, HermitianOperator};

fn project_psd(v: &DVector<f64>, d: usize, m: usize) -> DVector<f64> {
    let parts: Vec<HermitianOperator> = unstack(v, d, m).iter().map(psd_project).collect();
    stack(&parts)
}

fn start(problem: &FeasibilityProblem, initial: Option<&[HermitianOperator]>) -> DVector<f64> {
    let d = problem.dim();
    let m = problem.outcomes();
    match initial {
        Some(x) => stack(x),
        None => stack(&vec![HermitianOperator::identity(d).scale(1.0 / m as f64); m]),
    }
}

/// `z ← z + λ(P_K(2x − z) − x)` with `x = prox(z)`; stops once the two
/// half-steps agree to `tol_feas`. Returns `(x, y, converged, iterations)`.
fn iterate(
    mut z: DVector<f64>,
    prox: impl Fn(&DVector<f64>) -> DVector<f64>,
    d: usize,
    m: usize,
    settings: &SolverSettings,
) -> (DVector<f64>, DVector<f64>, bool, usize) {
    let mut x = prox(&z);
    let mut y = project_psd(&(&x * 2.0 - &z), d, m);
    for it in 1..=settings.max_iterations {
        z += (&y - &x) * settings.relaxation;
        x = prox(&z);
        y = project_psd(&(&x * 2.0 - &z), d, m);
        if (&x - &y).norm() <= settings.tol_feas {
            return (x, y, true, it);
        }
    }
    (x, y, false, settings.max_iterations)
}

pub(super) fn least_squares(
    problem: &FeasibilityProblem,
    settings: &SolverSettings,
    initial: Option<&[HermitianOperator]>,
) -> (Vec<HermitianOperator>, bool, usize) {
    let d = problem.dim();
    let m = problem.outcomes();
    let n = d * d;
    let q = problem.probe_rows();
    let gamma = 1.0;

    // KKT system of argmin_x ‖Dx − ν‖² + ‖x − v‖²/(2γ) s.t. Σ_j x_j = 𝟙
    let size = (m + 1) * n;
    let qtq = q.tr_mul(&q) * 2.0;
    let mut kkt = DMatrix::<f64>::zeros(size, size);
    for j in 0..m {
        let mut block = qtq.clone();
        for k in 0..n {
            block[(k, k)] += 1.0 / gamma;
            kkt[(j * n + k, m * n + k)] = 1.0;
            kkt[(m * n + k, j * n + k)] = 1.0;
        }
        kkt.view_mut((j * n, j * n), (n, n)).copy_from(&block);
    }
    let inv = kkt.try_inverse().unwrap_or_else(|| DMatrix::zeros(size, size));
    let mut fixed = DVector::<f64>::zeros(size);
    for j in 0..m {
        let nu = DVector::from_iterator(q.nrows(), problem.targets().iter().map(|t| t[j]));
        fixed.rows_mut(j * n, n).copy_from(&(q.tr_mul(&nu) * 2.0));
    }
    fixed.rows_mut(m * n, n).copy_from_slice(&HermitianOperator::identity(d).coords());

    let prox = |v: &DVector<f64>| {
        let mut rhs = fixed.clone();
        rhs.rows_mut(0, m * n).axpy(1.0 / gamma, v, 1.0);
        (&inv * rhs).rows(0, m * n).into_owned()
    };
    let (_, y, ok, it) = iterate(start(problem, initial), prox, d, m, settings);
    (unstack(&y, d, m), ok, it)
}

pub(super) fn extremum(
    problem: &FeasibilityProblem,
    witnesses: &[HermitianOperator],
    sign: f64,
    settings: &SolverSettings,
) -> (Vec<HermitianOperator>, bool, usize) {
    let d = problem.dim();
    let m = problem.outcomes();
    let proj = AffineProjector::new(problem);
    let c = stack(witnesses) * sign;
    let z0 = start(problem, None);
    let gamma = z0.norm() / c.norm().max(1e-12);
    let shift = &c * gamma;
    let prox = |v: &DVector<f64>| proj.project(&(v - &shift));
    let (x, _, ok, it) = iterate(z0, prox, d, m, settings);
    (unstack(&x, d, m), ok, it)
}
