//! Convex programs over tuples of PSD matrices summing to the identity:
//! the constrained least-squares fit and linear extremum problems over the
//! set of measurements consistent with recorded probabilities.
//!
//! Two engines are available. [`Algorithm::InteriorPoint`] (default) is a
//! structured primal–dual method; [`Algorithm::Splitting`] is a
//! Douglas–Rachford scheme alternating PSD and affine projections.

mod ipm;
mod splitting;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operators::{inverse_sqrt, psd_project, CMatrix, HermitianOperator, Povm, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    InteriorPoint,
    Splitting,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Iteration cap for the splitting engine; the interior-point engine
    /// uses `min(max_iterations, 150)`.
    pub max_iterations: usize,
    /// Feasibility tolerance `ε_p`.
    pub tol_feas: f64,
    /// Objective tolerance `ε_obj`, relative to `max(1, objective scale)`.
    pub tol_obj: f64,
    /// Over-relaxation of the splitting update, in `(0, 2)`.
    pub relaxation: f64,
    /// Largest admissible residual of a data constraint.
    pub slack: f64,
    pub algorithm: Algorithm,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { max_iterations: 200_000, tol_feas: 1e-8, tol_obj: 1e-7, relaxation: 1.0, slack: 1e-7, algorithm: Algorithm::InteriorPoint }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol_feas, self.tol_obj, self.slack].iter().all(|t| t.is_finite() && *t > 0.0);
        if !positive {
            return invalid("tolerances and slack must be positive");
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return invalid("relaxation must lie in (0, 2)");
        }
        if self.max_iterations == 0 {
            return invalid("max_iterations must be positive");
        }
        Ok(())
    }

    fn ipm_iterations(&self) -> usize {
        self.max_iterations.min(150)
    }
}

/// The set of `M`-outcome measurements on `C^d` reproducing given
/// probabilities `p̂_{jl} = tr(ρ_l Π_j)` on a list of probes.
#[derive(Clone, Debug)]
pub struct FeasibilityProblem {
    dim: usize,
    outcomes: usize,
    probes: Vec<HermitianOperator>,
    /// `targets[l][j]`
    targets: Vec<Vec<f64>>,
    /// A measurement known to satisfy the constraints, if any.
    known_point: Option<Vec<HermitianOperator>>,
}

impl FeasibilityProblem {
    /// Unit-sum constraint only.
    pub fn new(dim: usize, outcomes: usize) -> Result<Self> {
        if dim == 0 || outcomes == 0 {
            return invalid("dimension and outcome count must be positive");
        }
        Ok(Self { dim, outcomes, probes: Vec::new(), targets: Vec::new(), known_point: None })
    }

    pub fn with_data(dim: usize, outcomes: usize, probes: Vec<HermitianOperator>, targets: Vec<Vec<f64>>) -> Result<Self> {
        let mut p = Self::new(dim, outcomes)?;
        if probes.len() != targets.len() {
            return Err(Error::DimensionMismatch { expected: probes.len(), found: targets.len() });
        }
        for (rho, t) in probes.iter().zip(&targets) {
            if rho.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: rho.dim() });
            }
            if t.len() != outcomes {
                return Err(Error::DimensionMismatch { expected: outcomes, found: t.len() });
            }
            if t.iter().any(|x| !x.is_finite()) {
                return invalid("non-finite target probability");
            }
        }
        p.probes = probes;
        p.targets = targets;
        Ok(p)
    }

    /// Constraints reproducing the probabilities of `povm`, which is kept as
    /// a certificate of feasibility.
    pub fn from_povm(povm: &Povm, probes: Vec<HermitianOperator>) -> Result<Self> {
        let targets = probes.iter().map(|rho| povm.elements().iter().map(|e| rho.inner(e)).collect()).collect();
        let mut p = Self::with_data(povm.dim(), povm.len(), probes, targets)?;
        p.known_point = Some(povm.elements().to_vec());
        Ok(p)
    }

    pub fn known_point(&self) -> Option<&[HermitianOperator]> {
        self.known_point.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn probes(&self) -> &[HermitianOperator] {
        &self.probes
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    /// Largest absolute violation of any equality constraint by `x`.
    pub fn constraint_residual(&self, x: &[HermitianOperator]) -> f64 {
        let d = self.dim;
        let mut sum = CMatrix::zeros(d, d);
        for el in x {
            sum += el.matrix();
        }
        sum -= CMatrix::identity(d, d);
        let mut worst = sum.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (rho, t) in self.probes.iter().zip(&self.targets) {
            for (el, &target) in x.iter().zip(t) {
                worst = worst.max((rho.inner(el) - target).abs());
            }
        }
        worst
    }

    fn check_tuple(&self, x: &[HermitianOperator]) -> Result<()> {
        if x.len() != self.outcomes {
            return Err(Error::DimensionMismatch { expected: self.outcomes, found: x.len() });
        }
        if let Some(bad) = x.iter().find(|e| e.dim() != self.dim) {
            return Err(Error::DimensionMismatch { expected: self.dim, found: bad.dim() });
        }
        Ok(())
    }

    fn probe_rows(&self) -> DMatrix<f64> {
        let n = self.dim * self.dim;
        let mut q = DMatrix::zeros(self.probes.len(), n);
        for (l, rho) in self.probes.iter().enumerate() {
            for (k, v) in rho.coords().into_iter().enumerate() {
                q[(l, k)] = v;
            }
        }
        q
    }
}

/// Stacked coordinates `[x_0; …; x_{M−1}]` of a tuple.
fn stack(x: &[HermitianOperator]) -> DVector<f64> {
    let n = x.first().map_or(0, |e| e.dim() * e.dim());
    let mut v = DVector::zeros(n * x.len());
    for (j, el) in x.iter().enumerate() {
        v.rows_mut(j * n, n).copy_from_slice(&el.coords());
    }
    v
}

fn unstack(v: &DVector<f64>, d: usize, m: usize) -> Vec<HermitianOperator> {
    let n = d * d;
    (0..m).map(|j| HermitianOperator::from_coords(d, v.rows(j * n, n).as_slice())).collect()
}

/// Precomputed Euclidean projector onto the affine constraint set.
pub(crate) struct AffineProjector {
    a: DMatrix<f64>,
    gram_pinv: DMatrix<f64>,
    b: DVector<f64>,
}

impl AffineProjector {
    pub(crate) fn new(problem: &FeasibilityProblem) -> Self {
        let d = problem.dim;
        let m = problem.outcomes;
        let n = d * d;
        let q = problem.probe_rows();
        let l = q.nrows();
        let rows = n + l * m;
        let mut a = DMatrix::zeros(rows, n * m);
        let mut b = DVector::zeros(rows);
        for j in 0..m {
            for k in 0..n {
                a[(k, j * n + k)] = 1.0;
            }
            for p in 0..l {
                a.view_mut((n + j * l + p, j * n), (1, n)).copy_from(&q.row(p));
                b[n + j * l + p] = problem.targets[p][j];
            }
        }
        for k in 0..d {
            b[k] = 1.0;
        }
        let gram = &a * a.transpose();
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let cutoff = 1e-10 * top.max(1e-300);
        let inv = eig.eigenvalues.map(|v| if v > cutoff { 1.0 / v } else { 0.0 });
        let gram_pinv = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
        Self { a, gram_pinv, b }
    }

    pub(crate) fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = &self.a * x - &self.b;
        x - self.a.tr_mul(&(&self.gram_pinv * r))
    }
}

/// Frobenius projection of a tuple onto the affine constraints of `problem`
/// (minimum-norm correction when the constraints are rank deficient).
pub fn project_affine(x: &[HermitianOperator], problem: &FeasibilityProblem) -> Result<Vec<HermitianOperator>> {
    problem.check_tuple(x)?;
    let proj = AffineProjector::new(problem);
    Ok(unstack(&proj.project(&stack(x)), problem.dim, problem.outcomes))
}

#[derive(Clone, Debug)]
pub struct LsSolution {
    pub povm: Povm,
    /// `fitted[l][j] = tr(ρ_l Π̂_j)`
    pub fitted: Vec<Vec<f64>>,
    /// `Σ_l ‖p̂_l − ν_l‖²`
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Constrained least-squares estimate from probes and measured frequencies.
pub fn constrained_ls(
    dim: usize,
    outcomes: usize,
    probes: &[HermitianOperator],
    freqs: &[Vec<f64>],
    settings: &SolverSettings,
) -> Result<LsSolution> {
    constrained_ls_from(dim, outcomes, probes, freqs, settings, None)
}

/// As [`constrained_ls`], started from a given tuple (used for restarts).
pub fn constrained_ls_from(
    dim: usize,
    outcomes: usize,
    probes: &[HermitianOperator],
    freqs: &[Vec<f64>],
    settings: &SolverSettings,
    initial: Option<&[HermitianOperator]>,
) -> Result<LsSolution> {
    settings.validate()?;
    let problem = FeasibilityProblem::with_data(dim, outcomes, probes.to_vec(), freqs.to_vec())?;
    for (l, nu) in freqs.iter().enumerate() {
        let s: f64 = nu.iter().sum();
        if (s - 1.0).abs() > 1e-6 || nu.iter().any(|&x| x < -1e-9) {
            return invalid(format!("frequencies of probe {l} are not a probability vector"));
        }
    }
    if let Some(init) = initial {
        problem.check_tuple(init)?;
    }
    if probes.is_empty() {
        let povm = Povm::maximally_mixed(dim, outcomes);
        return Ok(LsSolution { povm, fitted: Vec::new(), objective: 0.0, converged: true, iterations: 0 });
    }

    let (raw, converged, iterations) = match settings.algorithm {
        Algorithm::InteriorPoint => ls_interior_point(&problem, settings, initial),
        Algorithm::Splitting => splitting::least_squares(&problem, settings, initial),
    };
    let povm = repair(raw)?;
    let fitted: Vec<Vec<f64>> = probes.iter().map(|rho| povm.elements().iter().map(|e| rho.inner(e)).collect()).collect();
    for (l, row) in fitted.iter().enumerate() {
        let s: f64 = row.iter().sum();
        let tr = probes[l].trace();
        if (s - tr).abs() > 1e-9 {
            return invalid(format!("fitted probabilities of probe {l} sum to {s}"));
        }
    }
    let objective = fitted.iter().zip(freqs).map(|(p, nu)| p.iter().zip(nu).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sum();
    Ok(LsSolution { povm, fitted, objective, converged, iterations })
}

/// Interior starting tuple near `init`.
fn interior_start(init: &[HermitianOperator]) -> Vec<CMatrix> {
    let m = init.len();
    let d = init[0].dim();
    let t = 1e-2;
    let tuple: Vec<HermitianOperator> = init
        .iter()
        .map(|e| &(&psd_project(e) * (1.0 - t)) + &HermitianOperator::identity(d).scale(t / m as f64))
        .collect();
    match repair(tuple.clone()) {
        Ok(p) => p.into_elements().into_iter().map(HermitianOperator::into_matrix).collect(),
        Err(_) => vec![CMatrix::identity(d, d) * C64::new(1.0 / m as f64, 0.0); m],
    }
}

fn ls_interior_point(
    problem: &FeasibilityProblem,
    settings: &SolverSettings,
    initial: Option<&[HermitianOperator]>,
) -> (Vec<HermitianOperator>, bool, usize) {
    let d = problem.dim;
    let m = problem.outcomes;
    let n = d * d;
    let q = problem.probe_rows();
    let h = (0..m).map(|j| DVector::from_iterator(q.nrows(), problem.targets.iter().map(|t| t[j]))).collect();
    let data = ipm::SdpData {
        d,
        blocks: m,
        c: vec![DVector::zeros(n); m],
        b_unit: DVector::from_vec(HermitianOperator::identity(d).coords()),
        q,
        data_blocks: m,
        h,
        slack: ipm::DataSlack::LeastSquares,
    };
    // the objective is quadratic in the residuals, so it is driven far
    // below tol_obj for the fitted probabilities to be accurate
    let opts = ipm::IpmOptions {
        max_iterations: settings.ipm_iterations(),
        gap_tol: 1e-6 * settings.tol_obj,
        feas_tol: 1e-2 * settings.tol_feas,
        initial: initial.map(interior_start),
    };
    let res = ipm::solve(&data, &opts);
    let ok = res.converged
        || (res.relative_gap <= settings.tol_obj && res.primal_infeasibility <= settings.tol_feas && res.dual_infeasibility <= settings.tol_feas);
    let x = res.x.into_iter().map(HermitianOperator::from_matrix_unchecked).collect();
    (x, ok, res.iterations)
}

/// Clips every element to the PSD cone and restores the unit sum by
/// congruence with `S^{−1/2}`, `S = Σ_j Π_j`.
pub fn repair(x: Vec<HermitianOperator>) -> Result<Povm> {
    let Some(first) = x.first() else {
        return invalid("empty tuple");
    };
    let d = first.dim();
    let clipped: Vec<HermitianOperator> = x.iter().map(psd_project).collect();
    let mut sum = HermitianOperator::zeros(d);
    for e in &clipped {
        sum = &sum + e;
    }
    let w = inverse_sqrt(&sum, 1e12)?;
    let elements = clipped.iter().map(|e| psd_project(&e.conjugate_by(w.matrix()))).collect();
    Ok(Povm::from_elements_unchecked(elements))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Min,
    Max,
}

#[derive(Clone, Debug)]
pub struct ExtremumSolution {
    pub value: f64,
    pub elements: Vec<HermitianOperator>,
    /// Largest equality-constraint violation of `elements`.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// A linear objective `Σ_j ⟨Z_j, Π_j⟩` over a feasibility problem, prepared
/// once and solvable in both directions.
pub struct ExtremumProgram<'a> {
    problem: &'a FeasibilityProblem,
    witnesses: Vec<HermitianOperator>,
    scale: f64,
    /// Bound on raw-row residuals per unit of orthonormal-row residual.
    gain: f64,
    data: ipm::SdpData,
}

impl<'a> ExtremumProgram<'a> {
    pub fn new(problem: &'a FeasibilityProblem, witnesses: &[HermitianOperator]) -> Result<Self> {
        problem.check_tuple(witnesses)?;
        let d = problem.dim;
        let m = problem.outcomes;
        let n = d * d;

        // orthonormal basis of the probe span; the last element's data rows
        // follow from the others through the unit-sum constraint
        let raw = problem.probe_rows();
        let mut gain = 0.0f64;
        let (q, transform) = if raw.nrows() == 0 {
            (DMatrix::zeros(0, n), DMatrix::zeros(0, 0))
        } else {
            let eig = SymmetricEigen::new(&raw * raw.transpose());
            let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
            let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > 1e-12 * top).collect();
            let mut t = DMatrix::zeros(keep.len(), raw.nrows());
            for (r, &i) in keep.iter().enumerate() {
                let s = 1.0 / eig.eigenvalues[i].sqrt();
                t.row_mut(r).copy_from(&(eig.eigenvectors.column(i).transpose() * s));
            }
            for row in 0..raw.nrows() {
                let g: f64 = keep.iter().map(|&i| eig.eigenvectors[(row, i)].abs() * eig.eigenvalues[i].sqrt()).sum();
                gain = gain.max(g);
            }
            (&t * &raw, t)
        };
        let data_blocks = if q.nrows() == 0 { 0 } else { m - 1 };
        let h = (0..data_blocks)
            .map(|j| &transform * DVector::from_iterator(raw.nrows(), problem.targets.iter().map(|t| t[j])))
            .collect();
        let c: Vec<DVector<f64>> = witnesses.iter().map(|z| DVector::from_vec(z.coords())).collect();
        let scale = witnesses.iter().map(|z| crate::operators::eigenvalues(z.matrix()).iter().map(|l| l.abs()).sum::<f64>()).sum::<f64>();
        let data = ipm::SdpData {
            d,
            blocks: m,
            c,
            b_unit: DVector::from_vec(HermitianOperator::identity(d).coords()),
            q,
            data_blocks,
            h,
            slack: ipm::DataSlack::Box(0.0),
        };
        Ok(Self { problem, witnesses: witnesses.to_vec(), scale, gain, data })
    }

    /// Sum of trace norms of the witnesses.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn solve(&self, direction: Direction, settings: &SolverSettings) -> Result<ExtremumSolution> {
        settings.validate()?;
        let sign = match direction {
            Direction::Min => 1.0,
            Direction::Max => -1.0,
        };
        let (elements, converged, iterations) = match settings.algorithm {
            Algorithm::InteriorPoint => {
                let mut data = self.data.clone();
                data.c.iter_mut().for_each(|c| *c *= sign);
                // every raw residual, including the implied last block, stays within half the slack
                let blocks = data.data_blocks.max(1) as f64;
                data.slack = ipm::DataSlack::Box(0.5 * settings.slack / (blocks * self.gain.max(1e-300)));
                let opts = ipm::IpmOptions {
                    max_iterations: settings.ipm_iterations(),
                    gap_tol: 1e-2 * settings.tol_obj,
                    feas_tol: 1e-2 * settings.tol_feas,
                    initial: None,
                };
                let res = ipm::solve(&data, &opts);
                let ok = res.converged
                    || (res.relative_gap <= settings.tol_obj
                        && res.primal_infeasibility <= settings.tol_feas
                        && res.dual_infeasibility <= settings.tol_feas);
                (res.x.into_iter().map(HermitianOperator::from_matrix_unchecked).collect::<Vec<_>>(), ok, res.iterations)
            }
            Algorithm::Splitting => splitting::extremum(self.problem, &self.witnesses, sign, settings),
        };
        let limit = settings.slack + settings.tol_feas;
        let residual = self.problem.constraint_residual(&elements);
        if residual <= limit {
            return Ok(self.solution(elements, residual, converged, iterations));
        }
        // A stalled solve is not evidence of infeasibility: sets with almost
        // no interior (fits on the cone boundary) defeat the engines. A known
        // feasible point, else the least-squares fit of the same
        // constraints, decides.
        if let Some(x) = self.problem.known_point() {
            let r = self.problem.constraint_residual(x);
            if r <= limit {
                return Ok(self.solution(x.to_vec(), r, false, iterations));
            }
        }
        let (fit, _, fit_iterations) = ls_interior_point(self.problem, settings, None);
        let fit_residual = self.problem.constraint_residual(&fit);
        if fit_residual <= limit {
            return Ok(self.solution(fit, fit_residual, false, iterations + fit_iterations));
        }
        Err(Error::Infeasible(residual.min(fit_residual)))
    }

    fn solution(&self, elements: Vec<HermitianOperator>, residual: f64, converged: bool, iterations: usize) -> ExtremumSolution {
        let value = elements.iter().zip(&self.witnesses).map(|(x, z)| x.inner(z)).sum();
        ExtremumSolution { value, elements, residual, converged, iterations }
    }
}

/// Minimum or maximum of `Σ_j ⟨Z_j, Π_j⟩` over the feasible set.
pub fn linear_extremum(
    problem: &FeasibilityProblem,
    witnesses: &[HermitianOperator],
    direction: Direction,
    settings: &SolverSettings,
) -> Result<ExtremumSolution> {
    ExtremumProgram::new(problem, witnesses)?.solve(direction, settings)
}
