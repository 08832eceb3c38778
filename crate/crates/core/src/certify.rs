//! Uniqueness certification. The spread `s = f_max − f_min` of a fixed
//! random positive linear functional over the data-consistent set vanishes
//! exactly when that set is a single measurement.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::operators::{HermitianOperator, C64};
use crate::random::{derive_seed, Gaussian};
use crate::solver::{Direction, ExtremumProgram, FeasibilityProblem, SolverSettings};

const WITNESS_TAG: u64 = 0x5749_544e;

/// Default threshold on the normalized spread.
pub const DEFAULT_THRESHOLD: f64 = 1e-3;

/// Full-rank positive operators `Z_0..Z_{M−1}` defining `f = Σ_j tr(Z_j Π_j)`.
#[derive(Clone, Debug)]
pub struct WitnessSet {
    pub seed: u64,
    pub witnesses: Vec<HermitianOperator>,
}

/// `Z_j = G_j G_j†/d + 0.1·𝟙` with Ginibre `G_j`.
pub fn make_witnesses(d: usize, m: usize, seed: u64) -> Result<WitnessSet> {
    if d == 0 || m == 0 {
        return invalid("dimension and outcome count must be positive");
    }
    let mut g = Gaussian::new(seed);
    let witnesses: Vec<HermitianOperator> = (0..m)
        .map(|_| {
            let gm = g.ginibre(d, d);
            let z = &gm * gm.adjoint() * C64::new(1.0 / d as f64, 0.0);
            let op = HermitianOperator::from_matrix_unchecked(z);
            &op + &HermitianOperator::identity(d).scale(0.1)
        })
        .collect();
    debug_assert!(witnesses.iter().all(|z| z.min_eigenvalue() > 1e-6));
    Ok(WitnessSet { seed, witnesses })
}

/// `K` independent witness sets derived from one seed; the first uses `seed` itself.
pub fn make_witness_sets(d: usize, m: usize, seed: u64, count: usize) -> Result<Vec<WitnessSet>> {
    (0..count.max(1))
        .map(|k| make_witnesses(d, m, if k == 0 { seed } else { derive_seed(seed, WITNESS_TAG, k as u64) }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationResult {
    pub f_min: f64,
    pub f_max: f64,
    pub s_cvx_raw: f64,
    /// Raw spread divided by the first-probe spread of the same run.
    pub s_cvx_normalized: Option<f64>,
    pub converged: bool,
}

impl CertificationResult {
    /// Sets the normalized value against `anchor`, the raw spread at one probe.
    /// A vanishing anchor means the set was already a point.
    pub fn normalize(&mut self, anchor: f64) {
        self.s_cvx_normalized = Some(if anchor > 1e-12 { self.s_cvx_raw / anchor } else { 0.0 });
    }
}

/// Minimizes and maximizes the witness functional concurrently.
pub fn s_cvx(problem: &FeasibilityProblem, witnesses: &WitnessSet, settings: &SolverSettings) -> Result<CertificationResult> {
    let program = ExtremumProgram::new(problem, &witnesses.witnesses)?;
    let (lo, hi) = rayon::join(|| program.solve(Direction::Min, settings), || program.solve(Direction::Max, settings));
    let (lo, hi) = (lo?, hi?);
    Ok(CertificationResult {
        f_min: lo.value,
        f_max: hi.value,
        s_cvx_raw: hi.value - lo.value,
        s_cvx_normalized: None,
        converged: lo.converged && hi.converged,
    })
}

/// Largest spread over several witness sets, with the extrema it came from.
pub fn s_cvx_max(problem: &FeasibilityProblem, sets: &[WitnessSet], settings: &SolverSettings) -> Result<CertificationResult> {
    let mut best: Option<CertificationResult> = None;
    let mut converged = true;
    for set in sets {
        let r = s_cvx(problem, set, settings)?;
        converged &= r.converged;
        if best.is_none_or(|b| r.s_cvx_raw > b.s_cvx_raw) {
            best = Some(r);
        }
    }
    match best {
        Some(mut b) => {
            b.converged = converged;
            Ok(b)
        }
        None => invalid("no witness sets"),
    }
}

/// Probe count (1-based) of the first converged entry below `threshold`.
pub fn detect_l_ic(trajectory: &[(f64, bool)], threshold: f64) -> Option<usize> {
    trajectory.iter().position(|&(s, ok)| ok && s < threshold).map(|i| i + 1)
}
