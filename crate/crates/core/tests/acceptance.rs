//! End-to-end acceptance checks. Every test writes one `PASS`/`FAIL` line
//! to the real stdout (bypassing the harness capture) before asserting.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use cqdt::analysis::{phase_retrieval_ic, povm_fidelity};
use cqdt::operators::{HermitianOperator, Povm, PureState, C64};
use cqdt::povm_gen::{generate, EnsembleKind, PovmEnsembleSpec};
use cqdt::probes::{random_sequence, table1_probes, ProbeKind};
use cqdt::protocol::{cell_stats, run_cqdt, sweep, CellStats, Comparisons, CqdtConfig, DataSource, MRule, SweepConfig};
use cqdt::random::Gaussian;
use cqdt::simulator::born_probabilities;
use cqdt::solver::{constrained_ls, constrained_ls_from, SolverSettings};

fn report(id: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stdout().lock(), "criterion {id:>2}: {verdict}  {detail}");
}

fn cells(dims: &[usize], ranks: &[usize], m_rule: MRule, trials: usize, seed: u64, probe_kind: ProbeKind) -> Vec<CellStats> {
    let mut cfg = SweepConfig::new(dims.to_vec(), ranks.to_vec(), m_rule, trials, seed);
    cfg.probe_kind = probe_kind;
    let (rows, stats) = sweep(&cfg).expect("sweep runs");
    assert_eq!(stats, cell_stats(&rows));
    stats
}

fn describe(c: &CellStats) -> String {
    format!("d={} r={} M={}: mean {:.2} sd {:.2} ({}/{})", c.d, c.r, c.m, c.mean.unwrap_or(f64::NAN), c.std.unwrap_or(f64::NAN), c.successes, c.trials)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn rank_one_scaling() {
    let stats = cells(&[2, 3, 4, 5, 6], &[1], MRule::Linear(3), 10, 101, ProbeKind::HaarPure);
    let mut pass = true;
    let mut parts = Vec::new();
    for c in &stats {
        let target = (4 * c.d - 4) as f64;
        let ok = c.successes == c.trials && c.mean.is_some_and(|m| (m - target).abs() <= 1.0);
        pass &= ok;
        parts.push(format!("[{} target {target}]", describe(c)));
    }
    report(1, pass, &format!("mean L_IC within 1 of 4d-4: {}", parts.join(" ")));
    assert!(pass);
}

#[test]
fn quadratic_regime() {
    let stats = cells(&[4], &[2], MRule::Fixed(8), 10, 202, ProbeKind::HaarPure);
    let c = &stats[0];
    let pass = c.successes == c.trials && c.mean.is_some_and(|m| (m - 16.0).abs() <= 1.0);
    report(2, pass, &format!("target 16 +- 1: {}", describe(c)));
    assert!(pass);
}

#[test]
fn beats_phase_retrieval() {
    let mut pass = true;
    let mut parts = Vec::new();
    for (d, r) in [(6, 2), (8, 2), (8, 3)] {
        let c = cells(&[d], &[r], MRule::Linear(3), 10, 303, ProbeKind::HaarPure).remove(0);
        let bound = phase_retrieval_ic(d, r).unwrap() as f64;
        let ok = c.successes == c.trials && c.mean.is_some_and(|m| m <= bound - 1.0);
        pass &= ok;
        parts.push(format!("[{} bound {bound}]", describe(&c)));
    }
    report(3, pass, &format!("mean L_IC at most bound - 1: {}", parts.join(" ")));
    assert!(pass);
}

/// Single rank-1 run with `d = 4`, `M = 8`, expected to certify at 12 ± 1.
#[test]
fn rank_one_four_dim_eight_outcomes() {
    let truth = generate(&PovmEnsembleSpec::square_root(4, 8, 1, 31)).unwrap();
    let probes = random_sequence(4, &ProbeKind::HaarPure, 32, 32).unwrap();
    let source = DataSource::Simulated { truth, shots: 0, seed: 0 };
    let l_ic = run_cqdt(&source, &probes, &CqdtConfig::new(32, 33), &Comparisons::default()).unwrap().l_ic;
    let pass = l_ic.is_some_and(|l| l.abs_diff(12) <= 1);
    let _ = writeln!(std::io::stdout().lock(), "single-run check d=4 M=8: {}  L_IC {l_ic:?}, expected 12 +- 1", if pass { "PASS" } else { "FAIL" });
    assert!(pass);
}

/// Exact-data runs on the two-qubit experiment bases (rank 1) or their pair
/// mixtures (rank 2). Trial 0 keeps the table order, later trials shuffle
/// it; both then continue with random product probes.
fn experiment_lic(rank: usize, trials: u64) -> Vec<Option<usize>> {
    let l_max = 32;
    let mut out = Vec::new();
    for index in 1..=4 {
        let kind = if rank == 1 { EnsembleKind::ProjectiveBasis { index } } else { EnsembleKind::PairMixed { index } };
        let truth = generate(&PovmEnsembleSpec { dim: 4, outcomes: 4, rank, kind, seed: 0 }).unwrap();
        for t in 0..trials {
            let mut base = table1_probes();
            if t > 0 {
                let mut order: Vec<usize> = (0..base.len()).collect();
                Gaussian::new(400 + t).shuffle(&mut order);
                base.states = order.iter().map(|&i| base.states[i].clone()).collect();
                base.labels = order.iter().map(|&i| base.labels[i].clone()).collect();
            }
            let probes = base.extended_with_random(&ProbeKind::product(), l_max, 500 + 10 * index as u64 + t).unwrap();
            let cfg = CqdtConfig::new(l_max, 600 + 10 * index as u64 + t);
            let source = DataSource::Simulated { truth: truth.clone(), shots: 0, seed: 0 };
            out.push(run_cqdt(&source, &probes, &cfg, &Comparisons::default()).unwrap().l_ic);
        }
    }
    out
}

#[test]
fn experimental_scale_anchors() {
    let mut pass = true;
    let mut parts = Vec::new();
    for (rank, target) in [(1, 12.0), (2, 15.0)] {
        let lics = experiment_lic(rank, 3);
        let certified: Vec<f64> = lics.iter().flatten().map(|&l| l as f64).collect();
        let m = mean(&certified);
        let ok = certified.len() == lics.len() && (m - target).abs() <= 1.0;
        pass &= ok;
        parts.push(format!("[r={rank}: mean {m:.2} target {target} ({}/{})]", certified.len(), lics.len()));
    }
    report(4, pass, &format!("two-qubit bases with table probes: {}", parts.join(" ")));
    assert!(pass);
}

#[cfg(feature = "extended")]
#[test]
fn four_qubit_anchors() {
    use cqdt::probes::four_qubit_product_probes;
    let mut pass = true;
    let mut parts = Vec::new();
    for (rank, target, tol) in [(1usize, 60.0, 2.0), (2, 99.0, 5.0)] {
        let mut lics = Vec::new();
        for t in 0..3u64 {
            let index = 1 + t as usize;
            let kind = if rank == 1 { EnsembleKind::ProjectiveBasis { index } } else { EnsembleKind::PairMixed { index } };
            let truth = generate(&PovmEnsembleSpec { dim: 16, outcomes: 16, rank, kind, seed: 0 }).unwrap();
            let probes = four_qubit_product_probes(700 + t);
            let cfg = CqdtConfig::new(probes.len(), 800 + t);
            let source = DataSource::Simulated { truth, shots: 0, seed: 0 };
            lics.push(run_cqdt(&source, &probes, &cfg, &Comparisons::default()).unwrap().l_ic);
        }
        let certified: Vec<f64> = lics.iter().flatten().map(|&l| l as f64).collect();
        let m = mean(&certified);
        let ok = certified.len() == lics.len() && (m - target).abs() <= tol;
        pass &= ok;
        parts.push(format!("[r={rank}: mean {m:.2} target {target} +- {tol} ({}/{})]", certified.len(), lics.len()));
    }
    report(5, pass, &format!("four-qubit product bases: {}", parts.join(" ")));
    assert!(pass);
}

#[cfg(not(feature = "extended"))]
#[test]
fn four_qubit_anchors() {
    let _ = writeln!(std::io::stdout().lock(), "criterion  5: SKIP  four-qubit anchors need the `extended` feature");
}

#[test]
fn product_probes_match_haar() {
    let haar = cells(&[4], &[1], MRule::Linear(3), 10, 606, ProbeKind::HaarPure).remove(0);
    let prod = cells(&[4], &[1], MRule::Linear(3), 10, 606, ProbeKind::product()).remove(0);
    let diff = (haar.mean.unwrap_or(f64::NAN) - prod.mean.unwrap_or(f64::NAN)).abs();
    let pass = haar.successes == haar.trials && prod.successes == prod.trials && diff <= 1.0;
    report(6, pass, &format!("|difference| {diff:.2} <= 1: haar {} | product {}", describe(&haar), describe(&prod)));
    assert!(pass);
}

#[test]
fn uniqueness_soundness() {
    let settings = SolverSettings::default();
    let tol_obj = settings.tol_obj;
    let mut worst_fid = 1.0f64;
    let mut min_spread = f64::INFINITY;
    let mut certified = 0;
    let mut uncertified = 0;
    for inst in 0..20u64 {
        let d = if inst < 10 { 2 } else { 3 };
        let m = 3 * d;
        let truth = generate(&PovmEnsembleSpec::square_root(d, m, 1, 7000 + inst)).unwrap();
        let probes = random_sequence(d, &ProbeKind::HaarPure, 2 * d * d, 7100 + inst).unwrap();
        let cfg = CqdtConfig::new(probes.len(), 7200 + inst);
        let source = DataSource::Simulated { truth: truth.clone(), shots: 0, seed: 0 };
        let rep = run_cqdt(&source, &probes, &cfg, &Comparisons::default()).unwrap();
        let Some(l_ic) = rep.l_ic else { continue };
        certified += 1;

        let states = &probes.states[..l_ic];
        let freqs: Vec<Vec<f64>> = states.iter().map(|rho| born_probabilities(rho, &truth).unwrap()).collect();
        let restart = |seed: u64| {
            let init = generate(&PovmEnsembleSpec::haar(d, m, d, seed)).unwrap();
            constrained_ls_from(d, m, states, &freqs, &settings, Some(init.elements())).unwrap().povm
        };
        let fid = povm_fidelity(&restart(7300 + inst), &restart(7400 + inst)).unwrap();
        worst_fid = worst_fid.min(fid);

        if l_ic > 2 {
            uncertified += 1;
            min_spread = min_spread.min(rep.record(l_ic - 2).unwrap().s_cvx_raw);
        }
    }
    let pass = certified == 20 && uncertified > 0 && worst_fid >= 1.0 - 1e-5 && min_spread > 10.0 * tol_obj;
    report(
        7,
        pass,
        &format!(
            "{certified}/20 certified, worst restart fidelity {worst_fid:.9}; {uncertified} instances at L_IC-2 with min raw spread {min_spread:.3e} (> {:.1e})",
            10.0 * tol_obj
        ),
    );
    assert!(pass);
}

/// `(tr √(√A B √A))²` evaluated with real symmetric eigensolves.
fn uhlmann_real(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let sqrt = |m: &DMatrix<f64>| {
        let e = SymmetricEigen::new(m.clone());
        let s = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
        &e.eigenvectors * s * e.eigenvectors.transpose()
    };
    let ra = sqrt(a);
    let inner = &ra * b * &ra;
    let t: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    t * t
}

/// Choi matrix `(1/2) Σ_j vec(P_j) vec(P_j)ᵀ` of a real projective qubit basis.
fn choi_real(kets: &[[f64; 2]]) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(4, 4);
    for k in kets {
        let v = DVector::from_fn(4, |i, _| k[i / 2] * k[i % 2]);
        e += &v * v.transpose();
    }
    e * 0.5
}

#[test]
fn fidelity_oracle() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let ket = |a: f64, b: f64| PureState::new(nalgebra::dvector![C64::new(a, 0.0), C64::new(b, 0.0)]).unwrap();
    let povm = |k: [(f64, f64); 2]| Povm::new(k.iter().map(|&(a, b)| HermitianOperator::projector(&ket(a, b))).collect()).unwrap();
    let z = povm([(1.0, 0.0), (0.0, 1.0)]);
    let x = povm([(s, s), (s, -s)]);
    let oracle = uhlmann_real(&choi_real(&[[1.0, 0.0], [0.0, 1.0]]), &choi_real(&[[s, s], [s, -s]]));

    let p = generate(&PovmEnsembleSpec::square_root(3, 5, 2, 88)).unwrap();
    let self_fid = povm_fidelity(&p, &p).unwrap();
    let perm = povm_fidelity(&p, &p.permuted(&[3, 0, 4, 1, 2]).unwrap()).unwrap();
    let zx = povm_fidelity(&z, &x).unwrap();

    let pass = (self_fid - 1.0).abs() <= 1e-9 && (perm - 1.0).abs() <= 1e-9 && (zx - 0.25).abs() <= 1e-6 && (oracle - 0.25).abs() <= 1e-12;
    report(8, pass, &format!("F(P,P)={self_fid:.12} F(P,perm P)={perm:.12} F(Z,X)={zx:.9} oracle={oracle:.9}"));
    assert!(pass);
}

/// Brute-force minimum of the two-outcome qubit LS objective over
/// `Π_0 = a𝟙 + b·σ`, `|b| ≤ min(a, 1 − a)`, on a grid of step `h`.
fn bloch_grid_minimum(r: [f64; 3], nu0: f64, h: f64) -> f64 {
    let n = (1.0 / h).round() as i64;
    let mut best = f64::INFINITY;
    for ia in 0..=n {
        let a = ia as f64 * h;
        let rad = a.min(1.0 - a);
        let k = (rad / h).floor() as i64;
        for ix in -k..=k {
            let bx = ix as f64 * h;
            for iy in -k..=k {
                let by = iy as f64 * h;
                let rest = rad * rad - bx * bx - by * by;
                if rest < -1e-12 {
                    continue;
                }
                let kz = ((rest.max(0.0)).sqrt() / h + 1e-9).floor() as i64;
                for iz in -kz..=kz {
                    let p0 = a + bx * r[0] + by * r[1] + iz as f64 * h * r[2];
                    // outcome 1 carries the complementary probability
                    best = best.min(2.0 * (p0 - nu0).powi(2));
                }
            }
        }
    }
    best
}

#[test]
fn single_probe_ls_against_grid() {
    let h = 0.02;
    // objective gradient in (a, b) is bounded by 4√2; the nearest feasible grid point is within 2h
    let bound = 4.0 * 2f64.sqrt() * 2.0 * h;
    let mut g = Gaussian::new(909);
    let mut worst = 0.0f64;
    let mut below = true;
    for inst in 0..10u64 {
        let probes = random_sequence(2, &ProbeKind::HaarPure, 1, 910 + inst).unwrap();
        let rho = &probes.states[0];
        let m = rho.matrix();
        // Bloch vector r_i = tr(ρ σ_i)
        let rx = 2.0 * m[(0, 1)].re;
        let ry = -2.0 * m[(0, 1)].im;
        let rz = m[(0, 0)].re - m[(1, 1)].re;
        let nu0 = g.uniform();
        let ls = constrained_ls(2, 2, &probes.states, &[vec![nu0, 1.0 - nu0]], &SolverSettings::default()).unwrap();
        let grid = bloch_grid_minimum([rx, ry, rz], nu0, h);
        below &= ls.objective <= grid + 1e-9;
        worst = worst.max(grid - ls.objective);
    }
    let pass = below && worst <= bound;
    report(9, pass, &format!("LS never above grid, worst grid excess {worst:.3e} <= {bound:.3e}"));
    assert!(pass);
}

#[test]
fn noisy_certification() {
    let (d, m, l_max) = (4, 12, 20);
    let mut certified = 0;
    let mut monotone = true;
    let mut parts = Vec::new();
    for t in 0..10u64 {
        let truth = generate(&PovmEnsembleSpec::square_root(d, m, 1, 1000 + t)).unwrap();
        let probes = random_sequence(d, &ProbeKind::HaarPure, l_max, 1100 + t).unwrap();
        let mut cfg = CqdtConfig::new(l_max, 1200 + t);
        cfg.stop_on_certification = false;
        let source = DataSource::Simulated { truth: truth.clone(), shots: 10_000, seed: 1300 + t };
        let rep = run_cqdt(&source, &probes, &cfg, &Comparisons { target: Some(truth), ..Default::default() }).unwrap();
        let f_end = rep.record(l_max).and_then(|r| r.fidelity_target).unwrap();
        match rep.l_ic {
            Some(l) => {
                certified += 1;
                let f_ic = rep.record(l).and_then(|r| r.fidelity_target).unwrap();
                monotone &= f_end >= f_ic;
                parts.push(format!("L_IC={l} F={f_ic:.5}->{f_end:.5}"));
            }
            None => parts.push(format!("uncertified F(20)={f_end:.5}")),
        }
    }
    let pass = certified >= 8 && monotone;
    report(10, pass, &format!("{certified}/10 certified by L=20, F(20) >= F(L_IC): {monotone} [{}]", parts.join(", ")));
    assert!(pass);
}
