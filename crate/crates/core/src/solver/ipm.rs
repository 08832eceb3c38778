//! Primal–dual interior-point method for block-Hermitian SDPs of the form
//!
//! ```text
//! minimize    Σ_j ⟨C_j, X_j⟩ (+ ½‖r‖²)
//! subject to  Σ_j X_j = 𝟙
//!             ⟨Q_k, X_j⟩ − r_kj = h_kj     for j < data_blocks
//!             X_j ⪰ 0
//! ```
//!
//! where the residuals `r` are either penalized (least squares) or boxed in
//! `[−κ, κ]`. Box slacks are split as `r = κ(a − 1)`, `a + b = 2`,
//! `a, b ≥ 0`, and eliminated into the Schur blocks as a diagonal term.
//!
//! Infeasible-start HKM direction with a Mehrotra predictor–corrector. The
//! Schur complement is an arrow matrix (a dense unit-sum border plus one
//! independent block per data-carrying element), eliminated block by block.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::operators::{eigenvalues, CMatrix, C64};

#[derive(Clone)]
pub(crate) struct SdpData {
    pub d: usize,
    pub blocks: usize,
    pub c: Vec<DVector<f64>>,
    pub b_unit: DVector<f64>,
    /// `K × d²` rows, shared by every data-carrying block.
    pub q: DMatrix<f64>,
    pub data_blocks: usize,
    pub h: Vec<DVector<f64>>,
    pub slack: DataSlack,
}

/// How the data rows `⟨Q_k, X_j⟩ = h_kj` are relaxed.
#[derive(Clone, Copy, Debug)]
pub(crate) enum DataSlack {
    /// Free residuals `r` penalized by `½‖r‖²` in the objective.
    LeastSquares,
    /// Residuals confined to `[−κ, κ]`.
    Box(f64),
}

pub(crate) struct IpmOptions {
    pub max_iterations: usize,
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub initial: Option<Vec<CMatrix>>,
}

pub(crate) struct IpmResult {
    pub x: Vec<CMatrix>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

type BasisTerms = Vec<Vec<(usize, usize, C64)>>;

/// Sparse entries of each element of the orthonormal Hermitian basis used by
/// [`crate::operators::HermitianOperator::coords`].
fn basis_terms(d: usize) -> BasisTerms {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out: BasisTerms = (0..d).map(|a| vec![(a, a, C64::new(1.0, 0.0))]).collect();
    for a in 0..d {
        for b in (a + 1)..d {
            out.push(vec![(a, b, C64::new(s, 0.0)), (b, a, C64::new(s, 0.0))]);
            out.push(vec![(a, b, C64::new(0.0, s)), (b, a, C64::new(0.0, -s))]);
        }
    }
    out
}

/// Coordinates of the Hermitian part of `m`.
pub(crate) fn herm_coords(m: &CMatrix) -> DVector<f64> {
    let d = m.nrows();
    let mut out = DVector::zeros(d * d);
    for a in 0..d {
        out[a] = m[(a, a)].re;
    }
    let mut k = d;
    let r2 = std::f64::consts::SQRT_2;
    for a in 0..d {
        for b in (a + 1)..d {
            let h = (m[(a, b)] + m[(b, a)].conj()) * 0.5;
            out[k] = r2 * h.re;
            out[k + 1] = r2 * h.im;
            k += 2;
        }
    }
    out
}

pub(crate) fn coords_matrix(x: &DVector<f64>, d: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    for a in 0..d {
        m[(a, a)] = C64::new(x[a], 0.0);
    }
    let mut k = d;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for a in 0..d {
        for b in (a + 1)..d {
            let z = C64::new(s * x[k], s * x[k + 1]);
            m[(a, b)] = z;
            m[(b, a)] = z.conj();
            k += 2;
        }
    }
    m
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Matrix of the map `Y ↦ herm(X Y S⁻¹)` in basis coordinates.
fn scaling_matrix(x: &CMatrix, sinv: &CMatrix, terms: &BasisTerms) -> DMatrix<f64> {
    let n = terms.len();
    let mut g = DMatrix::zeros(n, n);
    for (e, te) in terms.iter().enumerate() {
        for (f, tf) in terms.iter().enumerate().skip(e) {
            // Re tr(E_f X E_e S⁻¹) with E_f = Σ α|p⟩⟨q|, E_e = Σ β|u⟩⟨v|
            let mut acc = C64::new(0.0, 0.0);
            for &(p, q, alpha) in tf {
                for &(u, v, beta) in te {
                    acc += alpha * beta * x[(q, u)] * sinv[(v, p)];
                }
            }
            g[(f, e)] = acc.re;
        }
    }
    // the map is self-adjoint; mirror the lower triangle
    for e in 0..n {
        for f in 0..e {
            g[(f, e)] = g[(e, f)];
        }
    }
    g
}

enum Factor {
    Chol(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl Factor {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        if let Some(c) = Cholesky::new(m.clone()) {
            return Some(Factor::Chol(c));
        }
        let n = m.nrows();
        let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        for k in [1e-14, 1e-12, 1e-10] {
            let mut shifted = m.clone();
            for i in 0..n {
                shifted[(i, i)] += k * scale;
            }
            if let Some(c) = Cholesky::new(shifted) {
                return Some(Factor::Chol(c));
            }
        }
        let lu = LU::new(m);
        lu.is_invertible().then_some(Factor::Lu(lu))
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Chol(c) => c.solve(b),
            Factor::Lu(l) => l.solve(b).unwrap_or_else(|| DVector::zeros(b.len())),
        }
    }

    fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Factor::Chol(c) => c.solve(b),
            Factor::Lu(l) => l.solve(b).unwrap_or_else(|| DMatrix::zeros(b.nrows(), b.ncols())),
        }
    }
}

/// Largest `α` with `X + α ΔX ⪰ 0` (infinite when `ΔX ⪰ 0`).
fn max_step(x: &CMatrix, dx: &CMatrix) -> f64 {
    let Some(chol) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = chol.l();
    let Some(t) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(m) = l.solve_lower_triangular(&t.adjoint()) else {
        return 0.0;
    };
    let lam = eigenvalues(&hermitian_part(&m))[0];
    if lam >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lam
    }
}

fn inverse_pd(s: &CMatrix) -> Option<CMatrix> {
    let chol = Cholesky::new(s.clone())?;
    Some(hermitian_part(&chol.inverse()))
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    // Re tr(A B) = Re Σ a_ij conj(b_ij) for Hermitian B
    a.iter().zip(b.iter()).map(|(x, y)| (x * y.conj()).re).sum()
}

struct Vars {
    x: Vec<CMatrix>,
    s: Vec<CMatrix>,
    yu: DVector<f64>,
    yd: Vec<DVector<f64>>,
    /// least-squares residuals
    r: Vec<DVector<f64>>,
    /// box slacks: lower `a`, upper `b`, their duals and the box-row duals
    a: Vec<DVector<f64>>,
    b: Vec<DVector<f64>>,
    za: Vec<DVector<f64>>,
    zb: Vec<DVector<f64>>,
    yb: Vec<DVector<f64>>,
}

struct Step {
    dx: Vec<CMatrix>,
    ds: Vec<CMatrix>,
    dyu: DVector<f64>,
    dyd: Vec<DVector<f64>>,
    dr: Vec<DVector<f64>>,
    da: Vec<DVector<f64>>,
    db: Vec<DVector<f64>>,
    dza: Vec<DVector<f64>>,
    dzb: Vec<DVector<f64>>,
    dyb: Vec<DVector<f64>>,
}

struct Residuals {
    rp_u: DVector<f64>,
    rp_d: Vec<DVector<f64>>,
    rp_b: Vec<DVector<f64>>,
    rd: Vec<DVector<f64>>,
    rd_mat: Vec<CMatrix>,
    rr: Vec<DVector<f64>>,
    rda: Vec<DVector<f64>>,
    rdb: Vec<DVector<f64>>,
}

struct Schur {
    sinv: Vec<CMatrix>,
    /// `D_j⁻¹ C_j`
    f: Vec<DMatrix<f64>>,
    d_fac: Vec<Factor>,
    /// `C_j = Q G_j`
    c: Vec<DMatrix<f64>>,
    /// box scalings `a/z_a`, `b/z_b`
    ga: Vec<DVector<f64>>,
    gb: Vec<DVector<f64>>,
    border: Factor,
}

fn sq(v: &[DVector<f64>]) -> f64 {
    v.iter().map(|x| x.norm_squared()).sum()
}

fn lp_step(v: &[DVector<f64>], dv: &[DVector<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for (x, dx) in v.iter().zip(dv) {
        for (a, da) in x.iter().zip(dx.iter()) {
            if *da < 0.0 {
                best = best.min(-a / da);
            }
        }
    }
    best
}

fn lp_dot(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn lp_dot_step(a: &[DVector<f64>], da: &[DVector<f64>], ta: f64, b: &[DVector<f64>], db: &[DVector<f64>], tb: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.len() {
        acc += (&a[j] + &da[j] * ta).dot(&(&b[j] + &db[j] * tb));
    }
    acc
}

pub(crate) fn solve(data: &SdpData, opts: &IpmOptions) -> IpmResult {
    let d = data.d;
    let nb = data.blocks;
    let kd = data.data_blocks;
    let q = &data.q;
    let k = q.nrows();
    let terms = basis_terms(d);
    let ident = CMatrix::identity(d, d);
    let boxed = matches!(data.slack, DataSlack::Box(_));
    let ls = matches!(data.slack, DataSlack::LeastSquares);

    let x: Vec<CMatrix> = match &opts.initial {
        Some(init) => init.clone(),
        None => vec![&ident * C64::new(1.0 / nb as f64, 0.0); nb],
    };
    let s0 = data.c.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let nbox = if boxed { kd } else { 0 };
    let fill = |v: f64| vec![DVector::<f64>::from_element(k, v); nbox];
    let mut v = Vars {
        r: if ls { (0..kd).map(|j| q * herm_coords(&x[j]) - &data.h[j]).collect() } else { Vec::new() },
        x,
        s: vec![&ident * C64::new(s0, 0.0); nb],
        yu: DVector::zeros(d * d),
        yd: vec![DVector::zeros(k); kd],
        a: fill(1.0),
        b: fill(1.0),
        za: fill(s0 / nb as f64),
        zb: fill(s0 / nb as f64),
        yb: fill(0.0),
    };

    let nu = (nb * d + 2 * nbox * k) as f64;
    let bnorm = 1.0 + data.b_unit.norm() + sq(&data.h).sqrt();
    let cnorm = 1.0 + sq(&data.c).sqrt();

    let mut out = IpmResult {
        x: v.x.clone(),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        primal_infeasibility: f64::INFINITY,
        dual_infeasibility: f64::INFINITY,
        relative_gap: f64::INFINITY,
        iterations: 0,
        converged: false,
    };
    let mut stalled = 0;
    let mut best_merit = f64::INFINITY;
    let mut since_best = 0;

    for it in 0..=opts.max_iterations {
        let xc: Vec<DVector<f64>> = v.x.iter().map(herm_coords).collect();
        let res = residuals(data, &xc, &v);
        let mu = ((0..nb).map(|j| trace_product(&v.x[j], &v.s[j])).sum::<f64>() + lp_dot(&v.a, &v.za) + lp_dot(&v.b, &v.zb)) / nu;

        let pobj = (0..nb).map(|j| data.c[j].dot(&xc[j])).sum::<f64>() + if ls { 0.5 * sq(&v.r) } else { 0.0 };
        let mut dobj = data.b_unit.dot(&v.yu) + (0..kd).map(|j| data.h[j].dot(&v.yd[j])).sum::<f64>();
        if ls {
            dobj -= 0.5 * sq(&v.yd);
        }
        if let DataSlack::Box(kappa) = data.slack {
            dobj += (0..kd).map(|j| 2.0 * v.yb[j].sum() - kappa * v.yd[j].sum()).sum::<f64>();
        }
        let pinf = (res.rp_u.norm_squared() + sq(&res.rp_d) + sq(&res.rp_b)).sqrt() / bnorm;
        let dinf = (sq(&res.rd) + sq(&res.rr) + sq(&res.rda) + sq(&res.rdb)).sqrt() / cnorm;
        let denom = 1.0 + pobj.abs() + dobj.abs();
        let gap = ((pobj - dobj).abs().max(mu * nu)) / denom;

        // keep the best iterate: late iterations can lose accuracy once the
        // Newton systems become ill-conditioned
        let merit = (gap / opts.gap_tol).max(pinf / opts.feas_tol).max(dinf / opts.feas_tol);
        if merit < best_merit {
            best_merit = merit;
            since_best = 0;
            out.x.clone_from(&v.x);
            out.primal_objective = pobj;
            out.dual_objective = dobj;
            out.primal_infeasibility = pinf;
            out.dual_infeasibility = dinf;
            out.relative_gap = gap;
        } else {
            since_best += 1;
        }
        out.iterations = it;
        if merit <= 1.0 {
            out.converged = true;
            return out;
        }
        if it == opts.max_iterations || stalled >= 3 || since_best >= 8 {
            return out;
        }

        let Some(schur) = factorize(data, &v, &terms) else {
            return out;
        };

        // predictor
        let aff = direction(data, &schur, &res, &v, 0.0, None);
        let (ap, ad) = step_lengths(&v, &aff, 1.0, ls);
        let mu_aff = ((0..nb)
            .map(|j| {
                let xa = &v.x[j] + &aff.dx[j] * C64::new(ap, 0.0);
                let sa = &v.s[j] + &aff.ds[j] * C64::new(ad, 0.0);
                trace_product(&xa, &sa)
            })
            .sum::<f64>()
            + lp_dot_step(&v.a, &aff.da, ap, &v.za, &aff.dza, ad)
            + lp_dot_step(&v.b, &aff.db, ap, &v.zb, &aff.dzb, ad))
            / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let dir = direction(data, &schur, &res, &v, sigma * mu, Some(&aff));
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let (ap, ad) = step_lengths(&v, &dir, gamma, ls);
        if ap < 1e-10 && ad < 1e-10 {
            stalled += 1;
        } else {
            stalled = 0;
        }

        for j in 0..nb {
            v.x[j] = hermitian_part(&(&v.x[j] + &dir.dx[j] * C64::new(ap, 0.0)));
            v.s[j] = hermitian_part(&(&v.s[j] + &dir.ds[j] * C64::new(ad, 0.0)));
        }
        v.yu += &dir.dyu * ad;
        for j in 0..kd {
            v.yd[j] += &dir.dyd[j] * ad;
            if ls {
                v.r[j] += &dir.dr[j] * ap;
            }
            if boxed {
                v.a[j] += &dir.da[j] * ap;
                v.b[j] += &dir.db[j] * ap;
                v.za[j] += &dir.dza[j] * ad;
                v.zb[j] += &dir.dzb[j] * ad;
                v.yb[j] += &dir.dyb[j] * ad;
            }
        }
    }
    out
}

fn step_lengths(v: &Vars, dir: &Step, gamma: f64, common: bool) -> (f64, f64) {
    let p = max_step_all(&v.x, &dir.dx).min(lp_step(&v.a, &dir.da)).min(lp_step(&v.b, &dir.db));
    let d = max_step_all(&v.s, &dir.ds).min(lp_step(&v.za, &dir.dza)).min(lp_step(&v.zb, &dir.dzb));
    let (p, d) = ((gamma * p).min(1.0), (gamma * d).min(1.0));
    if common {
        (p.min(d), p.min(d))
    } else {
        (p, d)
    }
}

fn max_step_all(x: &[CMatrix], dx: &[CMatrix]) -> f64 {
    x.iter().zip(dx).map(|(a, b)| max_step(a, b)).fold(f64::INFINITY, f64::min)
}

fn residuals(data: &SdpData, xc: &[DVector<f64>], v: &Vars) -> Residuals {
    let nb = data.blocks;
    let kd = data.data_blocks;
    let mut rp_u = data.b_unit.clone();
    for c in xc {
        rp_u -= c;
    }
    let mut rp_d: Vec<DVector<f64>> = (0..kd).map(|j| &data.h[j] - &data.q * &xc[j]).collect();
    let mut rp_b = Vec::new();
    let mut rr = Vec::new();
    let mut rda = Vec::new();
    let mut rdb = Vec::new();
    match data.slack {
        DataSlack::LeastSquares => {
            for j in 0..kd {
                rp_d[j] += &v.r[j];
                rr.push(-&v.yd[j] - &v.r[j]);
            }
        }
        DataSlack::Box(kappa) => {
            for j in 0..kd {
                rp_d[j] += v.a[j].map(|a| kappa * (a - 1.0));
                rp_b.push(v.a[j].map(|a| 2.0 - a) - &v.b[j]);
                rda.push(&v.yd[j] * kappa - &v.yb[j] - &v.za[j]);
                rdb.push(-&v.yb[j] - &v.zb[j]);
            }
        }
    }
    let rd: Vec<DVector<f64>> = (0..nb)
        .map(|j| {
            let mut r = &data.c[j] - herm_coords(&v.s[j]) - &v.yu;
            if j < kd {
                r -= data.q.tr_mul(&v.yd[j]);
            }
            r
        })
        .collect();
    let rd_mat = rd.iter().map(|r| coords_matrix(r, data.d)).collect();
    Residuals { rp_u, rp_d, rp_b, rd, rd_mat, rr, rda, rdb }
}

fn factorize(data: &SdpData, v: &Vars, terms: &BasisTerms) -> Option<Schur> {
    let n = data.d * data.d;
    let q = &data.q;
    let k = q.nrows();
    let mut sinv = Vec::with_capacity(data.blocks);
    let mut border = DMatrix::<f64>::zeros(n, n);
    let mut f = Vec::with_capacity(data.data_blocks);
    let mut d_fac = Vec::with_capacity(data.data_blocks);
    let mut c = Vec::with_capacity(data.data_blocks);
    let mut ga = Vec::new();
    let mut gb = Vec::new();
    for j in 0..data.blocks {
        let si = inverse_pd(&v.s[j])?;
        let g = scaling_matrix(&v.x[j], &si, terms);
        border += &g;
        if j < data.data_blocks {
            let cj = q * &g;
            let mut dj = &cj * q.transpose();
            match data.slack {
                DataSlack::LeastSquares => {
                    for i in 0..k {
                        dj[(i, i)] += 1.0;
                    }
                }
                DataSlack::Box(kappa) => {
                    let a = v.a[j].component_div(&v.za[j]);
                    let b = v.b[j].component_div(&v.zb[j]);
                    for i in 0..k {
                        dj[(i, i)] += kappa * kappa * a[i] * b[i] / (a[i] + b[i]);
                    }
                    ga.push(a);
                    gb.push(b);
                }
            }
            let fac = Factor::new(dj)?;
            let fj = fac.solve_mat(&cj);
            border -= cj.transpose() * &fj;
            f.push(fj);
            d_fac.push(fac);
            c.push(cj);
        }
        sinv.push(si);
    }
    let border = Factor::new(hermitian_real(border))?;
    Some(Schur { sinv, f, d_fac, c, ga, gb, border })
}

fn hermitian_real(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Newton direction for complementarity target `target·𝟙`, with the
/// second-order correction from `aff` when given.
fn direction(data: &SdpData, schur: &Schur, res: &Residuals, v: &Vars, target: f64, aff: Option<&Step>) -> Step {
    let d = data.d;
    let nb = data.blocks;
    let kd = data.data_blocks;
    let q = &data.q;
    let ident = CMatrix::identity(d, d);

    let rc: Vec<CMatrix> = (0..nb)
        .map(|j| {
            let mut m = &ident * C64::new(target, 0.0) - &v.x[j] * &v.s[j];
            if let Some(a) = aff {
                m -= &a.dx[j] * &a.ds[j];
            }
            m
        })
        .collect();
    let vx: Vec<DVector<f64>> =
        (0..nb).map(|j| herm_coords(&((&rc[j] - &v.x[j] * &res.rd_mat[j]) * &schur.sinv[j]))).collect();

    // box complementarity residuals and their eliminated contributions
    let mut rca = Vec::new();
    let mut rcb = Vec::new();
    let mut va = Vec::new();
    let mut vb = Vec::new();
    if let DataSlack::Box(_) = data.slack {
        for j in 0..kd {
            let mut ca = v.a[j].component_mul(&v.za[j]).map(|x| target - x);
            let mut cb = v.b[j].component_mul(&v.zb[j]).map(|x| target - x);
            if let Some(a) = aff {
                ca -= a.da[j].component_mul(&a.dza[j]);
                cb -= a.db[j].component_mul(&a.dzb[j]);
            }
            va.push((&ca - v.a[j].component_mul(&res.rda[j])).component_div(&v.za[j]));
            vb.push((&cb - v.b[j].component_mul(&res.rdb[j])).component_div(&v.zb[j]));
            rca.push(ca);
            rcb.push(cb);
        }
    }

    let mut rhs_u = res.rp_u.clone();
    for x in &vx {
        rhs_u -= x;
    }
    let mut rhs_b = Vec::new();
    let w: Vec<DVector<f64>> = (0..kd)
        .map(|j| {
            let mut rhs = &res.rp_d[j] - q * &vx[j];
            match data.slack {
                DataSlack::LeastSquares => rhs += &res.rr[j],
                DataSlack::Box(kappa) => {
                    rhs += &va[j] * kappa;
                    let rb = &res.rp_b[j] - &va[j] - &vb[j];
                    let wsum = &schur.ga[j] + &schur.gb[j];
                    rhs += schur.ga[j].component_mul(&rb).component_div(&wsum) * kappa;
                    rhs_b.push(rb);
                }
            }
            schur.d_fac[j].solve(&rhs)
        })
        .collect();
    let mut t = rhs_u;
    for j in 0..kd {
        t -= schur.c[j].tr_mul(&w[j]);
    }
    let dyu = schur.border.solve(&t);
    let dyd: Vec<DVector<f64>> = (0..kd).map(|j| &w[j] - &schur.f[j] * &dyu).collect();

    let mut ds = Vec::with_capacity(nb);
    let mut dx = Vec::with_capacity(nb);
    for j in 0..nb {
        let mut dsc = &res.rd[j] - &dyu;
        if j < kd {
            dsc -= q.tr_mul(&dyd[j]);
        }
        let dsm = coords_matrix(&dsc, d);
        dx.push(hermitian_part(&((&rc[j] - &v.x[j] * &dsm) * &schur.sinv[j])));
        ds.push(dsm);
    }
    let mut step = Step {
        dx,
        ds,
        dyu,
        dyd: Vec::new(),
        dr: Vec::new(),
        da: Vec::new(),
        db: Vec::new(),
        dza: Vec::new(),
        dzb: Vec::new(),
        dyb: Vec::new(),
    };
    match data.slack {
        DataSlack::LeastSquares => {
            step.dr = (0..kd).map(|j| &res.rr[j] - &dyd[j]).collect();
        }
        DataSlack::Box(kappa) => {
            for j in 0..kd {
                let wsum = &schur.ga[j] + &schur.gb[j];
                let dyb = (&rhs_b[j] + schur.ga[j].component_mul(&dyd[j]) * kappa).component_div(&wsum);
                let dza = &res.rda[j] + &dyd[j] * kappa - &dyb;
                let dzb = &res.rdb[j] - &dyb;
                step.da.push((&rca[j] - v.a[j].component_mul(&dza)).component_div(&v.za[j]));
                step.db.push((&rcb[j] - v.b[j].component_mul(&dzb)).component_div(&v.zb[j]));
                step.dza.push(dza);
                step.dzb.push(dzb);
                step.dyb.push(dyb);
            }
        }
    }
    step.dyd = dyd;
    step
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::HermitianOperator;

    #[test]
    fn coords_helpers_agree_with_operator_coords() {
        let m = CMatrix::from_fn(3, 3, |i, j| C64::new((i * 3 + j) as f64, (i as f64) - (j as f64) * 0.5));
        let h = HermitianOperator::from_matrix(m.clone()).unwrap();
        let c = herm_coords(&m);
        assert_eq!(c.as_slice(), h.coords().as_slice());
        assert!((coords_matrix(&c, 3) - h.matrix()).norm() < 1e-14);
    }

    #[test]
    fn scaling_matrix_matches_definition() {
        let d = 3;
        let x = CMatrix::from_fn(d, d, |i, j| C64::new(if i == j { 2.0 } else { 0.3 }, (i as f64 - j as f64) * 0.1));
        let x = hermitian_part(&x);
        let sinv = hermitian_part(&CMatrix::from_fn(d, d, |i, j| C64::new(if i == j { 1.5 } else { -0.2 }, (j as f64 - i as f64) * 0.05)));
        let terms = basis_terms(d);
        let g = scaling_matrix(&x, &sinv, &terms);
        for e in 0..d * d {
            let mut unit = DVector::zeros(d * d);
            unit[e] = 1.0;
            let y = coords_matrix(&unit, d);
            let image = herm_coords(&(&x * y * &sinv));
            assert!((g.column(e) - image).norm() < 1e-13);
        }
    }

    #[test]
    fn step_length_exact_for_diagonal() {
        let x = CMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(2.0, 0.0)]));
        let dx = CMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(-4.0, 0.0), C64::new(1.0, 0.0)]));
        assert!((max_step(&x, &dx) - 0.25).abs() < 1e-14);
        assert_eq!(max_step(&x, &(-&dx * C64::new(0.0, 0.0))), f64::INFINITY);
    }
}
