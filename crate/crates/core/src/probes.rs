//! Probe-state ensembles: random pure and product states, waveplate-prepared
//! polarization states and the four-qubit products of the latter.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operators::{matrix_from_json, matrix_to_json, CMatrix, HermitianOperator, MatrixJson, PureState, C64};
use crate::random::Gaussian;

/// Waveplate angles of the twenty two-qubit probes, in degrees.
pub const TABLE1_CSV: &str = include_str!("../data/table1.csv");

/// Minimum Frobenius distance between two probes of one sequence.
pub const DISTINCT_TOL: f64 = 1e-8;
const MAX_RESAMPLE: usize = 100;

/// Angles in degrees: QWP `phi` then HWP `theta` on each qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveplateSetting {
    pub phi1: f64,
    pub theta1: f64,
    pub phi2: f64,
    pub theta2: f64,
}

impl WaveplateSetting {
    /// Uniform draw from `θ ∈ [−90°, 90°]`, `φ ∈ [−45°, 45°]`.
    pub fn random(g: &mut Gaussian) -> Self {
        let mut u = |half: f64| (2.0 * g.uniform() - 1.0) * half;
        Self { phi1: u(45.0), theta1: u(90.0), phi2: u(45.0), theta2: u(90.0) }
    }

    pub fn in_sampling_range(&self) -> bool {
        [self.theta1, self.theta2].iter().all(|t| t.abs() <= 90.0) && [self.phi1, self.phi2].iter().all(|p| p.abs() <= 45.0)
    }
}

/// `HWP(θ) = [[cos 2θ, sin 2θ], [sin 2θ, −cos 2θ]]`, angle in degrees.
pub fn hwp_unitary(theta_deg: f64) -> CMatrix {
    let (s, c) = (2.0 * theta_deg.to_radians()).sin_cos();
    CMatrix::from_row_slice(2, 2, &[C64::new(c, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(-c, 0.0)])
}

/// Quarter-wave plate with fast axis at `φ` (degrees), global phase `e^{−iπ/4}`.
pub fn qwp_unitary(phi_deg: f64) -> CMatrix {
    let (s, c) = phi_deg.to_radians().sin_cos();
    let i = C64::new(0.0, 1.0);
    let off = (C64::new(1.0, 0.0) - i) * (s * c);
    let m = CMatrix::from_row_slice(2, 2, &[C64::new(c * c, 0.0) + i * (s * s), off, off, C64::new(s * s, 0.0) + i * (c * c)]);
    m * C64::from_polar(1.0, -std::f64::consts::FRAC_PI_4)
}

/// `|0⟩⟨0| ⊗ σ_z + |1⟩⟨1| ⊗ 𝟙 = diag(1, −1, 1, 1)`.
pub fn cz_gate() -> CMatrix {
    let mut m = CMatrix::identity(4, 4);
    m[(1, 1)] = C64::new(-1.0, 0.0);
    m
}

/// `[HWP(θ₁)QWP(φ₁) ⊗ HWP(θ₂)QWP(φ₂)] |1⟩|1⟩`.
pub fn probe_from_waveplates(w: &WaveplateSetting) -> PureState {
    let one = PureState::basis(2, 1);
    let a = one.apply(&(hwp_unitary(w.theta1) * qwp_unitary(w.phi1)));
    let b = one.apply(&(hwp_unitary(w.theta2) * qwp_unitary(w.phi2)));
    a.tensor(&b)
}

pub fn table1_settings() -> Vec<WaveplateSetting> {
    let mut reader = csv::Reader::from_reader(TABLE1_CSV.as_bytes());
    reader
        .records()
        .map(|rec| {
            let rec = rec.expect("bundled waveplate table is well-formed");
            let f = |k: usize| rec[k].trim().parse::<f64>().expect("bundled waveplate table is numeric");
            WaveplateSetting { phi1: f(1), theta1: f(2), phi2: f(3), theta2: f(4) }
        })
        .collect()
}

/// An ordered list of distinct probe density operators.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSequence {
    pub dim: usize,
    pub states: Vec<HermitianOperator>,
    pub labels: Vec<String>,
    pub seed: Option<u64>,
}

impl ProbeSequence {
    pub fn new(dim: usize, states: Vec<HermitianOperator>, labels: Vec<String>, seed: Option<u64>) -> Result<Self> {
        if states.len() != labels.len() {
            return invalid("every probe needs a label");
        }
        for (k, s) in states.iter().enumerate() {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: s.dim() });
            }
            if (s.trace() - 1.0).abs() > 1e-10 || s.min_eigenvalue() < -1e-10 {
                return invalid(format!("probe {k} is not a density operator"));
            }
        }
        Ok(Self { dim, states, labels, seed })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Smallest pairwise Frobenius distance (infinite for fewer than two states).
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (a, sa) in self.states.iter().enumerate() {
            for sb in &self.states[a + 1..] {
                best = best.min((sa - sb).frobenius_norm());
            }
        }
        best
    }

    pub fn truncated(&self, len: usize) -> Self {
        let n = len.min(self.len());
        Self { dim: self.dim, states: self.states[..n].to_vec(), labels: self.labels[..n].to_vec(), seed: self.seed }
    }

    /// Appends random probes of `kind` until the sequence holds `total` states.
    pub fn extended_with_random(&self, kind: &ProbeKind, total: usize, seed: u64) -> Result<Self> {
        let mut out = self.clone();
        let mut g = Gaussian::new(seed);
        while out.len() < total {
            let s = draw_distinct(self.dim, kind, &mut g, &out.states)?;
            out.labels.push(format!("{}:{}", kind.label(), out.len()));
            out.states.push(s);
        }
        Ok(out)
    }

    pub fn to_file(&self) -> ProbeFile {
        ProbeFile {
            dim: self.dim,
            states: self.states.iter().map(matrix_to_json).collect(),
            labels: self.labels.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeFile {
    pub dim: usize,
    pub states: Vec<MatrixJson>,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ProbeFile {
    pub fn to_sequence(&self) -> Result<ProbeSequence> {
        let states = self.states.iter().map(matrix_from_json).collect::<Result<Vec<_>>>()?;
        let labels = if self.labels.is_empty() { (0..states.len()).map(|k| k.to_string()).collect() } else { self.labels.clone() };
        ProbeSequence::new(self.dim, states, labels, self.seed)
    }
}

/// The twenty two-qubit waveplate probes in table order.
pub fn table1_probes() -> ProbeSequence {
    let states = table1_settings().iter().map(|w| probe_from_waveplates(w).density()).collect();
    let labels = (1..=20).map(|k| format!("table1:{k}")).collect();
    ProbeSequence { dim: 4, states, labels, seed: None }
}

/// All 400 products `ρ_{l'} ⊗ ρ_{l''}` of the two-qubit probes, Fisher–Yates shuffled.
pub fn four_qubit_product_probes(shuffle_seed: u64) -> ProbeSequence {
    let base = table1_probes();
    let mut pairs: Vec<(usize, usize)> = (0..20).flat_map(|a| (0..20).map(move |b| (a, b))).collect();
    Gaussian::new(shuffle_seed).shuffle(&mut pairs);
    let states = pairs.iter().map(|&(a, b)| base.states[a].tensor(&base.states[b])).collect();
    let labels = pairs.iter().map(|&(a, b)| format!("table1:{}x{}", a + 1, b + 1)).collect();
    ProbeSequence { dim: 16, states, labels, seed: Some(shuffle_seed) }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    HaarPure,
    /// Product of independent Haar-random factors; an empty list means the
    /// prime factorization of the dimension.
    ProductPure { factors: Vec<usize> },
}

impl ProbeKind {
    pub fn product() -> Self {
        ProbeKind::ProductPure { factors: Vec::new() }
    }

    fn label(&self) -> &'static str {
        match self {
            ProbeKind::HaarPure => "haar",
            ProbeKind::ProductPure { .. } => "product",
        }
    }
}

pub fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn resolve_factors(dim: usize, kind: &ProbeKind) -> Result<Option<Vec<usize>>> {
    match kind {
        ProbeKind::HaarPure => Ok(None),
        ProbeKind::ProductPure { factors } => {
            let f = if factors.is_empty() { prime_factors(dim) } else { factors.clone() };
            if f.len() < 2 || f.iter().any(|&x| x < 2) || f.iter().product::<usize>() != dim {
                return invalid(format!("dimension {dim} does not factor into subsystems {f:?}"));
            }
            Ok(Some(f))
        }
    }
}

fn draw_ket(dim: usize, factors: Option<&[usize]>, g: &mut Gaussian) -> Result<PureState> {
    match factors {
        None => PureState::normalized(g.complex_vector(dim)),
        Some(f) => {
            let mut ket = PureState::normalized(g.complex_vector(f[0]))?;
            for &d in &f[1..] {
                ket = ket.tensor(&PureState::normalized(g.complex_vector(d))?);
            }
            Ok(ket)
        }
    }
}

fn draw_distinct(dim: usize, kind: &ProbeKind, g: &mut Gaussian, existing: &[HermitianOperator]) -> Result<HermitianOperator> {
    let factors = resolve_factors(dim, kind)?;
    for _ in 0..MAX_RESAMPLE {
        let rho = draw_ket(dim, factors.as_deref(), g)?.density();
        if existing.iter().all(|s| (s - &rho).frobenius_norm() > DISTINCT_TOL) {
            return Ok(rho);
        }
    }
    Err(Error::GenerationFailed { attempts: MAX_RESAMPLE, reason: "could not draw a distinct probe".into() })
}

/// One random pure probe `|ψ⟩⟨ψ|`.
pub fn random_probe(dim: usize, kind: &ProbeKind, seed: u64) -> Result<HermitianOperator> {
    if dim == 0 {
        return invalid("dimension must be positive");
    }
    let factors = resolve_factors(dim, kind)?;
    Ok(draw_ket(dim, factors.as_deref(), &mut Gaussian::new(seed))?.density())
}

/// `count` pairwise-distinct random probes drawn from one seeded stream.
pub fn random_sequence(dim: usize, kind: &ProbeKind, count: usize, seed: u64) -> Result<ProbeSequence> {
    if dim == 0 {
        return invalid("dimension must be positive");
    }
    let empty = ProbeSequence { dim, states: Vec::new(), labels: Vec::new(), seed: Some(seed) };
    empty.extended_with_random(kind, count, seed)
}
