//! The adaptive reconstruction loop and the scaling-sweep runner.
//!
//! Each round adds one probe, refits the least-squares estimate on all data
//! so far and measures how much freedom the data leave via the spread of a
//! random witness functional. The first round whose normalized spread falls
//! below the threshold certifies the estimate.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::povm_fidelity;
use crate::certify::{detect_l_ic, make_witness_sets, s_cvx_max, CertificationResult, DEFAULT_THRESHOLD};
use crate::error::{invalid, Error, Result};
use crate::operators::{Povm, PovmFile};
use crate::povm_gen::{generate, EnsembleKind, PovmEnsembleSpec};
use crate::probes::{random_sequence, ProbeKind, ProbeSequence};
use crate::random::derive_seed;
use crate::simulator::{simulate_sequence, CountData, FrequencyVector};
use crate::solver::{constrained_ls, FeasibilityProblem, SolverSettings};

const SWEEP_SAMPLE_TAG: u64 = 0x5357_5034;
const SWEEP_POVM_TAG: u64 = 0x5357_5031;
const SWEEP_PROBE_TAG: u64 = 0x5357_5032;
const SWEEP_WITNESS_TAG: u64 = 0x5357_5033;

/// Where the frequencies come from.
#[derive(Clone, Debug)]
pub enum DataSource {
    /// Born probabilities of a known measurement, sampled with `shots` per
    /// probe (`0` for exact probabilities).
    Simulated { truth: Povm, shots: u64, seed: u64 },
    /// Recorded frequencies; entry `k` belongs to probe `probe_ids[k]` of the
    /// probe sequence and is consumed in that order.
    Recorded(CountData),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CqdtConfig {
    pub settings: SolverSettings,
    pub l_max: usize,
    pub threshold: f64,
    pub witness_seed: u64,
    /// Number of independent witness sets; the largest spread is used.
    pub witness_sets: usize,
    /// Stop at the first certified round; otherwise run to `l_max`.
    pub stop_on_certification: bool,
}

impl CqdtConfig {
    pub fn new(l_max: usize, witness_seed: u64) -> Self {
        Self {
            settings: SolverSettings::default(),
            l_max,
            threshold: DEFAULT_THRESHOLD,
            witness_seed,
            witness_sets: 1,
            stop_on_certification: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LRecord {
    pub l: usize,
    pub s_cvx_raw: f64,
    pub s_cvx_normalized: f64,
    pub f_min: f64,
    pub f_max: f64,
    /// Both extremum solves met their tolerances.
    pub converged: bool,
    pub ls_objective: f64,
    pub ls_converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity_reference: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMetadata {
    pub dim: usize,
    pub outcomes: usize,
    pub shots: Option<u64>,
    pub sampling_seed: Option<u64>,
    pub probe_seed: Option<u64>,
    pub probe_labels: Vec<String>,
    pub config: CqdtConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<PovmEnsembleSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CqdtReport {
    pub records: Vec<LRecord>,
    /// First certified probe count, `None` when not reached.
    pub l_ic: Option<usize>,
    pub final_povm: PovmFile,
    pub metadata: RunMetadata,
}

impl CqdtReport {
    pub fn record(&self, l: usize) -> Option<&LRecord> {
        l.checked_sub(1).and_then(|i| self.records.get(i))
    }

    pub fn final_estimate(&self) -> Result<Povm> {
        self.final_povm.to_povm_unchecked()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Optional comparison measurements tracked per round.
#[derive(Clone, Debug, Default)]
pub struct Comparisons {
    pub target: Option<Povm>,
    pub reference: Option<Povm>,
    pub ensemble: Option<PovmEnsembleSpec>,
}

/// Frequencies for every probe of the sequence that the source can supply,
/// in consumption order, paired with the probe indices.
fn frequency_stream(source: &DataSource, probes: &ProbeSequence) -> Result<(Vec<usize>, Vec<FrequencyVector>)> {
    match source {
        DataSource::Simulated { truth, shots, seed } => {
            if truth.dim() != probes.dim {
                return Err(Error::DimensionMismatch { expected: truth.dim(), found: probes.dim });
            }
            let freqs = simulate_sequence(truth, &probes.states, *shots, *seed)?;
            Ok(((0..probes.len()).collect(), freqs))
        }
        DataSource::Recorded(data) => {
            if let Some(&bad) = data.probe_ids.iter().find(|&&id| id >= probes.len()) {
                return invalid(format!("count data refer to probe {bad} but the sequence has {} probes", probes.len()));
            }
            Ok((data.probe_ids.clone(), data.frequencies.clone()))
        }
    }
}

/// Runs the reconstruct-and-certify loop for `L = 1, 2, …` up to
/// `min(l_max, available data)`.
pub fn run_cqdt(source: &DataSource, probes: &ProbeSequence, config: &CqdtConfig, compare: &Comparisons) -> Result<CqdtReport> {
    config.settings.validate()?;
    if !(config.threshold > 0.0) {
        return invalid("threshold must be positive");
    }
    let (ids, freqs) = frequency_stream(source, probes)?;
    let m = freqs.first().map(|f| f.outcomes()).ok_or(Error::NoRecords)?;
    if freqs.iter().any(|f| f.outcomes() != m) {
        return invalid("frequency vectors have differing outcome counts");
    }
    let d = probes.dim;
    let l_max = config.l_max.min(ids.len());
    if l_max == 0 {
        return invalid("no probes to process");
    }
    let witnesses = make_witness_sets(d, m, config.witness_seed, config.witness_sets)?;
    let fidelity = |p: &Povm, q: &Option<Povm>| q.as_ref().map(|q| povm_fidelity(p, q)).transpose();

    let mut records: Vec<LRecord> = Vec::new();
    let mut anchor = None;
    let mut l_ic = None;
    let mut estimate = Povm::maximally_mixed(d, m);
    for l in 1..=l_max {
        let states: Vec<_> = ids[..l].iter().map(|&i| probes.states[i].clone()).collect();
        let nu: Vec<Vec<f64>> = freqs[..l].iter().map(|f| f.values.clone()).collect();
        let ls = constrained_ls(d, m, &states, &nu, &config.settings)?;
        let problem = FeasibilityProblem::from_povm(&ls.povm, states)?;
        let mut cert: CertificationResult = s_cvx_max(&problem, &witnesses, &config.settings)?;
        cert.normalize(*anchor.get_or_insert(cert.s_cvx_raw));
        let record = LRecord {
            l,
            s_cvx_raw: cert.s_cvx_raw,
            s_cvx_normalized: cert.s_cvx_normalized.unwrap_or(f64::NAN),
            f_min: cert.f_min,
            f_max: cert.f_max,
            converged: cert.converged && ls.converged,
            ls_objective: ls.objective,
            ls_converged: ls.converged,
            fidelity_target: fidelity(&ls.povm, &compare.target)?,
            fidelity_reference: fidelity(&ls.povm, &compare.reference)?,
        };
        log::debug!("L={l} s_cvx={:.3e} converged={}", record.s_cvx_normalized, record.converged);
        records.push(record);
        estimate = ls.povm;
        if l_ic.is_none() {
            let trajectory: Vec<(f64, bool)> = records.iter().map(|r| (r.s_cvx_normalized, r.converged)).collect();
            l_ic = detect_l_ic(&trajectory, config.threshold);
            if l_ic.is_some() && config.stop_on_certification {
                break;
            }
        }
    }

    let (shots, sampling_seed) = match source {
        DataSource::Simulated { shots, seed, .. } => (Some(*shots), Some(*seed)),
        DataSource::Recorded(_) => (None, None),
    };
    Ok(CqdtReport {
        records,
        l_ic,
        final_povm: PovmFile::from_povm(&estimate, None),
        metadata: RunMetadata {
            dim: d,
            outcomes: m,
            shots,
            sampling_seed,
            probe_seed: probes.seed,
            probe_labels: probes.labels[..l_max].to_vec(),
            config: config.clone(),
            ensemble: compare.ensemble,
        },
    })
}

/// Outcome count as a function of dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MRule {
    Fixed(usize),
    /// `M = k·d`
    Linear(usize),
    /// `M = k·d²`
    Quadratic(usize),
}

impl MRule {
    pub fn outcomes(&self, d: usize) -> usize {
        match *self {
            MRule::Fixed(m) => m,
            MRule::Linear(k) => k * d,
            MRule::Quadratic(k) => k * d * d,
        }
    }
}

impl std::str::FromStr for MRule {
    type Err = Error;

    /// `8`, `3d` or `5d2`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let coef = |t: &str| -> Result<usize> {
            if t.is_empty() {
                return Ok(1);
            }
            t.parse().map_err(|_| Error::InvalidInput(format!("bad M rule '{s}'")))
        };
        let rule = if let Some(k) = s.strip_suffix("d2").or_else(|| s.strip_suffix("d^2")) {
            MRule::Quadratic(coef(k)?)
        } else if let Some(k) = s.strip_suffix('d') {
            MRule::Linear(coef(k)?)
        } else {
            MRule::Fixed(coef(s)?)
        };
        if rule.outcomes(1) == 0 {
            return invalid("M rule must give a positive outcome count");
        }
        Ok(rule)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub m_rule: MRule,
    pub ensemble: EnsembleKind,
    pub probe_kind: ProbeKind,
    pub trials: usize,
    /// Shots per probe, `0` for exact probabilities.
    pub shots: u64,
    /// Defaults to `2d²` when absent.
    pub l_max: Option<usize>,
    pub threshold: f64,
    pub witness_sets: usize,
    pub seed: u64,
    pub settings: SolverSettings,
}

impl SweepConfig {
    pub fn new(dims: Vec<usize>, ranks: Vec<usize>, m_rule: MRule, trials: usize, seed: u64) -> Self {
        Self {
            dims,
            ranks,
            m_rule,
            ensemble: EnsembleKind::SquareRoot,
            probe_kind: ProbeKind::HaarPure,
            trials,
            shots: 0,
            l_max: None,
            threshold: DEFAULT_THRESHOLD,
            witness_sets: 1,
            seed,
            settings: SolverSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: usize,
    pub r: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub trial: usize,
    #[serde(rename = "L_IC")]
    pub l_ic: Option<usize>,
    pub status: String,
}

/// Mean and sample standard deviation of `L_IC` over the certified trials of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub d: usize,
    pub r: usize,
    pub m: usize,
    pub trials: usize,
    pub successes: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

fn cell_index(d: usize, r: usize, trial: usize) -> u64 {
    ((d as u64) << 40) | ((r as u64) << 20) | trial as u64
}

/// One independently seeded noiseless-or-sampled run of the loop.
pub fn sweep_trial(config: &SweepConfig, d: usize, r: usize, trial: usize) -> Result<CqdtReport> {
    let m = config.m_rule.outcomes(d);
    let idx = cell_index(d, r, trial);
    let spec = PovmEnsembleSpec { dim: d, outcomes: m, rank: r, kind: config.ensemble, seed: derive_seed(config.seed, SWEEP_POVM_TAG, idx) };
    let truth = generate(&spec)?;
    let l_max = config.l_max.unwrap_or(2 * d * d);
    let probes = random_sequence(d, &config.probe_kind, l_max, derive_seed(config.seed, SWEEP_PROBE_TAG, idx))?;
    let mut cfg = CqdtConfig::new(l_max, derive_seed(config.seed, SWEEP_WITNESS_TAG, idx));
    cfg.settings = config.settings.clone();
    cfg.threshold = config.threshold;
    cfg.witness_sets = config.witness_sets;
    let source = DataSource::Simulated { truth, shots: config.shots, seed: derive_seed(config.seed, SWEEP_SAMPLE_TAG, idx) };
    run_cqdt(&source, &probes, &cfg, &Comparisons { ensemble: Some(spec), ..Default::default() })
}

/// Runs every `(d, r, trial)` cell in parallel. Failed runs are recorded in
/// the status column and excluded from the statistics.
pub fn sweep(config: &SweepConfig) -> Result<(Vec<SweepRow>, Vec<CellStats>)> {
    if config.trials == 0 || config.dims.is_empty() || config.ranks.is_empty() {
        return invalid("sweep needs at least one dimension, rank and trial");
    }
    let jobs: Vec<(usize, usize, usize)> = config
        .dims
        .iter()
        .flat_map(|&d| config.ranks.iter().flat_map(move |&r| (0..config.trials).map(move |t| (d, r, t))))
        .collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(d, r, trial)| {
            let m = config.m_rule.outcomes(d);
            let (l_ic, status) = match sweep_trial(config, d, r, trial) {
                Ok(rep) => match rep.l_ic {
                    Some(l) => (Some(l), "certified".to_string()),
                    None => (None, "not_reached".to_string()),
                },
                Err(e) => (None, format!("error: {e}")),
            };
            SweepRow { d, r, m, trial, l_ic, status }
        })
        .collect();
    Ok((rows.clone(), cell_stats(&rows)))
}

/// Groups rows by `(d, r, M)` in first-appearance order.
pub fn cell_stats(rows: &[SweepRow]) -> Vec<CellStats> {
    let mut cells: Vec<CellStats> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for row in rows {
        let pos = match cells.iter().position(|c| (c.d, c.r, c.m) == (row.d, row.r, row.m)) {
            Some(p) => p,
            None => {
                cells.push(CellStats { d: row.d, r: row.r, m: row.m, trials: 0, successes: 0, mean: None, std: None });
                values.push(Vec::new());
                cells.len() - 1
            }
        };
        cells[pos].trials += 1;
        if let Some(l) = row.l_ic {
            values[pos].push(l as f64);
        }
    }
    for (cell, v) in cells.iter_mut().zip(&values) {
        let (mean, std) = mean_std(v);
        cell.successes = v.len();
        cell.mean = mean;
        cell.std = std;
    }
    cells
}

/// Mean and sample (n − 1) standard deviation; σ is 0 for a single value.
pub fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (Some(mean), Some(var.sqrt()))
}

/// `d,r,M,trial,L_IC,status`; an uncertified run leaves `L_IC` empty.
pub fn write_sweep_csv<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: std::io::Read>(reader: R) -> Result<Vec<SweepRow>> {
    csv::Reader::from_reader(reader).deserialize().map(|r| r.map_err(Error::from)).collect()
}
