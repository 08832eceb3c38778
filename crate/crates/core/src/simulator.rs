//! Born-rule forward model, multinomial shot noise and count-file ingestion.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operators::{HermitianOperator, Povm};
use crate::random::{derive_seed, Gaussian};

const CLIP_TOL: f64 = 1e-10;

/// Normalized outcome frequencies for one probe; `shots == 0` marks exact probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector {
    pub values: Vec<f64>,
    pub shots: u64,
}

impl FrequencyVector {
    pub fn exact(p: Vec<f64>) -> Self {
        Self { values: p, shots: 0 }
    }

    pub fn outcomes(&self) -> usize {
        self.values.len()
    }
}

/// `p_j = tr(ρ Π_j)`, clipped to `[0, 1]` when within 1e-10 of the boundary.
pub fn born_probabilities(rho: &HermitianOperator, povm: &Povm) -> Result<Vec<f64>> {
    if rho.dim() != povm.dim() {
        return Err(Error::DimensionMismatch { expected: povm.dim(), found: rho.dim() });
    }
    let mut p = Vec::with_capacity(povm.len());
    for (j, e) in povm.elements().iter().enumerate() {
        let v = rho.inner(e);
        if v < -CLIP_TOL || v > 1.0 + CLIP_TOL {
            return invalid(format!("probability {v:e} for outcome {j} is outside [0, 1]; state or POVM is invalid"));
        }
        p.push(v.clamp(0.0, 1.0));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return invalid(format!("probabilities sum to {total}; state or POVM is invalid"));
    }
    Ok(p)
}

/// `N = 0` passes `p` through; otherwise draws `multinomial(N, p) / N`.
pub fn sample_frequencies(p: &[f64], shots: u64, seed: u64) -> Result<FrequencyVector> {
    if let Some(v) = p.iter().find(|&&v| v < -CLIP_TOL || !v.is_finite()) {
        return invalid(format!("negative or non-finite probability {v}"));
    }
    if shots == 0 {
        return Ok(FrequencyVector::exact(p.to_vec()));
    }
    let clipped: Vec<f64> = p.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return invalid("probabilities sum to zero");
    }
    let counts = multinomial(&clipped, total, shots, &mut Gaussian::new(seed));
    Ok(FrequencyVector { values: counts.iter().map(|&c| c as f64 / shots as f64).collect(), shots })
}

const SAMPLE_TAG: u64 = 0x5348_4f54;

/// Frequencies of `povm` on each probe in turn; probe `l` is sampled with a
/// seed derived from `(seed, l)`, so prefixes of a sequence reproduce.
pub fn simulate_sequence(povm: &Povm, probes: &[HermitianOperator], shots: u64, seed: u64) -> Result<Vec<FrequencyVector>> {
    probes
        .iter()
        .enumerate()
        .map(|(l, rho)| sample_frequencies(&born_probabilities(rho, povm)?, shots, derive_seed(seed, SAMPLE_TAG, l as u64)))
        .collect()
}

/// Sequential conditional binomials.
fn multinomial(p: &[f64], total: f64, shots: u64, g: &mut Gaussian) -> Vec<u64> {
    let mut out = vec![0; p.len()];
    let mut left = shots;
    let mut mass = total;
    for (j, &pj) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if j + 1 == p.len() || mass <= 0.0 {
            out[j] = left;
            break;
        }
        let q = (pj / mass).clamp(0.0, 1.0);
        let k = Binomial::new(left, q).expect("valid binomial parameters").sample(g.rng());
        out[j] = k;
        left -= k;
        mass -= pj;
    }
    out
}

/// One row of a count file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub probe: usize,
    pub outcome: usize,
    pub count: u64,
}

/// Per-probe frequencies, ordered by probe index.
#[derive(Clone, Debug, PartialEq)]
pub struct CountData {
    pub probe_ids: Vec<usize>,
    pub frequencies: Vec<FrequencyVector>,
}

impl CountData {
    pub fn outcomes(&self) -> usize {
        self.frequencies.first().map_or(0, |f| f.outcomes())
    }
}

pub fn parse_counts_csv<R: Read>(reader: R) -> Result<CountData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut records = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        if row.len() != 3 {
            return invalid(format!("row {} has {} fields, expected probe,outcome,count", line + 1, row.len()));
        }
        let field = |k: usize, name: &str| -> Result<u64> {
            row[k].parse::<u64>().map_err(|_| Error::InvalidInput(format!("row {}: {name} '{}' is not a non-negative integer", line + 1, &row[k])))
        };
        records.push(CountRecord {
            probe: field(0, "probe")? as usize,
            outcome: field(1, "outcome")? as usize,
            count: field(2, "count")?,
        });
    }
    group_counts(&records)
}

pub fn parse_counts_json<R: Read>(reader: R) -> Result<CountData> {
    let records: Vec<CountRecord> = serde_json::from_reader(reader)?;
    group_counts(&records)
}

/// Reads a `probe,outcome,count` CSV, or the same records as a JSON array
/// when the file extension is `.json`.
pub fn ingest_counts(path: &Path) -> Result<CountData> {
    let file = std::fs::File::open(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        parse_counts_json(file)
    } else {
        parse_counts_csv(file)
    }
}

pub fn group_counts(records: &[CountRecord]) -> Result<CountData> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let m = records.iter().map(|r| r.outcome).max().unwrap() + 1;
    let mut by_probe: BTreeMap<usize, Vec<Option<u64>>> = BTreeMap::new();
    for r in records {
        let slot = &mut by_probe.entry(r.probe).or_insert_with(|| vec![None; m])[r.outcome];
        *slot = Some(slot.unwrap_or(0) + r.count);
    }
    let mut probe_ids = Vec::with_capacity(by_probe.len());
    let mut frequencies = Vec::with_capacity(by_probe.len());
    for (probe, counts) in by_probe {
        let missing = counts.iter().filter(|c| c.is_none()).count();
        if missing > 0 {
            log::warn!("probe {probe}: {missing} outcome row(s) missing, treated as zero counts");
        }
        let total: u64 = counts.iter().map(|c| c.unwrap_or(0)).sum();
        if total == 0 {
            return Err(Error::ZeroCounts(probe));
        }
        probe_ids.push(probe);
        frequencies.push(FrequencyVector {
            values: counts.iter().map(|c| c.unwrap_or(0) as f64 / total as f64).collect(),
            shots: total,
        });
    }
    Ok(CountData { probe_ids, frequencies })
}

/// Writes integer counts `round(ν·shots)`; requires sampled (shots > 0) data.
pub fn write_counts_csv<W: Write>(writer: W, freqs: &[FrequencyVector]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["probe", "outcome", "count"])?;
    for (l, f) in freqs.iter().enumerate() {
        if f.shots == 0 {
            return invalid("exact probabilities cannot be written as integer counts; use shots > 0");
        }
        for (j, v) in f.values.iter().enumerate() {
            let c = (v * f.shots as f64).round() as u64;
            w.write_record([l.to_string(), j.to_string(), c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_counts_file(path: &Path, freqs: &[FrequencyVector]) -> Result<()> {
    write_counts_csv(std::fs::File::create(path)?, freqs)
}
