use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cqdt::analysis::{mean_rank, numerical_rank, phase_retrieval_ic, povm_fidelity, spectrum};
use cqdt::operators::{Povm, PovmFile};
use cqdt::povm_gen::{generate, EnsembleKind, PovmEnsembleSpec};
use cqdt::probes::{four_qubit_product_probes, random_sequence, table1_probes, ProbeFile, ProbeKind, ProbeSequence};
use cqdt::protocol::{run_cqdt, sweep, write_sweep_csv, Comparisons, CqdtConfig, DataSource, MRule, SweepConfig};
use cqdt::simulator::{ingest_counts, simulate_sequence, write_counts_csv};
use cqdt::solver::{Algorithm, SolverSettings};

#[derive(Parser)]
#[command(name = "cqdt", version, about = "Compressive detector tomography with uniqueness certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a measurement from an ensemble and write it as JSON.
    GenPovm(GenPovmArgs),
    /// Write a probe-state sequence as JSON.
    Probes(ProbesArgs),
    /// Sample outcome counts of a measurement on a probe sequence.
    Simulate(SimulateArgs),
    /// Reconstruct-and-certify loop on simulated or recorded data.
    Run(RunArgs),
    /// Certified probe counts over a grid of dimensions and ranks.
    Sweep(SweepArgs),
    /// Choi fidelity between two measurements.
    Fidelity { a: PathBuf, b: PathBuf },
    /// Per-element eigenvalues and numerical ranks.
    Spectrum {
        povm: PathBuf,
        #[arg(long, default_value_t = 1e-2)]
        tau: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Probe count needed by rank-constrained phase retrieval.
    PrBound {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        rank: usize,
    },
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-8)]
    tol_feas: f64,
    #[arg(long, default_value_t = 1e-7)]
    tol_obj: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    slack: f64,
    #[arg(long, value_enum, default_value_t = Engine::Ipm)]
    algorithm: Engine,
}

#[derive(Clone, Copy, ValueEnum)]
enum Engine {
    /// Primal-dual interior point.
    Ipm,
    /// Douglas-Rachford splitting.
    Splitting,
}

impl SolverArgs {
    fn settings(&self) -> Result<SolverSettings> {
        let s = SolverSettings {
            max_iterations: self.max_iters,
            tol_feas: self.tol_feas,
            tol_obj: self.tol_obj,
            slack: self.slack,
            algorithm: match self.algorithm {
                Engine::Ipm => Algorithm::InteriorPoint,
                Engine::Splitting => Algorithm::Splitting,
            },
            ..SolverSettings::default()
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Args)]
struct GenPovmArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    outcomes: Option<usize>,
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// square-root, haar, basis-I, pair-mixed-I (I in 1..4) or product.
    #[arg(long, default_value = "square-root")]
    ensemble: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbeSource {
    Haar,
    Product,
    Table1,
    FourQubit,
}

#[derive(Args)]
struct ProbesArgs {
    #[arg(long, value_enum, default_value_t = ProbeSource::Haar)]
    kind: ProbeSource,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    povm: PathBuf,
    #[arg(long)]
    probes: PathBuf,
    #[arg(long)]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// True measurement to simulate data from.
    #[arg(long, conflicts_with = "counts", required_unless_present = "counts")]
    povm: Option<PathBuf>,
    /// Recorded counts (CSV `probe,outcome,count` or JSON).
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long)]
    probes: PathBuf,
    /// Shots per probe when simulating; 0 uses exact probabilities.
    #[arg(long, default_value_t = 0)]
    shots: u64,
    #[arg(long, default_value_t = 1e-3)]
    threshold: f64,
    /// Defaults to 20 for d = 4, 200 for d = 16 and 2d² otherwise.
    #[arg(long)]
    l_max: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to `--seed`.
    #[arg(long)]
    witness_seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    witness_sets: usize,
    /// Track fidelity to this measurement (defaults to `--povm`).
    #[arg(long)]
    target: Option<PathBuf>,
    /// Track fidelity to this reference measurement.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Keep adding probes after certification up to the limit.
    #[arg(long)]
    full: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// `a:b` inclusive range or comma list.
    #[arg(long)]
    dims: String,
    #[arg(long, default_value = "1")]
    ranks: String,
    /// `8`, `3d` or `5d2`.
    #[arg(long, default_value = "3d")]
    m_rule: String,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// square-root or haar.
    #[arg(long, default_value = "square-root")]
    ensemble: String,
    #[arg(long, value_enum, default_value_t = SweepProbes::Haar)]
    probe_kind: SweepProbes,
    #[arg(long, default_value_t = 0)]
    shots: u64,
    #[arg(long)]
    l_max: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    threshold: f64,
    #[arg(long, default_value_t = 1)]
    witness_sets: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepProbes {
    Haar,
    Product,
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn read_povm(path: &Path) -> Result<Povm> {
    let file: PovmFile = serde_json::from_reader(File::open(path).with_context(|| format!("opening {}", path.display()))?)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(file.to_povm()?)
}

fn read_probes(path: &Path) -> Result<ProbeSequence> {
    let file: ProbeFile = serde_json::from_reader(File::open(path).with_context(|| format!("opening {}", path.display()))?)
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok(file.to_sequence()?)
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = s.split_once(':') {
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty range {s}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().with_context(|| format!("bad list entry '{t}'"))).collect()
}

fn parse_ensemble(name: &str, dim: usize, outcomes: Option<usize>, rank: usize) -> Result<(EnsembleKind, usize, usize)> {
    let basis_outcomes = if dim == 16 { 16 } else { 4 };
    let indexed = |prefix: &str| name.strip_prefix(prefix).map(|i| i.parse::<usize>()).transpose();
    if let Some(index) = indexed("basis-")? {
        return Ok((EnsembleKind::ProjectiveBasis { index }, basis_outcomes, 1));
    }
    if let Some(index) = indexed("pair-mixed-")? {
        return Ok((EnsembleKind::PairMixed { index }, basis_outcomes, 2));
    }
    let m = outcomes.context("--outcomes is required for this ensemble")?;
    let kind = match name {
        "square-root" => EnsembleKind::SquareRoot,
        "haar" => EnsembleKind::Haar,
        "product" => EnsembleKind::Product,
        _ => bail!("unknown ensemble '{name}'"),
    };
    Ok((kind, m, rank))
}

fn gen_povm(a: GenPovmArgs) -> Result<()> {
    let (kind, outcomes, rank) = parse_ensemble(&a.ensemble, a.dim, a.outcomes, a.rank)?;
    let spec = PovmEnsembleSpec { dim: a.dim, outcomes, rank, kind, seed: a.seed };
    let povm = generate(&spec)?;
    let file = PovmFile::from_povm(&povm, Some(serde_json::to_value(spec)?));
    let mut w = writer(a.output.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &file)?;
    writeln!(w)?;
    Ok(())
}

fn probes(a: ProbesArgs) -> Result<()> {
    let seq = match a.kind {
        ProbeSource::Haar | ProbeSource::Product => {
            let dim = a.dim.context("--dim is required for random probes")?;
            let count = a.count.context("--count is required for random probes")?;
            let kind = if matches!(a.kind, ProbeSource::Haar) { ProbeKind::HaarPure } else { ProbeKind::product() };
            random_sequence(dim, &kind, count, a.seed)?
        }
        ProbeSource::Table1 => {
            let base = table1_probes();
            match a.count {
                // beyond the table, continue with random product probes
                Some(n) if n > base.len() => base.extended_with_random(&ProbeKind::product(), n, a.seed)?,
                Some(n) => base.truncated(n),
                None => base,
            }
        }
        ProbeSource::FourQubit => {
            let all = four_qubit_product_probes(a.seed);
            match a.count {
                Some(n) if n > all.len() => bail!("only {} four-qubit product probes exist", all.len()),
                Some(n) => all.truncated(n),
                None => all,
            }
        }
    };
    if let Some(d) = a.dim {
        if d != seq.dim {
            bail!("--dim {d} does not match the {}-dimensional probe family", seq.dim);
        }
    }
    let mut w = writer(a.output.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &seq.to_file())?;
    writeln!(w)?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    if a.shots == 0 {
        bail!("--shots must be positive to produce counts");
    }
    let povm = read_povm(&a.povm)?;
    let seq = read_probes(&a.probes)?;
    let freqs = simulate_sequence(&povm, &seq.states, a.shots, a.seed)?;
    write_counts_csv(writer(a.output.as_deref())?, &freqs)?;
    Ok(())
}

fn default_l_max(d: usize) -> usize {
    match d {
        4 => 20,
        16 => 200,
        _ => 2 * d * d,
    }
}

fn run(a: RunArgs) -> Result<()> {
    let seq = read_probes(&a.probes)?;
    let truth = a.povm.as_deref().map(read_povm).transpose()?;
    let source = match (&truth, &a.counts) {
        (Some(t), None) => DataSource::Simulated { truth: t.clone(), shots: a.shots, seed: a.seed },
        (None, Some(path)) => DataSource::Recorded(ingest_counts(path)?),
        _ => bail!("give exactly one of --povm and --counts"),
    };
    let mut config = CqdtConfig::new(a.l_max.unwrap_or_else(|| default_l_max(seq.dim)), a.witness_seed.unwrap_or(a.seed));
    config.settings = a.solver.settings()?;
    config.threshold = a.threshold;
    config.witness_sets = a.witness_sets;
    config.stop_on_certification = !a.full;
    let target = match &a.target {
        Some(p) => Some(read_povm(p)?),
        None => truth,
    };
    let compare = Comparisons { target, reference: a.reference.as_deref().map(read_povm).transpose()?, ensemble: None };
    let report = run_cqdt(&source, &seq, &config, &compare)?;
    match report.l_ic {
        Some(l) => eprintln!("certified at L = {l}"),
        None => eprintln!("not certified within {} probes", report.records.len()),
    }
    let mut w = writer(a.output.as_deref())?;
    w.write_all(report.to_json_string()?.as_bytes())?;
    writeln!(w)?;
    Ok(())
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let ensemble = match a.ensemble.as_str() {
        "square-root" => EnsembleKind::SquareRoot,
        "haar" => EnsembleKind::Haar,
        other => bail!("sweeps support square-root or haar ensembles, not '{other}'"),
    };
    let mut config = SweepConfig::new(parse_list(&a.dims)?, parse_list(&a.ranks)?, a.m_rule.parse::<MRule>()?, a.trials, a.seed);
    config.ensemble = ensemble;
    config.probe_kind = match a.probe_kind {
        SweepProbes::Haar => ProbeKind::HaarPure,
        SweepProbes::Product => ProbeKind::product(),
    };
    config.shots = a.shots;
    config.l_max = a.l_max;
    config.threshold = a.threshold;
    config.witness_sets = a.witness_sets;
    config.settings = a.solver.settings()?;
    let (rows, cells) = sweep(&config)?;
    write_sweep_csv(writer(a.output.as_deref())?, &rows)?;
    for c in &cells {
        let stat = match (c.mean, c.std) {
            (Some(m), Some(s)) => format!("{m:.2} ± {s:.2}"),
            _ => "none certified".to_string(),
        };
        eprintln!("d={} r={} M={}: L_IC {stat} ({}/{} certified)", c.d, c.r, c.m, c.successes, c.trials);
    }
    Ok(())
}

fn spectrum_cmd(path: &Path, tau: f64, output: Option<&Path>) -> Result<()> {
    let povm = read_povm(path)?;
    let mut w = csv_writer(output)?;
    w.write_record(["element", "index", "eigenvalue", "rank"])?;
    for (j, (eigs, el)) in spectrum(&povm).iter().zip(povm.elements()).enumerate() {
        let rank = numerical_rank(el, tau);
        for (k, v) in eigs.iter().enumerate() {
            w.write_record([j.to_string(), k.to_string(), format!("{v:e}"), rank.to_string()])?;
        }
    }
    w.flush()?;
    eprintln!("mean rank {:.3}", mean_rank(&povm, tau));
    Ok(())
}

fn csv_writer(output: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    Ok(csv::Writer::from_writer(writer(output)?))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::GenPovm(a) => gen_povm(a),
        Command::Probes(a) => probes(a),
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Fidelity { a, b } => {
            println!("{}", povm_fidelity(&read_povm(&a)?, &read_povm(&b)?)?);
            Ok(())
        }
        Command::Spectrum { povm, tau, output } => spectrum_cmd(&povm, tau, output.as_deref()),
        Command::PrBound { dim, rank } => {
            println!("{}", phase_retrieval_ic(dim, rank)?);
            Ok(())
        }
    }
}
