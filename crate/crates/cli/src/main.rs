//! `bga`: generate graphs, compute spectral bounds, run bias sweeps, fit scaling exponents.
//!
//! Exit codes: 0 ok, 1 I/O failure, 2 invalid input, 3 unreliable estimates,
//! 4 disconnected graph.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bga_core::experiment::{self, ExperimentSpec, FamilyKind, Preset, Sweep};
use bga_core::graph::{self, Graph};
use bga_core::spectral::{self, SpectralSummary};
use bga_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_UNRELIABLE: u8 = 3;
const EXIT_DISCONNECTED: u8 = 4;

#[derive(Parser)]
#[command(name = "bga", version, about = "Broadcast gossip averaging: bias simulator and bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a graph and write it as a JSON document.
    Generate {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral gap and rate bound of a symmetric graph.
    Spectral {
        #[command(flatten)]
        graph: GraphArgs,
        /// Load the graph from a JSON document instead of a family.
        #[arg(long, conflicts_with = "family")]
        graph_file: Option<PathBuf>,
        #[arg(long = "q")]
        q: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo bias estimates over a sweep of sizes and mixing parameters.
    Simulate(SimulateArgs),
    /// Log-log exponent of mean bias against N, per (family, q), from a sweep CSV.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyName {
    Complete,
    Ring,
    Torus,
    Hypercube,
    Debruijn,
    Rgg,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long, value_enum)]
    family: Option<FamilyName>,
    /// Node count (complete, ring, rgg).
    #[arg(long)]
    n: Option<usize>,
    /// Hypercube dimension, torus dimension k, or de Bruijn word length.
    #[arg(long)]
    dim: Option<usize>,
    /// Torus nodes per axis.
    #[arg(long)]
    side: Option<usize>,
    /// De Bruijn alphabet size.
    #[arg(long)]
    symbols: Option<usize>,
    /// Seed for random geometric graphs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct SimulateArgs {
    /// Pinned sweep grid; explicit flags below override its settings.
    #[arg(long, value_parser = ["fig1", "fig2", "fig3"])]
    preset: Option<String>,
    #[arg(long, value_enum)]
    family: Option<FamilyName>,
    /// Sizes for complete, ring and rgg (repeatable).
    #[arg(long)]
    n: Vec<usize>,
    /// Hypercube / de Bruijn sizes (repeatable); the torus dimension k (single).
    #[arg(long)]
    dim: Vec<usize>,
    /// Torus sizes (repeatable).
    #[arg(long)]
    side: Vec<usize>,
    #[arg(long)]
    symbols: Option<usize>,
    /// Graph documents to simulate on (repeatable).
    #[arg(long)]
    graph_file: Vec<PathBuf>,
    #[arg(long = "q")]
    q: Vec<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Upper end L of the initial value range.
    #[arg(long)]
    range: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, action = clap::ArgAction::Set)]
    resample_x0: Option<bool>,
    /// Directory receiving one per-trial CSV per (instance, q).
    #[arg(long)]
    dump_trials: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Disconnected(_) => EXIT_DISCONNECTED,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_INVALID,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: EXIT_IO, message: e.to_string() }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_INVALID, message: message.into() }
}

fn required(value: Option<usize>, flag: &str, family: &str) -> Result<usize, Failure> {
    value.ok_or_else(|| invalid(format!("{family} requires --{flag}")))
}

fn build_graph(args: &GraphArgs) -> Result<Graph, Failure> {
    let family = args.family.ok_or_else(|| invalid("--family is required"))?;
    let g = match family {
        FamilyName::Complete => graph::complete(required(args.n, "n", "complete")?)?,
        FamilyName::Ring => graph::ring(required(args.n, "n", "ring")?)?,
        FamilyName::Torus => graph::torus_lattice(
            required(args.dim, "dim", "torus")?,
            required(args.side, "side", "torus")?,
        )?,
        FamilyName::Hypercube => graph::hypercube(required(args.dim, "dim", "hypercube")?)?,
        FamilyName::Debruijn => graph::de_bruijn(
            required(args.symbols, "symbols", "debruijn")?,
            required(args.dim, "dim", "debruijn")?,
        )?,
        FamilyName::Rgg => graph::random_geometric_seeded(required(args.n, "n", "rgg")?, args.seed)?,
    };
    Ok(g)
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json(value: &serde_json::Value) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_generate(args: &GraphArgs, out: Option<&Path>) -> Result<u8, Failure> {
    let g = build_graph(args)?;
    let mut w = open_out(out)?;
    w.write_all(g.to_json()?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    drop(w);
    let connected = g.is_connected();
    if out.is_some() {
        print_json(&json!({
            "family": g.family(),
            "n": g.n(),
            "edges": g.edge_count(),
            "degrees": g.degree_stats(),
            "balanced": g.is_balanced(),
            "symmetric": g.is_symmetric(),
            "connected": connected,
        }))?;
    }
    if !connected {
        eprintln!("graph is disconnected");
        return Ok(EXIT_DISCONNECTED);
    }
    Ok(0)
}

fn cmd_spectral(args: &GraphArgs, file: Option<&Path>, qs: &[f64], out: Option<&Path>) -> Result<u8, Failure> {
    let g = match file {
        Some(p) => Graph::from_json(&fs::read_to_string(p)?)?,
        None => build_graph(args)?,
    };
    if !g.is_symmetric() {
        return Err(Failure {
            code: EXIT_INVALID,
            message: "unsupported: graph is not symmetric, spectral gap is undefined here".into(),
        });
    }
    let summary: SpectralSummary<f64> = spectral::spectral_gap(&g, spectral::ZERO_TOL)?;
    let rates = qs
        .iter()
        .map(|&q| {
            let r = if summary.is_connected() {
                Some(spectral::rate_bound_from(summary.lambda1, g.n(), q)?)
            } else {
                None
            };
            Ok(json!({ "q": q, "rate_bound": r }))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let doc = json!({
        "family": g.family(),
        "n": g.n(),
        "deg_max": g.deg_max(),
        "spectral": summary,
        "rate_bounds": rates,
    });
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, &doc).map_err(Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(if summary.is_connected() { 0 } else { EXIT_DISCONNECTED })
}

fn sweep_from_flags(a: &SimulateArgs) -> Result<Option<Sweep>, Failure> {
    let Some(family) = a.family else {
        return Ok(None);
    };
    let single_dim = || match a.dim.as_slice() {
        [k] => Ok(*k),
        _ => Err(invalid("torus takes exactly one --dim (the lattice dimension)")),
    };
    let (kind, sizes) = match family {
        FamilyName::Complete => (FamilyKind::Complete, a.n.clone()),
        FamilyName::Ring => (FamilyKind::Ring, a.n.clone()),
        FamilyName::Rgg => (FamilyKind::RandomGeometric, a.n.clone()),
        FamilyName::Torus => (FamilyKind::Torus { k: single_dim()? }, a.side.clone()),
        FamilyName::Hypercube => (FamilyKind::Hypercube, a.dim.clone()),
        FamilyName::Debruijn => (
            FamilyKind::DeBruijn { symbols: a.symbols.ok_or_else(|| invalid("debruijn requires --symbols"))? },
            a.dim.clone(),
        ),
    };
    if sizes.is_empty() {
        return Err(invalid("no sizes given for the family sweep"));
    }
    Ok(Some(Sweep { family: kind, sizes }))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<u8, Failure> {
    let mut spec = match &a.preset {
        Some(name) => ExperimentSpec::preset(name.parse::<Preset>()?),
        None => ExperimentSpec::default(),
    };
    if let Some(sweep) = sweep_from_flags(a)? {
        spec.sweeps = vec![sweep];
    }
    for path in &a.graph_file {
        spec.graphs.push(Graph::from_json(&fs::read_to_string(path)?)?);
    }
    if !a.q.is_empty() {
        spec.q_list = a.q.clone();
    }
    spec.trials = a.trials.unwrap_or(spec.trials);
    spec.epsilon = a.epsilon.unwrap_or(spec.epsilon);
    spec.seed = a.seed.unwrap_or(spec.seed);
    spec.range = a.range.unwrap_or(spec.range);
    spec.resample_x0 = a.resample_x0.unwrap_or(spec.resample_x0);
    spec.max_steps = a.max_steps.or(spec.max_steps);
    spec.keep_trials = a.dump_trials.is_some();

    let outcome = experiment::run_experiment(&spec)?;

    let mut w = open_out(a.out.as_deref())?;
    match a.format {
        Format::Csv => experiment::write_csv(&outcome.rows, &mut w)?,
        Format::Json => experiment::write_json(&outcome, &mut w)?,
    }
    w.flush()?;
    drop(w);

    if let Some(dir) = &a.dump_trials {
        fs::create_dir_all(dir)?;
        for row in &outcome.rows {
            let file = File::create(dir.join(experiment::trials_file_name(row)))?;
            experiment::write_trials_csv(&row.trials, BufWriter::new(file))?;
        }
    }
    if outcome.discarded_instances > 0 {
        eprintln!("discarded {} disconnected random geometric draws", outcome.discarded_instances);
    }
    let unreliable: Vec<String> = outcome
        .rows
        .iter()
        .filter(|r| r.estimate.unreliable)
        .map(|r| format!("{}(N={}, q={}): {} trials hit the step cap", r.family, r.n, r.q, r.estimate.hit_cap_count))
        .collect();
    if unreliable.is_empty() {
        Ok(0)
    } else {
        for line in &unreliable {
            eprintln!("unreliable estimate {line}");
        }
        Ok(EXIT_UNRELIABLE)
    }
}

fn cmd_fit(input: &Path, out: Option<&Path>) -> Result<u8, Failure> {
    let rows = experiment::read_csv(File::open(input)?)?;
    let fits = experiment::fit_groups(&rows);
    if fits.is_empty() {
        return Err(invalid("no (family, q) group has 4 or more distinct sizes with positive bias"));
    }
    let mut w = open_out(out)?;
    writeln!(w, "family,q,points,exponent")?;
    for f in &fits {
        writeln!(w, "{},{},{},{}", f.family, f.q, f.points, f.exponent)?;
    }
    w.flush()?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { graph, out } => cmd_generate(graph, out.as_deref()),
        Command::Spectral { graph, graph_file, q, out } => cmd_spectral(graph, graph_file.as_deref(), q, out.as_deref()),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit { input, out } => cmd_fit(input, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
