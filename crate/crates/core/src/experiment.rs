//! Parameter sweeps over graph families and mixing parameters.
//!
//! Every random quantity in a sweep comes from the single master seed:
//! instance `i` owns the stream `derive_seed(seed, i)`, and the trials of
//! its `j`-th mixing parameter, its fixed initial vector and its random
//! geometric resamples each take a distinct sub-stream of that.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{self, BiasEstimate, BoundReport};
use crate::engine::{self, derive_seed, InitialCondition, SimConfig, TrialResult};
use crate::graph::{self, Graph};
use crate::spectral::{self, SpectralSummary};
use crate::{Error, Result};

const X0_STREAM: u64 = 1 << 32;
const RGG_STREAM: u64 = 1 << 33;

/// Attempts at drawing a connected random geometric graph before giving up.
pub const MAX_RGG_ATTEMPTS: usize = 1000;

pub const CSV_HEADER: [&str; 8] = [
    "N",
    "q",
    "family",
    "mean_beta",
    "std_error",
    "prop3_shape",
    "lambda1",
    "deg_max",
];

pub const TRIALS_HEADER: [&str; 4] = ["beta", "stop_time", "hit_cap", "max_step_increment"];

/// A generator family with its fixed parameters; the swept size is separate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// size = N
    Complete,
    /// size = N
    Ring,
    /// size = nodes per axis
    Torus { k: usize },
    /// size = dimension
    Hypercube,
    /// size = word length
    DeBruijn { symbols: usize },
    /// size = N
    RandomGeometric,
}

impl FamilyKind {
    pub fn label(&self) -> String {
        match self {
            FamilyKind::Complete => "complete".into(),
            FamilyKind::Ring => "ring".into(),
            FamilyKind::Torus { k } => format!("torus{k}d"),
            FamilyKind::Hypercube => "hypercube".into(),
            FamilyKind::DeBruijn { symbols } => format!("debruijn{symbols}"),
            FamilyKind::RandomGeometric => "rgg".into(),
        }
    }

    /// Builds the instance for `size`; `seed` is only used by random families.
    pub fn build(&self, size: usize, seed: u64) -> Result<Graph> {
        match *self {
            FamilyKind::Complete => graph::complete(size),
            FamilyKind::Ring => graph::ring(size),
            FamilyKind::Torus { k } => graph::torus_lattice(k, size),
            FamilyKind::Hypercube => graph::hypercube(size),
            FamilyKind::DeBruijn { symbols } => graph::de_bruijn(symbols, size),
            FamilyKind::RandomGeometric => graph::random_geometric_seeded(size, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub family: FamilyKind,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub sweeps: Vec<Sweep>,
    /// Graphs loaded from documents, run after the family sweeps.
    pub graphs: Vec<Graph>,
    pub q_list: Vec<f64>,
    pub epsilon: f64,
    pub trials: usize,
    pub seed: u64,
    pub range: f64,
    /// `None` selects [`engine::default_max_steps`] per instance.
    pub max_steps: Option<u64>,
    /// Fresh `x(0)` per trial, or one draw per instance shared by all trials.
    pub resample_x0: bool,
    pub keep_trials: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            sweeps: Vec::new(),
            graphs: Vec::new(),
            q_list: vec![0.5],
            epsilon: 1e-4,
            trials: 1000,
            seed: 0,
            range: 1.0,
            max_steps: None,
            resample_x0: true,
            keep_trials: false,
        }
    }
}

fn pow2_range(lo: usize, hi: usize) -> Vec<usize> {
    (0..usize::BITS).map(|e| 1usize << e).filter(|&n| n >= lo && n <= hi).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Bias against N at q = 0.5 on every family.
    Fig1,
    /// Binary de Bruijn graphs against N for several q, including q = 1.
    Fig2,
    /// Bias against q at N = 64.
    Fig3,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Preset::Fig1),
            "fig2" => Ok(Preset::Fig2),
            "fig3" => Ok(Preset::Fig3),
            other => Err(Error::param(format!("unknown preset {other:?}"))),
        }
    }
}

impl ExperimentSpec {
    pub fn preset(preset: Preset) -> Self {
        let base = ExperimentSpec::default();
        match preset {
            Preset::Fig1 => ExperimentSpec {
                sweeps: vec![
                    Sweep { family: FamilyKind::Ring, sizes: pow2_range(16, 256) },
                    Sweep { family: FamilyKind::Torus { k: 2 }, sizes: vec![4, 8, 16, 32] },
                    Sweep { family: FamilyKind::Hypercube, sizes: (4..=10).collect() },
                    Sweep { family: FamilyKind::DeBruijn { symbols: 2 }, sizes: (4..=10).collect() },
                    Sweep { family: FamilyKind::RandomGeometric, sizes: pow2_range(16, 1024) },
                    Sweep { family: FamilyKind::Complete, sizes: pow2_range(16, 1024) },
                ],
                q_list: vec![0.5],
                ..base
            },
            Preset::Fig2 => ExperimentSpec {
                sweeps: vec![Sweep {
                    family: FamilyKind::DeBruijn { symbols: 2 },
                    sizes: (4..=10).collect(),
                }],
                q_list: vec![0.2, 0.5, 0.8, 1.0],
                ..base
            },
            Preset::Fig3 => ExperimentSpec {
                sweeps: vec![
                    Sweep { family: FamilyKind::Complete, sizes: vec![64] },
                    Sweep { family: FamilyKind::Ring, sizes: vec![64] },
                    Sweep { family: FamilyKind::Torus { k: 2 }, sizes: vec![8] },
                    Sweep { family: FamilyKind::Hypercube, sizes: vec![6] },
                    Sweep { family: FamilyKind::DeBruijn { symbols: 2 }, sizes: vec![6] },
                    Sweep { family: FamilyKind::RandomGeometric, sizes: vec![64] },
                ],
                q_list: (1..=9).map(|i| i as f64 / 10.0).collect(),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let instances: usize = self.sweeps.iter().map(|s| s.sizes.len()).sum::<usize>() + self.graphs.len();
        if instances == 0 || self.q_list.is_empty() {
            return Err(Error::param("experiment needs at least one graph and one q"));
        }
        for &q in &self.q_list {
            SimConfig::new(q)
                .with_epsilon(self.epsilon)
                .with_trials(self.trials)
                .with_range(self.range)
                .with_max_steps(self.max_steps.unwrap_or(1))
                .validate()?;
        }
        Ok(())
    }
}

/// One (instance, q) result.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub family: String,
    pub n: usize,
    pub q: f64,
    /// Disconnected random geometric draws skipped before this instance.
    pub discarded_instances: usize,
    pub estimate: BiasEstimate<f64>,
    pub bounds: BoundReport<f64>,
    /// The shared initial vector when `x(0)` is not resampled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Arc<[f64]>>,
    #[serde(skip)]
    pub trials: Vec<TrialResult<f64>>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub discarded_instances: usize,
}

impl SweepOutcome {
    pub fn any_unreliable(&self) -> bool {
        self.rows.iter().any(|r| r.estimate.unreliable)
    }
}

struct Instance {
    label: String,
    graph: Graph,
    discarded: usize,
}

fn build_instance(kind: FamilyKind, size: usize, instance_seed: u64) -> Result<Instance> {
    let label = kind.label();
    if kind != FamilyKind::RandomGeometric {
        return Ok(Instance { label, graph: kind.build(size, 0)?, discarded: 0 });
    }
    for attempt in 0..MAX_RGG_ATTEMPTS {
        let g = kind.build(size, derive_seed(instance_seed, RGG_STREAM + attempt as u64))?;
        if g.is_connected() {
            return Ok(Instance { label, graph: g, discarded: attempt });
        }
    }
    Err(Error::Disconnected(format!(
        "no connected random geometric graph on {size} nodes in {MAX_RGG_ATTEMPTS} draws"
    )))
}

/// Runs the whole sweep; rows come out in request order (sweeps, sizes, then q).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let mut outcome = SweepOutcome::default();
    let mut index = 0u64;
    let run = |inst: Instance, index: u64, outcome: &mut SweepOutcome| -> Result<()> {
        let instance_seed = derive_seed(spec.seed, index);
        outcome.discarded_instances += inst.discarded;
        let rows = run_instance(spec, &inst, instance_seed)?;
        outcome.rows.extend(rows);
        Ok(())
    };
    for sweep in &spec.sweeps {
        for &size in &sweep.sizes {
            let inst = build_instance(sweep.family, size, derive_seed(spec.seed, index))?;
            run(inst, index, &mut outcome)?;
            index += 1;
        }
    }
    for g in &spec.graphs {
        let inst = Instance { label: g.family().name().to_string(), graph: g.clone(), discarded: 0 };
        run(inst, index, &mut outcome)?;
        index += 1;
    }
    Ok(outcome)
}

fn run_instance(spec: &ExperimentSpec, inst: &Instance, instance_seed: u64) -> Result<Vec<SweepRow>> {
    let g = &inst.graph;
    if !g.is_connected() {
        return Err(Error::Disconnected(format!("{} instance on {} nodes is disconnected", inst.label, g.n())));
    }
    let summary: Option<SpectralSummary<f64>> = if g.is_symmetric() {
        Some(spectral::spectral_gap(g, spectral::ZERO_TOL)?)
    } else {
        None
    };
    let (initial, x0_variance) = if spec.resample_x0 {
        (InitialCondition::Uniform, spec.range * spec.range / 12.0)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(instance_seed, X0_STREAM));
        let x0 = engine::uniform_values(&mut rng, g.n(), spec.range);
        let var = analysis::sample_variance(&x0);
        (InitialCondition::Fixed(Arc::from(x0)), var)
    };
    let mut rows = Vec::with_capacity(spec.q_list.len());
    for (j, &q) in spec.q_list.iter().enumerate() {
        let max_steps = spec
            .max_steps
            .unwrap_or_else(|| engine::default_max_steps(g.n(), q, summary.map(|s| s.lambda1)));
        let cfg = SimConfig::new(q)
            .with_epsilon(spec.epsilon)
            .with_trials(spec.trials)
            .with_range(spec.range)
            .with_max_steps(max_steps)
            .with_seed(derive_seed(instance_seed, j as u64))
            .with_initial(initial.clone());
        let trials = analysis::run_trials(g, &cfg)?;
        let estimate = BiasEstimate::from_trials(&trials, &cfg)?;
        let bounds = BoundReport::with_spectral(g, summary, q, spec.range, x0_variance)?;
        rows.push(SweepRow {
            family: inst.label.clone(),
            n: g.n(),
            q,
            discarded_instances: inst.discarded,
            estimate,
            bounds,
            x0: match &initial {
                InitialCondition::Fixed(v) => Some(v.clone()),
                InitialCondition::Uniform => None,
            },
            trials: if spec.keep_trials { trials } else { Vec::new() },
        });
    }
    Ok(rows)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `N,q,family,mean_beta,std_error,prop3_shape,lambda1,deg_max`.
/// Columns that do not apply (non-symmetric graphs, `q = 1`) are left empty.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.q.to_string(),
            r.family.clone(),
            r.estimate.mean_beta.to_string(),
            r.estimate.std_error.to_string(),
            opt(r.bounds.prop3_shape),
            opt(r.bounds.spectral.map(|s| s.lambda1)),
            r.bounds.deg_max.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(outcome: &SweepOutcome, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, outcome)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Per-trial dump, one row per trial in index order.
pub fn write_trials_csv<W: Write>(trials: &[TrialResult<f64>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIALS_HEADER)?;
    for t in trials {
        w.write_record([
            t.beta.to_string(),
            t.stop_time.to_string(),
            t.hit_cap.to_string(),
            t.max_step_increment.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// File name used for a row's trial dump.
pub fn trials_file_name(row: &SweepRow) -> String {
    format!("{}_N{}_q{}.csv", row.family, row.n, row.q)
}

/// A parsed row of a sweep CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub n: usize,
    pub q: f64,
    pub family: String,
    pub mean_beta: f64,
    pub std_error: f64,
    pub prop3_shape: Option<f64>,
    pub lambda1: Option<f64>,
    pub deg_max: usize,
}

fn finite(field: &str, name: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::param(format!("row {line}: {name} is not a number: {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::param(format!("row {line}: {name} is not finite")));
    }
    Ok(v)
}

fn optional(field: &str, name: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        finite(field, name, line).map(Some)
    }
}

/// Parses and validates a sweep CSV: exact header, eight columns, finite
/// numbers, `0 <= beta`, `std_error >= 0`.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::param(format!("unexpected header {:?}", header)));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::param(format!("row {line}: expected 8 columns")));
        }
        let parse_usize = |f: &str, name: &str| {
            f.parse::<usize>()
                .map_err(|_| Error::param(format!("row {line}: bad {name} {f:?}")))
        };
        let row = CsvRow {
            n: parse_usize(&rec[0], "N")?,
            q: finite(&rec[1], "q", line)?,
            family: rec[2].to_string(),
            mean_beta: finite(&rec[3], "mean_beta", line)?,
            std_error: finite(&rec[4], "std_error", line)?,
            prop3_shape: optional(&rec[5], "prop3_shape", line)?,
            lambda1: optional(&rec[6], "lambda1", line)?,
            deg_max: parse_usize(&rec[7], "deg_max")?,
        };
        if row.mean_beta < 0.0 || row.std_error < 0.0 {
            return Err(Error::param(format!("row {line}: negative beta or std_error")));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRow {
    pub family: String,
    pub q: f64,
    pub points: usize,
    pub exponent: f64,
}

/// Log-log exponent of mean bias against N for each (family, q) group, in
/// order of first appearance. Groups that cannot be fitted are skipped.
pub fn fit_groups(rows: &[CsvRow]) -> Vec<FitRow> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(f, q)| *f == r.family && *q == r.q) {
            keys.push((r.family.clone(), r.q));
        }
    }
    keys.into_iter()
        .filter_map(|(family, q)| {
            let series: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.family == family && r.q == q)
                .map(|r| (r.n as f64, r.mean_beta))
                .collect();
            let exponent = analysis::fit_scaling(&series).ok()?;
            Some(FitRow { family, q, points: series.len(), exponent })
        })
        .collect()
}
