//! Budget sweeps: run each algorithm over a list of budgets, evaluate every
//! resulting shortcut set exactly, and write CSV rows plus a JSON sidecar.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::exact::{hitting_to_blue, ratio_bound};
use crate::generators::GeneratorSpec;
use crate::graph::{augmented_view, load_instance, BipartiteInstance, ShortcutSet};
use crate::kcenter::{asymm, bmmh_via_bmah, AverageRoute};
use crate::optimizers::{greedy_exact_with, greedy_plus_with, pure_random, top_hitting_baseline, GreedyOptions};
use crate::exact::ExactSolver;
use crate::par;
use crate::rng::derive_seed;

pub const CSV_HEADER: &str = "algorithm,k,fraction,rep,seed,g_exact,f_exact,edges,eval_count,wall_ms,error";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Greedy,
    GreedyPlus,
    Asymm,
    BmahRoute,
    PureRandom,
    TopHitting,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Greedy,
        Algorithm::GreedyPlus,
        Algorithm::Asymm,
        Algorithm::BmahRoute,
        Algorithm::PureRandom,
        Algorithm::TopHitting,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Greedy => "greedy",
            Algorithm::GreedyPlus => "greedy_plus",
            Algorithm::Asymm => "asymm",
            Algorithm::BmahRoute => "bmah_route",
            Algorithm::PureRandom => "pure_random",
            Algorithm::TopHitting => "top_hitting",
        }
    }

    pub fn is_randomized(self) -> bool {
        matches!(self, Algorithm::GreedyPlus | Algorithm::PureRandom)
    }

    /// Builds its set one edge at a time, so a single run yields every prefix.
    pub fn is_sequential(self) -> bool {
        matches!(self, Algorithm::Greedy | Algorithm::GreedyPlus)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s || a.name().replace('_', "-") == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    Files { edges: PathBuf, partition: PathBuf },
    Generator { spec: GeneratorSpec },
}

impl InstanceSource {
    pub fn load(&self) -> Result<BipartiteInstance> {
        match self {
            InstanceSource::Files { edges, partition } => load_instance(
                BufReader::new(File::open(edges)?),
                BufReader::new(File::open(partition)?),
            ),
            InstanceSource::Generator { spec } => spec.generate(),
        }
    }
}

pub fn default_fractions() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.05).collect()
}

fn default_repetitions() -> usize {
    10
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub instance: InstanceSource,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    /// Estimator settings for `greedy_plus`; the seed is replaced per run.
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorConfig,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub seed: Option<u64>,
    /// Accuracy parameter of the greedy budget `⌈k ln(n³/ε)⌉`.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Spend exactly `k` edges instead of the bicriteria budget.
    #[serde(default = "default_true")]
    pub cap_at_k: bool,
    #[serde(default)]
    pub lazy: bool,
    /// When false, `wall_ms` is written as 0 so output is byte-reproducible.
    #[serde(default = "default_true")]
    pub record_timing: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_estimator() -> EstimatorConfig {
    EstimatorConfig::experiment(0)
}

impl RunConfig {
    pub fn new(instance: InstanceSource, algorithms: Vec<Algorithm>) -> Self {
        Self {
            instance,
            algorithms,
            fractions: default_fractions(),
            estimator: default_estimator(),
            repetitions: default_repetitions(),
            seed: None,
            epsilon: default_epsilon(),
            cap_at_k: true,
            lazy: false,
            record_timing: true,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::InvalidParameter("no algorithms selected".into()));
        }
        if self.fractions.is_empty() {
            return Err(Error::InvalidParameter("no budget fractions given".into()));
        }
        if let Some(f) = self.fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::InvalidParameter(format!("budget fraction {f} not in (0,1]")));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be positive".into()));
        }
        if self.seed.is_none() && self.algorithms.iter().any(|a| a.is_randomized()) {
            return Err(Error::InvalidParameter("randomized algorithms need a seed".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon {} must be positive", self.epsilon)));
        }
        Ok(())
    }
}

/// `⌈fraction · |R|⌉`, at least 1, ignoring float noise just above an integer.
pub fn budget_for(fraction: f64, red_count: usize) -> usize {
    let x = fraction * red_count as f64;
    let k = if (x - x.round()).abs() <= 1e-9 * x.max(1.0) {
        x.round()
    } else {
        x.ceil()
    };
    (k as usize).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub k: usize,
    pub fraction: f64,
    pub rep: usize,
    pub seed: Option<u64>,
    pub g_exact: Option<f64>,
    pub f_exact: Option<f64>,
    /// Shortcut edges as `red-blue` node names separated by `;`.
    pub edges: String,
    pub eval_count: usize,
    pub wall_ms: f64,
    pub error: String,
}

struct Cell {
    algorithm: Algorithm,
    rep: usize,
    seed: Option<u64>,
    /// Budgets to report, as `(k, fraction)`.
    budgets: Vec<(usize, f64)>,
}

fn algorithm_label(a: Algorithm) -> u64 {
    Algorithm::ALL.iter().position(|&x| x == a).expect("listed") as u64
}

fn make_cells(config: &RunConfig, red_count: usize) -> Vec<Cell> {
    let budgets: Vec<(usize, f64)> = config
        .fractions
        .iter()
        .map(|&f| (budget_for(f, red_count), f))
        .collect();
    let mut cells = Vec::new();
    for &algorithm in &config.algorithms {
        let reps = if algorithm.is_randomized() { config.repetitions } else { 1 };
        for rep in 0..reps {
            let seed = config
                .seed
                .map(|s| derive_seed(s, &[algorithm_label(algorithm), rep as u64]))
                .filter(|_| algorithm.is_randomized());
            if algorithm.is_sequential() && config.cap_at_k {
                let k_max = budgets.iter().map(|&(k, _)| k).max().unwrap_or(1);
                let prefixes = (1..=k_max).map(|k| (k, k as f64 / red_count as f64)).collect();
                cells.push(Cell { algorithm, rep, seed, budgets: prefixes });
            } else {
                for &b in &budgets {
                    cells.push(Cell { algorithm, rep, seed, budgets: vec![b] });
                }
            }
        }
    }
    cells
}

/// Names of the shortcut edges under the deterministic blue-endpoint rule.
pub fn edge_names(instance: &BipartiteInstance, set: &ShortcutSet) -> Result<String> {
    let view = augmented_view(instance, set)?;
    Ok(view
        .shortcut_edges()
        .iter()
        .map(|&(r, b)| format!("{}-{}", instance.name(r), instance.name(b)))
        .collect::<Vec<_>>()
        .join(";"))
}

fn exact_row(
    instance: &BipartiteInstance,
    cell: &Cell,
    (k, fraction): (usize, f64),
    set: &ShortcutSet,
    eval_count: usize,
    wall_ms: f64,
) -> ResultRow {
    let mut row = ResultRow {
        algorithm: cell.algorithm,
        k,
        fraction,
        rep: cell.rep,
        seed: cell.seed,
        g_exact: None,
        f_exact: None,
        edges: String::new(),
        eval_count,
        wall_ms,
        error: String::new(),
    };
    let outcome = hitting_to_blue(instance, set).and_then(|p| Ok((p, edge_names(instance, set)?)));
    match outcome {
        Ok((profile, edges)) => {
            debug_assert!(profile.max <= ratio_bound(instance.red().len()) * profile.mean * (1.0 + 1e-9));
            row.g_exact = Some(profile.mean);
            row.f_exact = Some(profile.max);
            row.edges = edges;
        }
        Err(e) => row.error = e.to_string(),
    }
    row
}

fn error_rows(cell: &Cell, message: &str) -> Vec<ResultRow> {
    cell.budgets
        .iter()
        .map(|&(k, fraction)| ResultRow {
            algorithm: cell.algorithm,
            k,
            fraction,
            rep: cell.rep,
            seed: cell.seed,
            g_exact: None,
            f_exact: None,
            edges: String::new(),
            eval_count: 0,
            wall_ms: 0.0,
            error: message.to_string(),
        })
        .collect()
}

fn run_cell(instance: &BipartiteInstance, config: &RunConfig, cell: &Cell) -> Result<Vec<ResultRow>> {
    let start = Instant::now();
    let solver = ExactSolver::default();
    let estimator = config.estimator.with_seed(cell.seed.unwrap_or(config.estimator.seed));

    if cell.algorithm.is_sequential() {
        let k_max = cell.budgets.iter().map(|&(k, _)| k).max().expect("non-empty");
        let options = GreedyOptions::new(k_max, config.epsilon, config.cap_at_k).lazy(config.lazy);
        let (set, trace) = match cell.algorithm {
            Algorithm::Greedy => greedy_exact_with(instance, &options, &solver)?,
            _ => greedy_plus_with(instance, &options, &estimator)?,
        };
        if !config.cap_at_k {
            let step = trace.steps.last();
            let ms = step.map_or(0.0, |s| s.elapsed_ms);
            return Ok(vec![exact_row(instance, cell, cell.budgets[0], &set, trace.evaluations, ms)]);
        }
        // Greedy may stop early once no candidate remains or nothing improves;
        // later budgets then report the final set.
        return Ok(cell
            .budgets
            .iter()
            .map(|&(k, fraction)| {
                let used = k.min(trace.steps.len());
                let prefix = ShortcutSet::from_endpoints(set.endpoints()[..used].iter().copied());
                let (evals, ms) = match used {
                    0 => (trace.evaluations, 0.0),
                    _ => {
                        let s = &trace.steps[used - 1];
                        (s.evaluations, s.elapsed_ms)
                    }
                };
                exact_row(instance, cell, (k, fraction), &prefix, evals, ms)
            })
            .collect());
    }

    let (k, fraction) = cell.budgets[0];
    let (set, evals) = match cell.algorithm {
        Algorithm::Asymm => (asymm(instance, k)?, instance.red().len() + 1),
        Algorithm::BmahRoute => (
            bmmh_via_bmah(instance, k, config.epsilon, AverageRoute::Exact, &estimator)?,
            0,
        ),
        Algorithm::PureRandom => (pure_random(instance, k, cell.seed.expect("validated")), 0),
        Algorithm::TopHitting => (top_hitting_baseline(instance, k)?, 1),
        Algorithm::Greedy | Algorithm::GreedyPlus => unreachable!("handled above"),
    };
    let ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(vec![exact_row(instance, cell, (k, fraction), &set, evals, ms)])
}

/// Runs every (algorithm, budget, repetition) cell. Failures become rows with
/// the `error` column set; rows come back in canonical order.
pub fn run_sweep(config: &RunConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let instance = config.instance.load()?;
    run_sweep_on(&instance, config)
}

pub fn run_sweep_on(instance: &BipartiteInstance, config: &RunConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let cells = make_cells(config, instance.red().len());
    let per_cell = par::map(&cells, |cell| {
        run_cell(instance, config, cell).unwrap_or_else(|e| error_rows(cell, &e.to_string()))
    });
    let mut rows: Vec<ResultRow> = per_cell.into_iter().flatten().collect();
    if !config.record_timing {
        rows.iter_mut().for_each(|r| r.wall_ms = 0.0);
    }
    rows.sort_by(|a, b| {
        (a.algorithm, a.rep, a.k)
            .cmp(&(b.algorithm, b.rep, b.k))
            .then(a.fraction.total_cmp(&b.fraction))
    });
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        let opt = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_default();
        w.write_record([
            r.algorithm.name().to_string(),
            r.k.to_string(),
            format!("{}", r.fraction),
            r.rep.to_string(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            opt(r.g_exact),
            opt(r.f_exact),
            r.edges.clone(),
            r.eval_count.to_string(),
            format!("{:.3}", r.wall_ms),
            r.error.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Sidecar<'a> {
    tool: &'static str,
    version: &'static str,
    parallel: bool,
    config: &'a RunConfig,
    instance: InstanceSummary,
    rows: usize,
}

#[derive(Serialize)]
struct InstanceSummary {
    nodes: usize,
    edges: usize,
    red: usize,
    blue: usize,
}

/// Sidecar path: the results path with its extension replaced by `json`.
pub fn sidecar_path(results: &Path) -> PathBuf {
    results.with_extension("json")
}

/// Writes the CSV to `path` and the JSON provenance record next to it.
pub fn write_results(path: &Path, rows: &[ResultRow], config: &RunConfig, instance: &BipartiteInstance) -> Result<()> {
    write_csv(rows, File::create(path)?)?;
    let sidecar = Sidecar {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        parallel: par::is_parallel(),
        config,
        instance: InstanceSummary {
            nodes: instance.node_count(),
            edges: instance.edge_count(),
            red: instance.red().len(),
            blue: instance.blue().len(),
        },
        rows: rows.len(),
    };
    let mut f = File::create(sidecar_path(path))?;
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    writeln!(f)?;
    Ok(())
}
