use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use hitcut::estimator::{EstimatorConfig, EstimatorMode};
use hitcut::exact::{ratio_bound, ExactSolver};
use hitcut::graph::{AugmentedView, BipartiteInstance, ShortcutSet};
use hitcut::sweep::{self, Algorithm, InstanceSource, RunConfig};
use hitcut::verify::{self, Level};
use hitcut::GeneratorSpec;

#[derive(Parser)]
#[command(name = "hitcut", version, about = "Shortcut edges that shrink red-to-blue hitting times")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep budgets over one instance and write CSV results plus a JSON sidecar
    Run(RunArgs),
    /// Run the property checks on one instance
    Verify(VerifyArgs),
    /// Write a synthetic instance as an edge list and a partition file
    Gen(GenArgs),
    /// Exact average and maximum hitting time for an instance and shortcut list
    Eval(EvalArgs),
}

#[derive(Args, Clone)]
struct SourceArgs {
    /// Edge list: `u v` per line, `#` comments
    #[arg(long, requires = "partition", conflicts_with = "generate")]
    edges: Option<PathBuf>,
    /// Partition file: `node R|B` per line
    #[arg(long, requires = "edges")]
    partition: Option<PathBuf>,
    /// Generator spec, e.g. `path:5:2`, `star-path-clique:256`, `planted:100:100:0.1:0.005:7`
    #[arg(long, short = 'g')]
    generate: Option<String>,
}

impl SourceArgs {
    fn source(&self) -> Result<Option<InstanceSource>> {
        Ok(match (&self.edges, &self.partition, &self.generate) {
            (Some(e), Some(p), None) => Some(InstanceSource::Files {
                edges: e.clone(),
                partition: p.clone(),
            }),
            (None, None, Some(spec)) => Some(InstanceSource::Generator { spec: spec.parse()? }),
            (None, None, None) => None,
            _ => bail!("give either --edges with --partition, or --generate"),
        })
    }

    fn load(&self) -> Result<BipartiteInstance> {
        let source = self.source()?.context("no instance given (use --edges/--partition or --generate)")?;
        Ok(source.load()?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Guarantee,
    Experiment,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// JSON run configuration; its fields override the flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated: greedy, greedy_plus, asymm, bmah_route, pure_random, top_hitting
    #[arg(long, short = 'a', value_delimiter = ',')]
    algorithms: Vec<String>,
    /// Budgets as fractions of |R|
    #[arg(long, value_delimiter = ',')]
    fractions: Vec<f64>,
    /// Repetitions for randomized algorithms
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Accuracy parameter of the greedy iteration budget
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Use the bicriteria iteration budget instead of exactly k edges
    #[arg(long)]
    uncapped: bool,
    /// Lazy greedy evaluation
    #[arg(long)]
    lazy: bool,
    #[arg(long, value_enum, default_value = "experiment")]
    estimator_mode: ModeArg,
    /// Estimator relative error
    #[arg(long, default_value_t = 0.1)]
    estimator_epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Spectral radius bound; computed when omitted in guarantee mode
    #[arg(long)]
    lambda: Option<f64>,
    /// Fraction of red nodes used as walk starts (experiment mode)
    #[arg(long, default_value_t = 0.1)]
    subsample: f64,
    /// Write 0 in the wall_ms column so output is reproducible byte for byte
    #[arg(long)]
    no_timing: bool,
    #[arg(long, short = 'o', default_value = "results.csv")]
    output: PathBuf,
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig> {
        let estimator = match self.estimator_mode {
            ModeArg::Guarantee => EstimatorConfig {
                lambda: self.lambda,
                ..EstimatorConfig::guarantee(self.estimator_epsilon, self.delta, 0)
            },
            ModeArg::Experiment => EstimatorConfig {
                mode: EstimatorMode::Experiment,
                epsilon: self.estimator_epsilon,
                delta: self.delta,
                lambda: Some(self.lambda.unwrap_or(0.1)),
                subsample_fraction: self.subsample,
                ..EstimatorConfig::experiment(0)
            },
        };
        let algorithms = self
            .algorithms
            .iter()
            .map(|a| a.parse::<Algorithm>())
            .collect::<Result<Vec<_>, _>>()?;
        let mut config = match self.source.source()? {
            Some(source) => RunConfig::new(source, algorithms),
            None => RunConfig::new(
                InstanceSource::Generator {
                    spec: GeneratorSpec::Path { length: 5, blue: vec![2] },
                },
                algorithms,
            ),
        };
        if !self.fractions.is_empty() {
            config.fractions = self.fractions.clone();
        }
        config.estimator = estimator;
        config.repetitions = self.repetitions;
        config.seed = self.seed;
        config.epsilon = self.epsilon;
        config.cap_at_k = !self.uncapped;
        config.lazy = self.lazy;
        config.record_timing = !self.no_timing;
        config.output = Some(self.output.clone());

        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut base = serde_json::to_value(&config)?;
            let overrides: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            merge(&mut base, overrides);
            config = serde_json::from_value(base).context("invalid run configuration")?;
        } else if self.source.source()?.is_none() {
            bail!("no instance given (use --edges/--partition, --generate or --config)");
        }
        Ok(config)
    }
}

fn merge(base: &mut serde_json::Value, overrides: serde_json::Value) {
    match (base, overrides) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() && k != "instance" => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Fast,
    Full,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_enum, default_value = "fast")]
    level: LevelArg,
    /// Seed for the estimator coverage check
    #[arg(long)]
    seed: u64,
    /// Print the report as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenArgs {
    /// Generator spec, e.g. `path:5:2`, `lollipop:6:4`, `planted:50:50:0.2:0.01:7`
    spec: String,
    /// Output prefix: writes `<prefix>.edges` and `<prefix>.part`
    #[arg(long, short = 'o')]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Shortcut list: `red blue` pairs or bare red endpoints, one per line
    #[arg(long)]
    shortcuts: Option<PathBuf>,
    /// Print JSON instead of text
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(&args),
        Command::Verify(args) => verify_cmd(&args),
        Command::Gen(args) => gen(&args).map(|_| true),
        Command::Eval(args) => eval(&args).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(args: &RunArgs) -> Result<bool> {
    let config = args.to_config()?;
    config.validate()?;
    let instance = config.instance.load()?;
    info!(
        "instance: {} nodes, {} edges, |R| = {}, |B| = {}",
        instance.node_count(),
        instance.edge_count(),
        instance.red().len(),
        instance.blue().len()
    );
    let rows = sweep::run_sweep_on(&instance, &config)?;
    let output = config.output.clone().unwrap_or_else(|| args.output.clone());
    sweep::write_results(&output, &rows, &config, &instance)?;
    let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
    eprintln!(
        "wrote {} rows to {} ({} with errors), config in {}",
        rows.len(),
        output.display(),
        failed,
        sweep::sidecar_path(&output).display()
    );
    Ok(true)
}

fn verify_cmd(args: &VerifyArgs) -> Result<bool> {
    let instance = args.source.load()?;
    let level = match args.level {
        LevelArg::Fast => Level::Fast,
        LevelArg::Full => Level::Full,
    };
    let report = verify::verify(&instance, level, args.seed)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        for check in &report.checks {
            println!("{check}");
        }
    }
    Ok(report.passed())
}

fn gen(args: &GenArgs) -> Result<()> {
    let spec: GeneratorSpec = args.spec.parse()?;
    let instance = spec.generate()?;
    let edges_path = with_suffix(&args.out, "edges");
    let part_path = with_suffix(&args.out, "part");
    let mut e = BufWriter::new(File::create(&edges_path)?);
    writeln!(e, "# {spec}")?;
    instance.write_edge_list(&mut e)?;
    e.flush()?;
    let mut p = BufWriter::new(File::create(&part_path)?);
    writeln!(p, "# {spec}")?;
    instance.write_partition(&mut p)?;
    p.flush()?;
    eprintln!("wrote {} and {}", edges_path.display(), part_path.display());
    Ok(())
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Reads shortcut lines as node names. Two-token lines fix the blue endpoint;
/// one-token lines leave it to the default rule.
fn read_shortcuts(instance: &BipartiteInstance, path: &Path) -> Result<ShortcutSet> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut pairs = Vec::new();
    let mut bare = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let lookup = |name: &str| {
            instance
                .index_of(name)
                .with_context(|| format!("line {}: unknown node `{name}`", i + 1))
        };
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match tokens.as_slice() {
            [r] => bare.push(lookup(r)?),
            [u, v] => {
                let (u, v) = (lookup(u)?, lookup(v)?);
                let pair = if instance.is_red(u) { (u, v) } else { (v, u) };
                pairs.push(pair);
            }
            _ => bail!("line {}: expected `red blue` or `red`", i + 1),
        }
    }
    AugmentedView::with_blue_endpoints(instance, &pairs)?;
    let set = ShortcutSet::from_endpoints(pairs.iter().map(|&(r, _)| r).chain(bare));
    set.validate(instance)?;
    Ok(set)
}

fn eval(args: &EvalArgs) -> Result<()> {
    let instance = args.source.load()?;
    let set = match &args.shortcuts {
        Some(path) => read_shortcuts(&instance, path)?,
        None => ShortcutSet::new(),
    };
    let profile = ExactSolver::default().hitting_to_blue(&instance, &set)?;
    let bound = ratio_bound(instance.red().len());
    if args.json {
        let value = serde_json::json!({
            "g": profile.mean,
            "f": profile.max,
            "shortcuts": set.len(),
            "ratio_bound": bound,
        });
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        println!("g = {}", profile.mean);
        println!("f = {}", profile.max);
        println!("shortcuts = {}", set.len());
        println!("f/g = {:.6} (bound {:.6})", profile.max / profile.mean, bound);
    }
    Ok(())
}
