//! `causal-design` command line.
//!
//! Every subcommand writes into an output directory chosen by `--out`, then
//! the `CAUSAL_DESIGN_OUT` environment variable, then `out_dir` in the config
//! file (or in the benchmark file, for `bench`), then `./out`. Settings come
//! from an optional TOML config file (`--config`) with `[gen]`, `[train]` and
//! `[eval]` sections; flags override the file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use causal_design::graph::Dag;
use causal_design::graphgen::{generate_many, GenSpec};
use causal_design::harness::{
    export_plots_data, load_edge_list, run_bench, write_report, write_runs_csv, write_train_log_csv, BenchSpec,
    StrategySpec,
};
use causal_design::rl::{derive_seed, evaluate_graph, train_with, RunRecord, RunStatus, TrainConfig};
use causal_design::strategies::Selector;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "causal-design", version, about = "Active causal experiment design")]
struct Cli {
    /// TOML config with optional [gen], [train] and [eval] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "CAUSAL_DESIGN_OUT")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random connected chordal DAGs.
    Gen(GenArgs),
    /// Train a Q-network policy.
    Train(TrainArgs),
    /// Evaluate one strategy on a set of graphs.
    Eval(EvalArgs),
    /// Run a benchmark sweep described by a TOML file.
    Bench(BenchArgs),
    /// Rebuild mean_ratio.csv and timing.csv from a benchmark's records.json.
    ExportPlotsData(ExportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: Option<usize>,
    /// Target density |E| / C(n, 2).
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Relative density tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Raise rho to the connectivity minimum instead of failing.
    #[arg(long)]
    clamp_density: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Training graph sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<usize>>,
    /// Training graph densities, comma separated.
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    log_every: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Graph files (.json) or edge lists; directories contribute their .json files.
    #[arg(required = true)]
    graphs: Vec<PathBuf>,
    #[arg(long, value_parser = ["random", "entropy", "minimax", "average", "learned", "optimal"])]
    strategy: Option<String>,
    /// Sample count for the Monte-Carlo average strategy.
    #[arg(long)]
    samples: Option<usize>,
    /// Enumeration cap for class-based strategies.
    #[arg(long)]
    cap: Option<u64>,
    /// Checkpoint for the learned strategy.
    #[arg(long)]
    model: Option<PathBuf>,
    /// `exact` or `monte_carlo` for the average strategy.
    #[arg(long)]
    mode: Option<String>,
    /// Planning horizon for the optimal strategy.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-selection limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct ExportArgs {
    /// records.json written by `bench`.
    records: PathBuf,
    /// Steps to summarise; defaults to the longest run.
    #[arg(long)]
    budget: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    out_dir: Option<PathBuf>,
    gen: GenSection,
    train: TrainConfig,
    eval: EvalSection,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenSection {
    n: usize,
    rho: f64,
    count: usize,
    seed: u64,
    tolerance: f64,
    clamp_density: bool,
}

impl Default for GenSection {
    fn default() -> Self {
        Self {
            n: 10,
            rho: 0.3,
            count: 10,
            seed: 0,
            tolerance: 0.1,
            clamp_density: false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalSection {
    strategy: String,
    samples: Option<usize>,
    cap: Option<u64>,
    model: Option<PathBuf>,
    mode: Option<String>,
    horizon: Option<usize>,
    budget: usize,
    seed: u64,
    timeout_seconds: Option<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            strategy: "random".into(),
            samples: None,
            cap: None,
            model: None,
            mode: None,
            horizon: None,
            budget: 5,
            seed: 0,
            timeout_seconds: None,
        }
    }
}

impl Config {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: Config = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    spec: &'a GenSpec,
    clamp_density: bool,
    seed: u64,
    calibrated_c: f64,
    graphs: Vec<ManifestEntry>,
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    edges: usize,
    density: f64,
    within_tolerance: bool,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = Config::load(cli.config.as_deref())?;
    let explicit_out = cli.out.clone();
    let out = cli
        .out
        .or_else(|| config.out_dir.as_ref().map(|d| config.base_dir.join(d)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let create = |dir: &Path| std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()));
    match cli.command {
        Command::Gen(args) => create(&out).and_then(|_| gen(args, config, &out)),
        Command::Train(args) => create(&out).and_then(|_| train(args, config, &out)),
        Command::Eval(args) => create(&out).and_then(|_| eval(args, config, &out)),
        Command::Bench(args) => bench(args, explicit_out, &out),
        Command::ExportPlotsData(args) => {
            let report = export_plots_data(&args.records, &out, args.budget)?;
            log::info!(
                "{} records -> {} mean-ratio rows, {} timing rows in {}",
                report.records.len(),
                report.mean_ratio.len(),
                report.timing.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn gen(args: GenArgs, config: Config, out: &Path) -> Result<()> {
    let section = config.gen;
    let clamp = args.clamp_density || section.clamp_density;
    let mut spec = GenSpec::new(args.n.unwrap_or(section.n), args.rho.unwrap_or(section.rho))
        .with_seed(args.seed.unwrap_or(section.seed));
    spec.tolerance = args.tolerance.unwrap_or(section.tolerance);
    if clamp {
        spec = spec.clamped_to_feasible();
    }
    let count = args.count.unwrap_or(section.count);
    let graphs = generate_many(&spec, count)?;
    let width = count.saturating_sub(1).to_string().len();
    let mut entries = Vec::with_capacity(count);
    for (i, g) in graphs.iter().enumerate() {
        let file = format!("graph_{i:0width$}.json");
        g.dag.save(out.join(&file))?;
        if !g.within_tolerance {
            log::warn!("{file}: density {:.3} outside tolerance of {}", g.density, spec.rho);
        }
        entries.push(ManifestEntry {
            file,
            edges: g.dag.edge_count(),
            density: g.density,
            within_tolerance: g.within_tolerance,
        });
    }
    let manifest = Manifest {
        spec: &spec,
        clamp_density: clamp,
        seed: spec.seed,
        calibrated_c: graphs.first().map_or(0.0, |g| g.c),
        graphs: entries,
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    log::info!("wrote {count} graphs to {}", out.display());
    Ok(())
}

fn train(args: TrainArgs, config: Config, out: &Path) -> Result<()> {
    let mut cfg = config.train;
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = args.$field { cfg.$field = v; })* };
    }
    set!(episodes, steps, seed, learning_rate, gamma, batch_size, nodes, rho, checkpoint_every, log_every);
    cfg.validate()?;
    std::fs::write(out.join("train_config.toml"), toml::to_string(&cfg)?)?;
    let output = train_with(&cfg, |episode, params| {
        let path = out.join(format!("checkpoint_{episode:06}.json"));
        log::info!("checkpoint {}", path.display());
        params.save(path)
    })?;
    write_train_log_csv(out.join("train_log.csv"), &output.log)?;
    output.params.save(out.join("model.json"))?;
    if let Some(last) = output.log.last() {
        log::info!("episode {}: mean reward {:.3}", last.episode, last.mean_reward);
    }
    log::info!("model written to {}", out.join("model.json").display());
    Ok(())
}

fn eval(args: EvalArgs, config: Config, out: &Path) -> Result<()> {
    let section = config.eval;
    let strategy = StrategySpec {
        name: args.strategy.unwrap_or(section.strategy),
        cap: args.cap.or(section.cap),
        samples: args.samples.or(section.samples),
        mode: args.mode.or(section.mode),
        model: args.model.or_else(|| section.model.map(|m| config.base_dir.join(m))),
        horizon: args.horizon.or(section.horizon),
    };
    let kind = strategy.build(Path::new("."))?;
    let budget = args.budget.unwrap_or(section.budget);
    let seed = args.seed.unwrap_or(section.seed);
    let timeout = args
        .timeout
        .or(section.timeout_seconds)
        .map(Duration::try_from_secs_f64)
        .transpose()
        .context("invalid timeout")?;

    let graphs = load_graphs(&args.graphs)?;
    let mut runs: Vec<RunRecord> = Vec::with_capacity(graphs.len());
    for (i, (id, dag)) in graphs.iter().enumerate() {
        let mut selector = Selector::new(kind.clone(), derive_seed(seed, i as u64))?;
        let run = evaluate_graph(id, dag, &mut selector, budget, timeout);
        if run.status != RunStatus::Ok {
            log::warn!("{id}: {}", run.message.as_deref().unwrap_or(run.status.as_str()));
        }
        runs.push(run);
    }
    let path = out.join(format!("eval_{}.csv", kind.tag()));
    write_runs_csv(&path, &runs.iter().collect::<Vec<_>>())?;

    for k in 0..=budget {
        let ratios: Vec<f64> = runs.iter().filter_map(|r| r.ratio_at(k)).collect();
        if !ratios.is_empty() {
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            println!("step {k}: mean ratio {mean:.4} over {} graphs", ratios.len());
        }
    }
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Reads graphs from JSON files, edge lists, or directories of JSON files.
fn load_graphs(paths: &[PathBuf]) -> Result<Vec<(String, Dag)>> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(path)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|p| p.extension().is_some_and(|e| e == "json") && p.file_name().is_some_and(|n| n != "manifest.json"));
            found.sort();
            files.extend(found);
        } else {
            files.push(path.clone());
        }
    }
    if files.is_empty() {
        bail!("no graph files found");
    }
    files
        .into_iter()
        .map(|path| {
            let id = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
            let dag = if path.extension().is_some_and(|e| e == "json") {
                Dag::load(&path)?
            } else {
                load_edge_list(&path)?.dag
            };
            Ok((id, dag))
        })
        .collect::<causal_design::Result<_>>()
        .map_err(Into::into)
}

/// The benchmark's own `out_dir` applies unless `--out` or the environment
/// variable names a directory.
fn bench(args: BenchArgs, explicit_out: Option<PathBuf>, out: &Path) -> Result<()> {
    let mut spec = BenchSpec::load(&args.spec).with_context(|| format!("loading {}", args.spec.display()))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.parallel |= args.parallel;
    let dir = explicit_out
        .or_else(|| spec.out_dir.as_ref().map(|d| spec.base_dir.join(d)))
        .unwrap_or_else(|| out.to_path_buf());
    let report = run_bench(&spec)?;
    write_report(&dir, &report)?;
    let failed = report.records.iter().filter(|r| r.run.status != RunStatus::Ok).count();
    log::info!("{} runs ({failed} not ok) written to {}", report.records.len(), dir.display());
    Ok(())
}
