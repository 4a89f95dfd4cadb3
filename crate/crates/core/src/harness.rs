//! Experiment orchestration: edge-list ingestion, benchmark sweeps and the
//! CSV/JSON reports consumed by the plotting scripts.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::graphgen::{density, generate_many, GenSpec};
use crate::mec::DEFAULT_CAP;
use crate::neural::ModelParams;
use crate::rl::{derive_seed, evaluate_graph, RunRecord, RunStatus};
use crate::strategies::{AverageMode, Selector, StrategyKind};

/// A DAG read from an edge list, with the original node names by id.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedDag {
    pub dag: Dag,
    pub names: Vec<String>,
}

/// Parses `"u v"` directed-edge lines. Names get dense ids in order of first
/// appearance; blank lines and `#` comments are skipped; repeated edges are
/// kept once.
pub fn parse_edge_list(text: &str, path: &Path) -> Result<NamedDag> {
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut names = Vec::new();
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [u, v] = fields[..] else {
            return Err(parse_err(format!("expected two node names, found {}", fields.len())));
        };
        if u == v {
            return Err(parse_err(format!("self loop on {u}")));
        }
        let mut id = |name: &str| {
            *ids.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                names.len() - 1
            })
        };
        let (a, b) = (id(u), id(v));
        edges.push((a, b));
    }
    edges.sort_unstable();
    edges.dedup();
    let dag = Dag::from_edges(names.len(), &edges).map_err(|e| match e {
        Error::Cycle(m) => Error::InvalidGraph(format!("{}: not acyclic ({m})", path.display())),
        Error::InvalidGraph(m) => Error::InvalidGraph(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok(NamedDag { dag, names })
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<NamedDag> {
    let path = path.as_ref();
    parse_edge_list(&std::fs::read_to_string(path)?, path)
}

/// A batch of generated graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedSource {
    pub n: usize,
    pub rho: f64,
    pub count: usize,
    /// Raise `rho` to the connectivity minimum when it is below it.
    #[serde(default)]
    pub clamp_density: bool,
}

/// One strategy entry of a benchmark.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub name: String,
    pub cap: Option<u64>,
    pub samples: Option<usize>,
    /// `exact` or `monte_carlo`, for `average`.
    pub mode: Option<String>,
    /// Checkpoint path, for `learned`. Relative paths resolve against the
    /// benchmark file's directory.
    pub model: Option<PathBuf>,
    /// Planning horizon, for `optimal`.
    pub horizon: Option<usize>,
}

impl StrategySpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    pub fn build(&self, base_dir: &Path) -> Result<StrategyKind> {
        let cap = self.cap.unwrap_or(DEFAULT_CAP);
        let kind = match self.name.as_str() {
            "random" => StrategyKind::Random,
            "entropy" => StrategyKind::Entropy { cap },
            "minimax" => StrategyKind::Minimax { cap },
            "average" => StrategyKind::Average {
                samples: self.samples.unwrap_or(200),
                cap,
                mode: match self.mode.as_deref() {
                    None | Some("exact") => AverageMode::Exact,
                    Some("monte_carlo") => AverageMode::MonteCarlo,
                    Some(other) => {
                        return Err(Error::InvalidConfig(format!("unknown average mode {other:?}")));
                    }
                },
            },
            "optimal" => StrategyKind::Optimal {
                horizon: self.horizon.unwrap_or(5),
                cap,
            },
            "learned" => {
                let path = self
                    .model
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("learned strategy needs a model".into()))?;
                let path = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                StrategyKind::Learned {
                    params: Arc::new(ModelParams::load(path)?),
                }
            }
            other => return Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A benchmark sweep, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    #[serde(default)]
    pub generated: Vec<GeneratedSource>,
    #[serde(default)]
    pub edge_lists: Vec<PathBuf>,
    pub strategies: Vec<StrategySpec>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Per-selection limit in seconds.
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
    #[serde(default)]
    pub seed: u64,
    /// Run independent (graph, strategy) pairs on a thread pool. Timings are
    /// noisier in this mode.
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_budget() -> usize {
    5
}

fn default_repetitions() -> usize {
    1
}

fn default_timeout() -> f64 {
    60.0
}

impl BenchSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut spec = Self::from_toml(&std::fs::read_to_string(path)?)?;
        spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.generated.is_empty() && self.edge_lists.is_empty() {
            return Err(Error::InvalidConfig("no graph source".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidConfig("no strategy".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be positive".into()));
        }
        if !(self.timeout_seconds > 0.0) {
            return Err(Error::InvalidConfig("timeout must be positive".into()));
        }
        Ok(())
    }
}

/// A graph in a sweep, with the cell it is reported under.
#[derive(Debug, Clone)]
pub struct BenchGraph {
    pub id: String,
    pub n: usize,
    /// Nominal density for generated graphs, realised density otherwise.
    pub rho: f64,
    pub dag: Dag,
}

/// Builds the benchmark's graphs; generated batch `i` uses a seed derived from
/// the benchmark seed.
pub fn bench_graphs(spec: &BenchSpec) -> Result<Vec<BenchGraph>> {
    let mut out = Vec::new();
    for (i, src) in spec.generated.iter().enumerate() {
        let mut gen = GenSpec::new(src.n, src.rho).with_seed(derive_seed(spec.seed, i as u64));
        if src.clamp_density {
            gen = gen.clamped_to_feasible();
        }
        for (j, g) in generate_many(&gen, src.count)?.into_iter().enumerate() {
            out.push(BenchGraph {
                id: format!("n{}_rho{}_{j}", src.n, src.rho),
                n: src.n,
                rho: src.rho,
                dag: g.dag,
            });
        }
    }
    for path in &spec.edge_lists {
        let path = if path.is_absolute() { path.clone() } else { spec.base_dir.join(path) };
        let named = load_edge_list(&path)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        out.push(BenchGraph {
            id,
            n: named.dag.n(),
            rho: (density(&named.dag) * 1000.0).round() / 1000.0,
            dag: named.dag,
        });
    }
    Ok(out)
}

/// A run together with the cell and repetition it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: usize,
    pub rho: f64,
    pub repetition: usize,
    #[serde(flatten)]
    pub run: RunRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRatioRow {
    pub n: usize,
    pub rho: f64,
    pub strategy: String,
    pub step: usize,
    /// Mean over successful runs; empty when there are none.
    pub mean_ratio: Option<f64>,
    pub n_ok: usize,
    pub n_fail: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub rho: f64,
    pub strategy: String,
    /// Mean total selection time per successful run.
    pub mean_seconds: Option<f64>,
    /// `mean_seconds` over the learned strategy's in the same cell.
    pub speedup_vs_learned: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    pub mean_ratio: Vec<MeanRatioRow>,
    pub timing: Vec<TimingRow>,
}

/// Runs every (graph, strategy, repetition) once. Failures are recorded as
/// statuses; only setup problems (bad spec, unreadable inputs) are errors.
pub fn run_bench(spec: &BenchSpec) -> Result<BenchReport> {
    spec.validate()?;
    let kinds = spec
        .strategies
        .iter()
        .map(|s| s.build(&spec.base_dir))
        .collect::<Result<Vec<_>>>()?;
    let graphs = bench_graphs(spec)?;
    let timeout = Some(Duration::from_secs_f64(spec.timeout_seconds));

    let mut jobs = Vec::new();
    for (gi, _) in graphs.iter().enumerate() {
        for (si, _) in kinds.iter().enumerate() {
            for rep in 0..spec.repetitions {
                jobs.push((gi, si, rep));
            }
        }
    }
    let run = |&(gi, si, rep): &(usize, usize, usize)| -> Result<BenchRecord> {
        let g = &graphs[gi];
        let seed = derive_seed(derive_seed(spec.seed, gi as u64), (rep * kinds.len() + si) as u64);
        let mut selector = Selector::new(kinds[si].clone(), seed)?;
        let run = evaluate_graph(&g.id, &g.dag, &mut selector, spec.budget, timeout);
        if run.status != RunStatus::Ok {
            log::warn!("{} on {}: {}", run.strategy, run.graph_id, run.status.as_str());
        }
        Ok(BenchRecord {
            n: g.n,
            rho: g.rho,
            repetition: rep,
            run,
        })
    };
    let records = if spec.parallel {
        jobs.par_iter().map(run).collect::<Result<Vec<_>>>()?
    } else {
        jobs.iter().map(run).collect::<Result<Vec<_>>>()?
    };
    Ok(summarize(records, spec.budget))
}

/// Builds the summary tables from raw records.
pub fn summarize(records: Vec<BenchRecord>, budget: usize) -> BenchReport {
    // Cells keyed by (n, rho bits) in first-seen order for stable output.
    let mut cells: Vec<(usize, f64)> = Vec::new();
    let mut strategies: Vec<String> = Vec::new();
    for r in &records {
        if !cells.iter().any(|&(n, rho)| n == r.n && rho.to_bits() == r.rho.to_bits()) {
            cells.push((r.n, r.rho));
        }
        if !strategies.contains(&r.run.strategy) {
            strategies.push(r.run.strategy.clone());
        }
    }

    let mut mean_ratio = Vec::new();
    let mut timing = Vec::new();
    for &(n, rho) in &cells {
        let mut means: BTreeMap<&str, Option<f64>> = BTreeMap::new();
        for strategy in &strategies {
            let runs: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.n == n && r.rho.to_bits() == rho.to_bits() && &r.run.strategy == strategy)
                .map(|r| &r.run)
                .collect();
            if runs.is_empty() {
                continue;
            }
            let ok: Vec<&RunRecord> = runs.iter().copied().filter(|r| r.status == RunStatus::Ok).collect();
            let n_fail = runs.len() - ok.len();
            for step in 0..=budget {
                let mean = (!ok.is_empty()).then(|| {
                    ok.iter().map(|r| r.ratio_at(step).expect("ok runs carry forward")).sum::<f64>()
                        / ok.len() as f64
                });
                mean_ratio.push(MeanRatioRow {
                    n,
                    rho,
                    strategy: strategy.clone(),
                    step,
                    mean_ratio: mean,
                    n_ok: ok.len(),
                    n_fail,
                });
            }
            let mean_seconds = (!ok.is_empty())
                .then(|| ok.iter().map(|r| r.select_seconds.iter().sum::<f64>()).sum::<f64>() / ok.len() as f64);
            means.insert(strategy.as_str(), mean_seconds);
        }
        let learned = means.get("learned").copied().flatten().filter(|&s| s > 0.0);
        for strategy in &strategies {
            if let Some(&mean_seconds) = means.get(strategy.as_str()) {
                timing.push(TimingRow {
                    n,
                    rho,
                    strategy: strategy.clone(),
                    mean_seconds,
                    speedup_vs_learned: mean_seconds.zip(learned).map(|(s, l)| s / l),
                });
            }
        }
    }
    BenchReport {
        records,
        mean_ratio,
        timing,
    }
}

pub const RUNS_HEADER: [&str; 5] = ["graph_id", "strategy", "step", "ratio", "select_ms"];
pub const MEAN_RATIO_HEADER: [&str; 7] = ["n", "rho", "strategy", "step", "mean_ratio", "n_ok", "n_fail"];
pub const TIMING_HEADER: [&str; 5] = ["n", "rho", "strategy", "mean_seconds", "speedup_vs_learned"];
pub const TRAIN_LOG_HEADER: [&str; 4] = ["episode", "epsilon", "mean_reward", "loss"];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Per-step evaluation rows; step 0 has no selection time.
pub fn write_runs_csv(path: impl AsRef<Path>, runs: &[&RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RUNS_HEADER)?;
    for r in runs {
        for (step, ratio) in r.ratios.iter().enumerate() {
            let ms = step
                .checked_sub(1)
                .and_then(|i| r.select_seconds.get(i))
                .map(|s| s * 1e3);
            w.write_record([
                r.graph_id.clone(),
                r.strategy.clone(),
                step.to_string(),
                ratio.to_string(),
                opt(ms),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_mean_ratio_csv(path: impl AsRef<Path>, rows: &[MeanRatioRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(MEAN_RATIO_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.rho.to_string(),
            r.strategy.clone(),
            r.step.to_string(),
            opt(r.mean_ratio),
            r.n_ok.to_string(),
            r.n_fail.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing_csv(path: impl AsRef<Path>, rows: &[TimingRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TIMING_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.rho.to_string(),
            r.strategy.clone(),
            opt(r.mean_seconds),
            opt(r.speedup_vs_learned),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_train_log_csv(path: impl AsRef<Path>, rows: &[crate::rl::TrainLogRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRAIN_LOG_HEADER)?;
    for r in rows {
        w.write_record([
            r.episode.to_string(),
            r.epsilon.to_string(),
            r.mean_reward.to_string(),
            opt(r.loss),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const RECORDS_FILE: &str = "records.json";
pub const RUNS_FILE: &str = "runs.csv";
pub const MEAN_RATIO_FILE: &str = "mean_ratio.csv";
pub const TIMING_FILE: &str = "timing.csv";

/// Writes `records.json`, `runs.csv`, `mean_ratio.csv` and `timing.csv`.
pub fn write_report(dir: impl AsRef<Path>, report: &BenchReport) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(RECORDS_FILE), serde_json::to_string_pretty(&report.records)?)?;
    let runs: Vec<&RunRecord> = report.records.iter().map(|r| &r.run).collect();
    write_runs_csv(dir.join(RUNS_FILE), &runs)?;
    write_mean_ratio_csv(dir.join(MEAN_RATIO_FILE), &report.mean_ratio)?;
    write_timing_csv(dir.join(TIMING_FILE), &report.timing)?;
    Ok(())
}

/// Rebuilds the summary CSVs in `out_dir` from a benchmark's `records.json`.
pub fn export_plots_data(records_json: impl AsRef<Path>, out_dir: impl AsRef<Path>, budget: Option<usize>) -> Result<BenchReport> {
    let records: Vec<BenchRecord> = serde_json::from_str(&std::fs::read_to_string(records_json)?)?;
    let budget = budget.unwrap_or_else(|| records.iter().map(|r| r.run.ratios.len().saturating_sub(1)).max().unwrap_or(0));
    let report = summarize(records, budget);
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    write_mean_ratio_csv(out_dir.join(MEAN_RATIO_FILE), &report.mean_ratio)?;
    write_timing_csv(out_dir.join(TIMING_FILE), &report.timing)?;
    Ok(report)
}
