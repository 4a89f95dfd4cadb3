//! Python bindings. The extension module is importable as `causal_design`.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use causal_design::graph::{self, Dag, Pdag};
use causal_design::graphgen::{self, GenSpec};
use causal_design::harness::{self, StrategySpec};
use causal_design::mec::{self, DEFAULT_CAP};
use causal_design::neural::{self, ModelParams};
use causal_design::rl::{self, RunRecord, TrainConfig};
use causal_design::strategies::{self, Selector, StrategyKind};
use causal_design::Error;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyTimeoutError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

pyo3::create_exception!(causal_design, CapacityExceeded, PyRuntimeError, "Class enumeration exceeded its cap.");

/// `(episode, epsilon, mean_reward, loss)`.
type LogRow = (usize, f64, f64, Option<f64>);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::CapacityExceeded { .. } => CapacityExceeded::new_err(e.to_string()),
        Error::Timeout { .. } => PyTimeoutError::new_err(e.to_string()),
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Partially directed graph. Edge tags: "u" undirected, "f" u -> v, "b" v -> u.
#[pyclass(name = "Pdag", module = "causal_design", eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyPdag(Pdag);

#[pymethods]
impl PyPdag {
    #[new]
    fn new(n: usize) -> Self {
        Self(Pdag::new(n))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Pdag::from_json(text).map(Self).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    fn add_undirected(&mut self, u: usize, v: usize) -> PyResult<()> {
        self.0.add_undirected(u, v).map_err(to_py)
    }

    fn add_directed(&mut self, u: usize, v: usize) -> PyResult<()> {
        self.0.add_directed(u, v).map_err(to_py)
    }

    /// `(u, v, tag)` triples with `u < v`.
    fn edges(&self) -> Vec<(usize, usize, &'static str)> {
        self.0
            .edges()
            .map(|(u, v, o)| {
                let tag = match o {
                    graph::Orientation::Undirected => "u",
                    graph::Orientation::Forward => "f",
                    graph::Orientation::Backward => "b",
                };
                (u, v, tag)
            })
            .collect()
    }

    fn undirected_edges(&self) -> Vec<(usize, usize)> {
        self.0.undirected_edges().collect()
    }

    fn directed_edges(&self) -> Vec<(usize, usize)> {
        self.0.directed_edges().collect()
    }

    fn edge_count(&self) -> usize {
        self.0.edge_count()
    }

    fn undirected_count(&self) -> usize {
        self.0.undirected_count()
    }

    fn is_chordal(&self) -> bool {
        graph::is_chordal(&self.0)
    }

    fn chain_components(&self) -> Vec<Vec<usize>> {
        graph::chain_components(&self.0)
    }

    fn meek_closure(&self) -> PyResult<Self> {
        graph::meek_closure(&self.0).map(Self).map_err(to_py)
    }

    fn without_directed(&self) -> Self {
        Self(self.0.without_directed())
    }

    fn __repr__(&self) -> String {
        format!("Pdag({})", self.0.to_json())
    }
}

/// Directed acyclic graph.
#[pyclass(name = "Dag", module = "causal_design", eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyDag(Dag);

#[pymethods]
impl PyDag {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Dag::from_edges(n, &edges).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Dag::from_json(text).map(Self).map_err(to_py)
    }

    /// Reads a `"u v"` edge list; returns the graph and the node names by id.
    #[staticmethod]
    fn load_edge_list(path: PathBuf) -> PyResult<(Self, Vec<String>)> {
        let named = harness::load_edge_list(path).map_err(to_py)?;
        Ok((Self(named.dag), named.names))
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.0.edges().collect()
    }

    fn edge_count(&self) -> usize {
        self.0.edge_count()
    }

    fn parents(&self, v: usize) -> PyResult<Vec<usize>> {
        if v >= self.0.n() {
            return Err(to_py(Error::NodeOutOfRange { node: v, n: self.0.n() }));
        }
        Ok(self.0.parents(v).to_vec())
    }

    fn v_structures(&self) -> Vec<(usize, usize, usize)> {
        graph::v_structures(&self.0)
    }

    fn cpdag(&self) -> PyPdag {
        PyPdag(graph::cpdag_from_dag(&self.0))
    }

    fn density(&self) -> f64 {
        graphgen::density(&self.0)
    }

    fn __repr__(&self) -> String {
        format!("Dag({})", self.0.to_json())
    }
}

/// Q-network parameters.
#[pyclass(name = "Model", module = "causal_design", skip_from_py_object)]
#[derive(Clone)]
struct PyModel(Arc<ModelParams>);

#[pymethods]
impl PyModel {
    /// Randomly initialised parameters.
    #[new]
    #[pyo3(signature = (embed_dim = 32, feature_dim = 1, layers = 4, seed = 0))]
    fn new(embed_dim: usize, feature_dim: usize, layers: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Self(Arc::new(ModelParams::init(embed_dim, feature_dim, layers, &mut rng)))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ModelParams::load(path).map(|p| Self(Arc::new(p))).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ModelParams::from_json(text).map(|p| Self(Arc::new(p))).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    fn num_params(&self) -> usize {
        self.0.num_params()
    }

    /// Q-value of every node in `state`.
    fn scores(&self, state: &PyPdag) -> PyResult<Vec<f64>> {
        neural::score_all(&state.0, &self.0).map_err(to_py)
    }

    /// Highest-scoring node among those with an undirected edge.
    fn select(&self, state: &PyPdag) -> PyResult<usize> {
        strategies::select_learned(&state.0, &self.0).map_err(to_py)
    }
}

/// A selection policy with its own random stream.
#[pyclass(name = "Strategy", module = "causal_design", skip_from_py_object)]
struct PyStrategy {
    selector: Selector,
}

#[pymethods]
impl PyStrategy {
    /// `name` is one of random, entropy, minimax, average, learned, optimal.
    /// `model` (a Model or a checkpoint path) is required for learned.
    #[new]
    #[pyo3(signature = (name, *, cap = None, samples = None, mode = None, model = None, horizon = None, seed = 0))]
    fn new(
        name: &str,
        cap: Option<u64>,
        samples: Option<usize>,
        mode: Option<String>,
        model: Option<&Bound<'_, PyAny>>,
        horizon: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let kind = match (name, model) {
            ("learned", Some(m)) if m.is_instance_of::<PyModel>() => {
                let params = m.cast::<PyModel>()?.borrow().0.clone();
                StrategyKind::Learned { params }
            }
            _ => {
                let model = model.map(|m| m.extract::<PathBuf>()).transpose()?;
                let spec = StrategySpec {
                    name: name.to_string(),
                    cap,
                    samples,
                    mode,
                    model,
                    horizon,
                };
                spec.build(std::path::Path::new(".")).map_err(to_py)?
            }
        };
        Ok(Self {
            selector: Selector::new(kind, seed).map_err(to_py)?,
        })
    }

    #[getter]
    fn tag(&self) -> &'static str {
        self.selector.kind().tag()
    }

    /// Picks the next intervention target; `remaining` is the budget left.
    #[pyo3(signature = (state, remaining = 1))]
    fn select(&mut self, state: &PyPdag, remaining: usize) -> PyResult<usize> {
        self.selector.select(&state.0, remaining).map_err(to_py)
    }

    /// Runs the policy on `truth` from its CPDAG for up to `budget` steps.
    #[pyo3(signature = (truth, budget = 5, graph_id = "0", timeout = None))]
    fn evaluate<'py>(
        &mut self,
        py: Python<'py>,
        truth: &PyDag,
        budget: usize,
        graph_id: &str,
        timeout: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let timeout = timeout
            .map(Duration::try_from_secs_f64)
            .transpose()
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let run = rl::evaluate_graph(graph_id, &truth.0, &mut self.selector, budget, timeout);
        run_to_dict(py, &run)
    }
}

fn run_to_dict<'py>(py: Python<'py>, run: &RunRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("graph_id", &run.graph_id)?;
    d.set_item("strategy", &run.strategy)?;
    d.set_item("ratios", &run.ratios)?;
    d.set_item("select_seconds", &run.select_seconds)?;
    d.set_item("total_seconds", run.total_seconds)?;
    d.set_item("status", run.status.as_str())?;
    d.set_item("message", &run.message)?;
    Ok(d)
}

/// Essential graph (CPDAG) of `dag`.
#[pyfunction]
fn cpdag(dag: &PyDag) -> PyPdag {
    PyPdag(graph::cpdag_from_dag(&dag.0))
}

#[pyfunction]
fn meek_closure(g: &PyPdag) -> PyResult<PyPdag> {
    graph::meek_closure(&g.0).map(PyPdag).map_err(to_py)
}

/// Intervenes on `v`; returns the next state and the oriented edges.
#[pyfunction]
fn apply_intervention(state: &PyPdag, truth: &PyDag, v: usize) -> PyResult<(PyPdag, Vec<(usize, usize)>)> {
    let out = graph::apply_intervention(&state.0, &truth.0, v).map_err(to_py)?;
    Ok((PyPdag(out.next_state), out.oriented_edges))
}

#[pyfunction]
fn action_set(state: &PyPdag) -> Vec<usize> {
    strategies::action_set(&state.0)
}

#[pyfunction]
#[pyo3(signature = (g, cap = DEFAULT_CAP))]
fn mec_size(g: &PyPdag, cap: u64) -> PyResult<u64> {
    mec::mec_size(&g.0, cap).map_err(to_py)
}

/// Every consistent extension of `g`.
#[pyfunction]
#[pyo3(signature = (g, cap = DEFAULT_CAP))]
fn enumerate_extensions(g: &PyPdag, cap: u64) -> PyResult<Vec<PyDag>> {
    let set = mec::enumerate_extensions(&g.0, cap).map_err(to_py)?;
    Ok(set.extensions.into_iter().map(PyDag).collect())
}

/// `count` random connected chordal DAGs.
#[pyfunction]
#[pyo3(signature = (n, rho, count = 1, seed = 0, clamp_density = false))]
fn generate(n: usize, rho: f64, count: usize, seed: u64, clamp_density: bool) -> PyResult<Vec<PyDag>> {
    let mut spec = GenSpec::new(n, rho).with_seed(seed);
    if clamp_density {
        spec = spec.clamped_to_feasible();
    }
    let graphs = graphgen::generate_many(&spec, count).map_err(to_py)?;
    Ok(graphs.into_iter().map(|g| PyDag(g.dag)).collect())
}

/// Trains a model. `config` is TOML text in the training config format;
/// `episodes` and `seed` override it. Returns the model and the log rows as
/// `(episode, epsilon, mean_reward, loss)` tuples.
#[pyfunction]
#[pyo3(signature = (config = None, *, episodes = None, seed = None))]
fn train(
    py: Python<'_>,
    config: Option<&str>,
    episodes: Option<usize>,
    seed: Option<u64>,
) -> PyResult<(PyModel, Vec<LogRow>)> {
    let mut cfg: TrainConfig = match config {
        Some(text) => toml::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => TrainConfig::default(),
    };
    if let Some(e) = episodes {
        cfg.episodes = e;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = py.detach(|| rl::train(&cfg)).map_err(to_py)?;
    let log = out.log.iter().map(|r| (r.episode, r.epsilon, r.mean_reward, r.loss)).collect();
    Ok((PyModel(Arc::new(out.params)), log))
}

/// Runs a benchmark TOML file and writes its report; returns the run count.
#[pyfunction(name = "bench")]
#[pyo3(signature = (spec_path, out_dir = None))]
fn run_bench(py: Python<'_>, spec_path: PathBuf, out_dir: Option<PathBuf>) -> PyResult<usize> {
    py.detach(|| {
        let spec = harness::BenchSpec::load(&spec_path)?;
        let dir = out_dir
            .or_else(|| spec.out_dir.as_ref().map(|d| spec.base_dir.join(d)))
            .unwrap_or_else(|| PathBuf::from("out"));
        let report = harness::run_bench(&spec)?;
        harness::write_report(dir, &report)?;
        Ok(report.records.len())
    })
    .map_err(to_py)
}

#[pymodule(name = "causal_design")]
pub fn causal_design_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPdag>()?;
    m.add_class::<PyDag>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyStrategy>()?;
    m.add("CapacityExceeded", m.py().get_type::<CapacityExceeded>())?;
    m.add("DEFAULT_CAP", DEFAULT_CAP)?;
    m.add_function(wrap_pyfunction!(cpdag, m)?)?;
    m.add_function(wrap_pyfunction!(meek_closure, m)?)?;
    m.add_function(wrap_pyfunction!(apply_intervention, m)?)?;
    m.add_function(wrap_pyfunction!(action_set, m)?)?;
    m.add_function(wrap_pyfunction!(mec_size, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_extensions, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
