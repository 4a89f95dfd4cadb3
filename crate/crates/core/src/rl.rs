//! Q-learning over intervention episodes and policy evaluation.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{apply_intervention, cpdag_from_dag, discovered_edge_ratio, Dag, Pdag};
use crate::graphgen::{ChordalGenerator, GenSpec};
use crate::neural::{td_loss_grad, ModelParams};
use crate::strategies::{action_set, select_learned, Selector, StrategyKind};

/// One step of experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Pdag,
    pub action: usize,
    /// Number of edges oriented by this step.
    pub reward: usize,
    pub next_state: Pdag,
    /// No undirected edges left, or the episode's step budget is used up.
    pub terminal: bool,
}

/// Fixed-capacity experience memory; evicts oldest first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("buffer capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            inserted: 0,
        })
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of transitions ever pushed.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Up to `size` distinct transitions, uniformly without replacement.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<&Transition> {
        let k = size.min(self.items.len());
        sample(rng, self.items.len(), k)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    /// Share of the episodes over which epsilon decays.
    pub fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            fraction: 0.8,
        }
    }
}

/// Training settings. Every field has a default, so a config file only needs
/// the values it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Interventions per episode.
    pub steps: usize,
    /// Gradient step every this many episodes.
    pub update_every: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub buffer_capacity: usize,
    /// Training graphs: node counts and densities, each drawn uniformly.
    pub nodes: Vec<usize>,
    pub rho: Vec<f64>,
    /// Raise densities below the connectivity minimum instead of failing.
    pub clamp_density: bool,
    pub embed_dim: usize,
    pub feature_dim: usize,
    pub layers: usize,
    pub seed: u64,
    /// Rescale the gradient to at most this norm.
    pub clip_norm: Option<f64>,
    /// Episodes per log row.
    pub log_every: usize,
    /// Episodes between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 20_000,
            steps: 5,
            update_every: 4,
            batch_size: 64,
            learning_rate: 1e-3,
            gamma: 0.9,
            epsilon: EpsilonSchedule::default(),
            buffer_capacity: 50_000,
            nodes: vec![8, 10],
            rho: vec![0.2],
            clamp_density: true,
            embed_dim: 32,
            feature_dim: 1,
            layers: 4,
            seed: 0,
            clip_norm: Some(10.0),
            log_every: 100,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.steps == 0 || self.update_every == 0 || self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("steps, update_every, batch_size and buffer_capacity must be positive");
        }
        if self.embed_dim == 0 || self.feature_dim == 0 || self.layers == 0 || self.log_every == 0 {
            return bad("embed_dim, feature_dim, layers and log_every must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        let EpsilonSchedule { start, end, fraction } = self.epsilon;
        if !(start <= 1.0 && start >= end && end >= 0.0) {
            return bad("epsilon needs 1 >= start >= end >= 0");
        }
        if !(fraction > 0.0 && fraction <= 1.0) {
            return bad("epsilon fraction must lie in (0, 1]");
        }
        if self.nodes.is_empty() || self.rho.is_empty() {
            return bad("nodes and rho must be non-empty");
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        for spec in self.gen_specs() {
            spec.validate()?;
        }
        Ok(())
    }

    fn gen_specs(&self) -> Vec<GenSpec> {
        let mut specs = Vec::new();
        for &n in &self.nodes {
            for &rho in &self.rho {
                let spec = GenSpec::new(n, rho);
                specs.push(if self.clamp_density { spec.clamped_to_feasible() } else { spec });
            }
        }
        specs
    }
}

/// Exploration rate for 1-based episode `e`: linear from `start` to `end`
/// over the first `fraction` of episodes, then flat.
pub fn epsilon(e: usize, config: &TrainConfig) -> f64 {
    let EpsilonSchedule { start, end, fraction } = config.epsilon;
    let window = fraction * config.episodes as f64;
    let t = if window > 1.0 {
        ((e.max(1) - 1) as f64 / (window - 1.0)).min(1.0)
    } else if e <= 1 {
        0.0
    } else {
        1.0
    };
    if t >= 1.0 {
        end
    } else {
        start + t * (end - start)
    }
}

/// Plays one episode of at most `steps` interventions on `truth`, acting
/// randomly with probability `eps` and greedily on `params` otherwise.
pub fn run_episode<R: Rng + ?Sized>(
    truth: &Dag,
    params: &ModelParams,
    eps: f64,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<Transition>> {
    let mut state = cpdag_from_dag(truth).without_directed();
    let mut out = Vec::new();
    for step in 0..steps {
        let actions = action_set(&state);
        if actions.is_empty() {
            break;
        }
        let explore = rng.random::<f64>() < eps;
        let action = if explore {
            actions[rng.random_range(0..actions.len())]
        } else {
            select_learned(&state, params)?
        };
        let outcome = apply_intervention(&state, truth, action)?;
        let terminal = outcome.next_state.undirected_count() == 0 || step + 1 == steps;
        out.push(Transition {
            state: std::mem::replace(&mut state, outcome.next_state.clone()),
            action,
            reward: outcome.oriented_count,
            next_state: outcome.next_state,
            terminal,
        });
    }
    Ok(out)
}

/// One training log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub episode: usize,
    pub epsilon: f64,
    /// Mean episode reward since the previous row.
    pub mean_reward: f64,
    /// Most recent batch loss; empty before the first update.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub log: Vec<TrainLogRow>,
    /// Total reward of every episode, in order.
    pub episode_rewards: Vec<usize>,
}

pub fn train(config: &TrainConfig) -> Result<TrainOutput> {
    train_with(config, |_, _| Ok(()))
}

/// Like [`train`], calling `on_checkpoint(episode, params)` every
/// `checkpoint_every` episodes.
pub fn train_with<F>(config: &TrainConfig, mut on_checkpoint: F) -> Result<TrainOutput>
where
    F: FnMut(usize, &ModelParams) -> Result<()>,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(config.embed_dim, config.feature_dim, config.layers, &mut rng);
    let generators = config
        .gen_specs()
        .into_iter()
        .map(|spec| ChordalGenerator::new(spec, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity)?;
    let mut log = Vec::new();
    let mut episode_rewards = Vec::with_capacity(config.episodes);
    let mut last_loss = None;
    let mut window_reward = 0usize;
    let mut window_len = 0usize;

    for e in 1..=config.episodes {
        let eps = epsilon(e, config);
        let generator = &generators[rng.random_range(0..generators.len())];
        let truth = generator.generate(&mut rng).dag;
        let transitions = run_episode(&truth, &params, eps, config.steps, &mut rng)?;
        let reward: usize = transitions.iter().map(|t| t.reward).sum();
        episode_rewards.push(reward);
        window_reward += reward;
        window_len += 1;
        for t in transitions {
            buffer.push(t);
        }

        if e % config.update_every == 0 && !buffer.is_empty() {
            let batch = buffer.sample(config.batch_size, &mut rng);
            let (loss, mut grad) = td_loss_grad(&batch, &params, config.gamma)?;
            if let Some(max) = config.clip_norm {
                let norm = grad.l2_norm();
                if norm > max {
                    grad.scale(max / norm);
                }
            }
            params.axpy(-config.learning_rate, &grad);
            params.validate()?;
            last_loss = Some(loss);
        }

        if e % config.log_every == 0 || e == config.episodes {
            log.push(TrainLogRow {
                episode: e,
                epsilon: eps,
                mean_reward: window_reward as f64 / window_len as f64,
                loss: last_loss,
            });
            log::info!("episode {e}: eps {eps:.3}, mean reward {:.3}", window_reward as f64 / window_len as f64);
            window_reward = 0;
            window_len = 0;
        }
        if config.checkpoint_every > 0 && e % config.checkpoint_every == 0 {
            on_checkpoint(e, &params)?;
        }
    }
    Ok(TrainOutput {
        params,
        log,
        episode_rewards,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Timeout,
    CapacityExceeded,
    /// Any other failure; the message is kept in the record.
    Error,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Timeout => "timeout",
            RunStatus::CapacityExceeded => "capacity_exceeded",
            RunStatus::Error => "error",
        }
    }
}

/// One evaluated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub graph_id: String,
    pub strategy: String,
    /// Discovered-edge ratio before any intervention, then after each one.
    pub ratios: Vec<f64>,
    /// Selection wall-clock per intervention.
    pub select_seconds: Vec<f64>,
    /// Selection plus intervention time over the whole run.
    pub total_seconds: f64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl RunRecord {
    /// Ratio after `k` interventions, carrying the last value forward past an
    /// early stop. `None` for a run that failed before reaching `k`.
    pub fn ratio_at(&self, k: usize) -> Option<f64> {
        match self.ratios.get(k) {
            Some(&r) => Some(r),
            None if self.status == RunStatus::Ok => self.ratios.last().copied(),
            None => None,
        }
    }
}

/// Runs `selector` on `truth` for up to `budget` interventions, stopping early
/// once nothing is left to orient. A selection slower than `timeout` ends the
/// run with status timeout.
pub fn evaluate_graph(
    graph_id: &str,
    truth: &Dag,
    selector: &mut Selector,
    budget: usize,
    timeout: Option<Duration>,
) -> RunRecord {
    let mut record = RunRecord {
        graph_id: graph_id.to_string(),
        strategy: selector.kind().tag().to_string(),
        ratios: Vec::new(),
        select_seconds: Vec::new(),
        total_seconds: 0.0,
        status: RunStatus::Ok,
        message: None,
    };
    if let Err(e) = run_trajectory(truth, selector, budget, timeout, &mut record) {
        record.status = match e {
            Error::Timeout { .. } => RunStatus::Timeout,
            Error::CapacityExceeded { .. } => RunStatus::CapacityExceeded,
            _ => RunStatus::Error,
        };
        record.message = Some(e.to_string());
    }
    record
}

fn run_trajectory(
    truth: &Dag,
    selector: &mut Selector,
    budget: usize,
    timeout: Option<Duration>,
    record: &mut RunRecord,
) -> Result<()> {
    let total = truth.edge_count();
    let cpdag = cpdag_from_dag(truth);
    let mut oriented = cpdag.directed_count();
    let mut state = cpdag.without_directed();
    record.ratios.push(discovered_edge_ratio(total, oriented)?);
    for step in 0..budget {
        if state.undirected_count() == 0 {
            break;
        }
        let start = Instant::now();
        let chosen = selector.select(&state, budget - step);
        let elapsed = start.elapsed();
        record.total_seconds += elapsed.as_secs_f64();
        let action = chosen?;
        if let Some(limit) = timeout {
            if elapsed > limit {
                return Err(Error::Timeout {
                    seconds: elapsed.as_secs_f64(),
                });
            }
        }
        record.select_seconds.push(elapsed.as_secs_f64());
        let start = Instant::now();
        let outcome = apply_intervention(&state, truth, action)?;
        record.total_seconds += start.elapsed().as_secs_f64();
        oriented += outcome.oriented_count;
        state = outcome.next_state;
        record.ratios.push(discovered_edge_ratio(total, oriented)?);
    }
    Ok(())
}

/// Derives an independent stream seed from a base seed and an index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Evaluates `kind` on every graph; graph `i` gets id `i` and its own seed.
pub fn evaluate(kind: &StrategyKind, graphs: &[Dag], budget: usize, seed: u64) -> Result<Vec<RunRecord>> {
    if graphs.is_empty() {
        return Err(Error::InvalidConfig("no graphs to evaluate".into()));
    }
    graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut selector = Selector::new(kind.clone(), derive_seed(seed, i as u64))?;
            Ok(evaluate_graph(&i.to_string(), g, &mut selector, budget, None))
        })
        .collect()
}
