//! Intervention-target selection policies.
//!
//! Every policy picks from [`action_set`] and breaks ties by lowest node id.
//! The class-based heuristics score a candidate from its own chain component
//! only; components are independent, so nothing outside the component changes
//! the comparison.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{apply_intervention, chain_components, close_in_place, Dag, MeekSchedule, Pdag};
use crate::mec::{
    count_component, enumerate_extensions, mec_size_within, pattern_key, ComponentExtensions,
    ExtensionSet, UniformSampler, DEFAULT_CAP,
};
use crate::neural::{score_all, ModelParams};

/// How the average heuristic computes its expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AverageMode {
    /// Exact expectation over the enumerated class.
    #[default]
    Exact,
    /// Mean over uniform draws from the class.
    MonteCarlo,
}

/// A policy together with its settings.
#[derive(Debug, Clone)]
pub enum StrategyKind {
    Random,
    Entropy { cap: u64 },
    Minimax { cap: u64 },
    Average { samples: usize, cap: u64, mode: AverageMode },
    Learned { params: Arc<ModelParams> },
    /// Plans over the remaining intervention budget, capped at `horizon`.
    Optimal { horizon: usize, cap: u64 },
}

impl StrategyKind {
    pub fn tag(&self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Entropy { .. } => "entropy",
            StrategyKind::Minimax { .. } => "minimax",
            StrategyKind::Average { .. } => "average",
            StrategyKind::Learned { .. } => "learned",
            StrategyKind::Optimal { .. } => "optimal",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StrategyKind::Entropy { cap }
            | StrategyKind::Minimax { cap }
            | StrategyKind::Average { cap, .. }
            | StrategyKind::Optimal { cap, .. }
                if *cap == 0 =>
            {
                Err(Error::InvalidConfig(format!("{} needs cap >= 1", self.tag())))
            }
            StrategyKind::Average { samples: 0, mode: AverageMode::MonteCarlo, .. } => {
                Err(Error::InvalidConfig("average needs samples >= 1".into()))
            }
            StrategyKind::Learned { params } => params.validate(),
            _ => Ok(()),
        }
    }

    /// Builds a default-configured strategy from its tag. `learned` needs
    /// parameters and is not constructible this way.
    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "random" => StrategyKind::Random,
            "entropy" => StrategyKind::Entropy { cap: DEFAULT_CAP },
            "minimax" => StrategyKind::Minimax { cap: DEFAULT_CAP },
            "average" => StrategyKind::Average {
                samples: 200,
                cap: DEFAULT_CAP,
                mode: AverageMode::Exact,
            },
            "optimal" => StrategyKind::Optimal {
                horizon: 5,
                cap: DEFAULT_CAP,
            },
            other => return Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        })
    }
}

/// Nodes with at least one undirected incident edge, ascending.
pub fn action_set(state: &Pdag) -> Vec<usize> {
    (0..state.n())
        .filter(|&v| state.undirected_neighbors(v).next().is_some())
        .collect()
}

fn non_empty_actions(state: &Pdag) -> Result<Vec<usize>> {
    let actions = action_set(state);
    if actions.is_empty() {
        Err(Error::NoAction)
    } else {
        Ok(actions)
    }
}

/// Uniform choice from the action set.
pub fn select_random<R: Rng + ?Sized>(state: &Pdag, rng: &mut R) -> Result<usize> {
    let actions = non_empty_actions(state)?;
    Ok(*actions.choose(rng).expect("non-empty"))
}

/// Argmax of the learned scores over the action set.
pub fn select_learned(state: &Pdag, params: &ModelParams) -> Result<usize> {
    let actions = non_empty_actions(state)?;
    let scores = score_all(state, params)?;
    let mut best = actions[0];
    for &a in &actions[1..] {
        if scores[a] > scores[best] {
            best = a;
        }
    }
    Ok(best)
}

/// Sizes of the outcome classes of intervening on `v`, computed by orienting
/// each candidate parent set of `v`, closing under the Meek rules and counting
/// the refined class inside `component`. Candidate parent sets are cliques of
/// `v`'s undirected neighbourhood (anything else is a new collider).
/// Inconsistent candidates are dropped. With `limit`, stops and returns `None`
/// as soon as one class exceeds it.
fn outcome_class_sizes(
    state: &Pdag,
    component: &[usize],
    v: usize,
    cap: u64,
    limit: Option<u64>,
) -> Result<Option<Vec<u64>>> {
    let nbrs: Vec<usize> = state.undirected_neighbors(v).collect();
    let mut sizes = Vec::new();
    for parents in neighbourhood_cliques(state, &nbrs) {
        let mut g = state.clone();
        for &u in &nbrs {
            if parents.contains(&u) {
                g.set_arrow(u, v);
            } else {
                g.set_arrow(v, u);
            }
        }
        if close_in_place(&mut g, &MeekSchedule::default()).is_err() {
            continue;
        }
        let local_cap = limit.map_or(cap, |l| l.min(cap));
        let count = match mec_size_within(&g, component, local_cap) {
            Ok(c) => c,
            Err(Error::CapacityExceeded { .. }) if local_cap < cap => return Ok(None),
            Err(Error::InvalidGraph(_)) => continue,
            Err(e) => return Err(e),
        };
        if count > 0 {
            sizes.push(count);
        }
    }
    sizes.sort_unstable();
    Ok(Some(sizes))
}

/// All cliques (including the empty set) of the subgraph induced by `nodes`
/// on undirected edges, each sorted ascending.
fn neighbourhood_cliques(state: &Pdag, nodes: &[usize]) -> Vec<Vec<usize>> {
    fn extend(state: &Pdag, nodes: &[usize], start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        out.push(current.clone());
        for i in start..nodes.len() {
            let u = nodes[i];
            if current.iter().all(|&w| state.is_undirected(w, u)) {
                current.push(u);
                extend(state, nodes, i + 1, current, out);
                current.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(state, nodes, 0, &mut Vec::new(), &mut out);
    out
}

fn components_by_node(state: &Pdag) -> Vec<Vec<usize>> {
    let mut of = vec![Vec::new(); state.n()];
    for comp in chain_components(state) {
        for &v in &comp {
            of[v] = comp.clone();
        }
    }
    of
}

/// Shannon entropy (natural log) of a class-size distribution.
pub fn partition_entropy(sizes: &[u64]) -> f64 {
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let total: u64 = sorted.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    -sorted
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / total;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Entropy of the outcome distribution for every candidate.
pub fn entropy_scores(state: &Pdag, cap: u64) -> Result<Vec<(usize, f64)>> {
    let actions = non_empty_actions(state)?;
    let comps = components_by_node(state);
    let mut comp_sizes: HashMap<usize, u64> = HashMap::new();
    actions
        .into_iter()
        .map(|v| {
            let comp = &comps[v];
            if !comp_sizes.contains_key(&comp[0]) {
                comp_sizes.insert(comp[0], count_component(state, comp, cap)?);
            }
            let sizes = outcome_class_sizes(state, comp, v, cap, None)?.expect("no limit");
            debug_assert_eq!(sizes.iter().sum::<u64>(), comp_sizes[&comp[0]]);
            Ok((v, partition_entropy(&sizes)))
        })
        .collect()
}

/// Candidate whose outcome distribution has the largest entropy.
pub fn select_entropy(state: &Pdag, cap: u64) -> Result<usize> {
    let scores = entropy_scores(state, cap)?;
    let mut best = scores[0];
    for &(v, h) in &scores[1..] {
        if h > best.1 {
            best = (v, h);
        }
    }
    Ok(best.0)
}

/// Candidate minimising the worst-case size of the remaining class.
///
/// Sizes are compared as fractions of the candidate's component class, which
/// orders candidates exactly like the worst-case size of the whole class.
/// A candidate is abandoned as soon as one of its outcome classes shows it
/// cannot beat the current best.
pub fn select_minimax(state: &Pdag, cap: u64) -> Result<usize> {
    let actions = non_empty_actions(state)?;
    let comps = components_by_node(state);
    let mut comp_sizes: HashMap<usize, u64> = HashMap::new();
    // (node, worst class size, component class size)
    let mut best: Option<(usize, u64, u64)> = None;
    for v in actions {
        let comp = &comps[v];
        let total = match comp_sizes.get(&comp[0]) {
            Some(&t) => t,
            None => {
                let t = count_component(state, comp, cap)?;
                comp_sizes.insert(comp[0], t);
                t
            }
        };
        // Beat best strictly: worst / total < best_worst / best_total.
        let limit = best.map(|(_, bw, bt)| {
            let num = bw as u128 * total as u128;
            ((num.saturating_sub(1)) / bt as u128).min(u64::MAX as u128) as u64
        });
        let Some(sizes) = outcome_class_sizes(state, comp, v, cap, limit)? else {
            continue;
        };
        let worst = sizes.last().copied().unwrap_or(0);
        let better = match best {
            None => true,
            Some((_, bw, bt)) => (worst as u128) * (bt as u128) < (bw as u128) * (total as u128),
        };
        if better {
            best = Some((v, worst, total));
        }
    }
    Ok(best.expect("at least one candidate survives").0)
}

/// Expected number of newly oriented edges when intervening on each candidate,
/// exact over the uniform class.
pub fn expected_oriented_exact(state: &Pdag, cap: u64) -> Result<Vec<(usize, f64)>> {
    let actions = non_empty_actions(state)?;
    let mut out = Vec::with_capacity(actions.len());
    let mut by_component: BTreeMap<usize, ComponentExtensions> = BTreeMap::new();
    let comps = components_by_node(state);
    for v in actions {
        let comp = &comps[v];
        if !by_component.contains_key(&comp[0]) {
            by_component.insert(comp[0], ComponentExtensions::enumerate(state, comp, cap)?);
        }
        let ext = &by_component[&comp[0]];
        // The class left after observing a pattern is exactly that cell, so
        // the edges oriented are the ones invariant across the cell.
        let weighted: u64 = ext
            .cells(v)
            .iter()
            .map(|members| (ext.invariant_count(members) * members.len()) as u64)
            .sum();
        out.push((v, weighted as f64 / ext.len() as f64));
    }
    Ok(out)
}

/// Expected newly oriented edges per candidate, averaged over `samples`
/// uniform draws from the class.
pub fn expected_oriented_sampled<R: Rng + ?Sized>(
    state: &Pdag,
    samples: usize,
    rng: &mut R,
    cap: u64,
) -> Result<Vec<(usize, f64)>> {
    let actions = non_empty_actions(state)?;
    let chain = state.without_directed();
    let sampler = UniformSampler::new(&chain, cap)?;
    let mut totals = vec![0usize; actions.len()];
    for _ in 0..samples {
        let truth = sampler.sample(rng);
        for (t, &v) in totals.iter_mut().zip(&actions) {
            *t += apply_intervention(state, &truth, v)?.oriented_count;
        }
    }
    Ok(actions
        .into_iter()
        .zip(totals)
        .map(|(v, t)| (v, t as f64 / samples.max(1) as f64))
        .collect())
}

/// Candidate maximising the expected number of newly oriented edges.
pub fn select_average<R: Rng + ?Sized>(
    state: &Pdag,
    samples: usize,
    mode: AverageMode,
    rng: &mut R,
    cap: u64,
) -> Result<usize> {
    let scores = match mode {
        AverageMode::Exact => expected_oriented_exact(state, cap)?,
        AverageMode::MonteCarlo => expected_oriented_sampled(state, samples, rng, cap)?,
    };
    let mut best = scores[0];
    for &(v, s) in &scores[1..] {
        if s > best.1 {
            best = (v, s);
        }
    }
    Ok(best.0)
}

/// Value of the best policy over a fixed budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalPlan {
    /// Maximum expected number of newly oriented edges.
    pub value: f64,
    /// An optimal first intervention; `None` for budget 0 or nothing to orient.
    pub action: Option<usize>,
}

/// Exhaustive expectimax over interventions, with the truth drawn uniformly
/// from `truth_set`, which must be the extension set of `state` (or of a graph
/// whose chain components are those of `state`).
///
/// After an intervention, the members consistent with the observation are
/// uniformly spread over the extensions of the next state, so values are
/// memoised on `(next state, remaining budget)`.
pub fn plan_optimal(state: &Pdag, truth_set: &ExtensionSet, budget: usize) -> Result<OptimalPlan> {
    let members: Vec<&Dag> = truth_set.extensions.iter().collect();
    if members.is_empty() {
        return Err(Error::InvalidState("empty truth set".into()));
    }
    let mut memo = HashMap::new();
    plan_rec(&state.without_directed(), &members, budget, &mut memo)
}

fn plan_rec(
    state: &Pdag,
    members: &[&Dag],
    budget: usize,
    memo: &mut HashMap<(Pdag, usize), OptimalPlan>,
) -> Result<OptimalPlan> {
    let actions = action_set(state);
    if budget == 0 || actions.is_empty() {
        return Ok(OptimalPlan {
            value: 0.0,
            action: None,
        });
    }
    if let Some(plan) = memo.get(&(state.clone(), budget)) {
        return Ok(*plan);
    }
    let mut best = OptimalPlan {
        value: f64::NEG_INFINITY,
        action: None,
    };
    for a in actions {
        let nbrs: Vec<usize> = state.undirected_neighbors(a).collect();
        let mut cells: BTreeMap<String, Vec<&Dag>> = BTreeMap::new();
        for &d in members {
            let incident = nbrs
                .iter()
                .map(|&u| if d.has_edge(u, a) { (u, a) } else { (a, u) })
                .collect();
            cells.entry(pattern_key(a, incident)).or_default().push(d);
        }
        let mut total = 0.0;
        for cell in cells.values() {
            let out = apply_intervention(state, cell[0], a)?;
            let future = plan_rec(&out.next_state, cell, budget - 1, memo)?;
            total += cell.len() as f64 * (out.oriented_count as f64 + future.value);
        }
        let value = total / members.len() as f64;
        if value > best.value + 1e-12 {
            best = OptimalPlan {
                value,
                action: Some(a),
            };
        }
    }
    memo.insert((state.clone(), budget), best);
    Ok(best)
}

/// A strategy bound to its random stream.
#[derive(Debug, Clone)]
pub struct Selector {
    kind: StrategyKind,
    rng: ChaCha8Rng,
}

impl Selector {
    pub fn new(kind: StrategyKind, seed: u64) -> Result<Self> {
        kind.validate()?;
        Ok(Self {
            kind,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn kind(&self) -> &StrategyKind {
        &self.kind
    }

    /// Picks the next intervention; `remaining` is the number of interventions
    /// left including this one (used by the planner).
    pub fn select(&mut self, state: &Pdag, remaining: usize) -> Result<usize> {
        match &self.kind {
            StrategyKind::Random => select_random(state, &mut self.rng),
            StrategyKind::Entropy { cap } => select_entropy(state, *cap),
            StrategyKind::Minimax { cap } => select_minimax(state, *cap),
            StrategyKind::Average { samples, cap, mode } => {
                select_average(state, *samples, *mode, &mut self.rng, *cap)
            }
            StrategyKind::Learned { params } => select_learned(state, params),
            StrategyKind::Optimal { horizon, cap } => {
                non_empty_actions(state)?;
                let set = enumerate_extensions(state, *cap)?;
                let plan = plan_optimal(state, &set, remaining.clamp(1, (*horizon).max(1)))?;
                plan.action.ok_or(Error::NoAction)
            }
        }
    }
}
