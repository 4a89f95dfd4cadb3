//! Exact Markov-equivalence-class machinery by enumeration.
//!
//! Consistent extensions are enumerated per chain component by backtracking
//! over the component's undirected edges, pruning any partial orientation that
//! closes a directed cycle or creates a collider between non-adjacent
//! parents. Components of a chain graph are independent, so the class is the
//! Cartesian product of the per-component sets.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{chain_components, mcs_order, Dag, Pdag};

/// Default enumeration cap.
pub const DEFAULT_CAP: u64 = 100_000;

/// Extensions of one chain component, stored as orientation bits over the
/// component's undirected edges (`true` means `lo -> hi`).
#[derive(Debug, Clone)]
pub struct ComponentExtensions {
    nodes: Vec<usize>,
    edges: Vec<(usize, usize)>,
    bits: Vec<bool>,
    len: usize,
}

impl ComponentExtensions {
    /// Enumerates every consistent orientation of the undirected edges inside
    /// `component` (a chain component of `g`).
    pub fn enumerate(g: &Pdag, component: &[usize], cap: u64) -> Result<Self> {
        check_chain_graph(g)?;
        let mut search = Search::new(g, component, cap);
        let mut bits = Vec::new();
        search.run(&mut |b| bits.extend_from_slice(b))?;
        let len = search.count as usize;
        let edges = search.global_edges();
        Ok(Self {
            nodes: component.to_vec(),
            edges,
            bits,
            len,
        })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Undirected edges of the component as `(lo, hi)`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Orientation bits of extension `i`, aligned with [`Self::edges`].
    pub fn orientation(&self, i: usize) -> &[bool] {
        let m = self.edges.len();
        &self.bits[i * m..(i + 1) * m]
    }

    /// Extension `i` as `(from, to)` pairs.
    pub fn arrows(&self, i: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges
            .iter()
            .zip(self.orientation(i))
            .map(|(&(lo, hi), &fwd)| if fwd { (lo, hi) } else { (hi, lo) })
    }

    /// Outcome-pattern key of `v` in extension `i`.
    pub fn pattern(&self, i: usize, v: usize) -> String {
        pattern_key(
            v,
            self.arrows(i)
                .filter(|&(f, t)| f == v || t == v)
                .collect::<Vec<_>>(),
        )
    }

    /// Extension indices grouped by the orientation pattern of `v`'s edges.
    pub fn partition(&self, v: usize) -> BTreeMap<String, Vec<usize>> {
        self.cells(v)
            .into_iter()
            .map(|members| (self.pattern(members[0], v), members))
            .collect()
    }

    /// The cells of [`Self::partition`] without their keys, in no particular
    /// order.
    pub fn cells(&self, v: usize) -> Vec<Vec<usize>> {
        let incident: Vec<usize> = (0..self.edges.len())
            .filter(|&e| self.edges[e].0 == v || self.edges[e].1 == v)
            .collect();
        let mut by_bits: HashMap<Vec<bool>, Vec<usize>> = HashMap::new();
        let mut key = Vec::with_capacity(incident.len());
        for i in 0..self.len {
            let bits = self.orientation(i);
            key.clear();
            key.extend(incident.iter().map(|&e| bits[e]));
            match by_bits.get_mut(&key) {
                Some(members) => members.push(i),
                None => {
                    by_bits.insert(key.clone(), vec![i]);
                }
            }
        }
        by_bits.into_values().collect()
    }

    /// Number of component edges oriented the same way in every listed
    /// extension.
    pub fn invariant_count(&self, members: &[usize]) -> usize {
        let Some((&first, rest)) = members.split_first() else {
            return 0;
        };
        let reference = self.orientation(first);
        let mut varies = vec![false; self.edges.len()];
        for &i in rest {
            for ((v, &a), &b) in varies.iter_mut().zip(reference).zip(self.orientation(i)) {
                *v |= a != b;
            }
        }
        varies.iter().filter(|&&v| !v).count()
    }
}

/// Canonical key for the orientations of the edges incident to `v`:
/// `"u->v"` / `"v->u"` terms sorted by the other endpoint, comma separated.
pub fn pattern_key(v: usize, mut incident: Vec<(usize, usize)>) -> String {
    incident.sort_by_key(|&(f, t)| if f == v { t } else { f });
    incident
        .iter()
        .map(|(f, t)| format!("{f}->{t}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Counts the extensions of `component` without materialising them.
pub fn count_component(g: &Pdag, component: &[usize], cap: u64) -> Result<u64> {
    check_chain_graph(g)?;
    let mut search = Search::new(g, component, cap);
    search.run(&mut |_| {})?;
    Ok(search.count)
}

/// A base graph together with all of its consistent DAG extensions.
#[derive(Debug, Clone)]
pub struct ExtensionSet {
    pub base: Pdag,
    pub extensions: Vec<Dag>,
}

impl ExtensionSet {
    pub fn len(&self) -> usize {
        self.extensions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.extensions.is_empty()
    }

    /// Edges oriented identically in every extension, as `(from, to)`, sorted.
    pub fn invariant_edges(&self) -> Vec<(usize, usize)> {
        let Some(first) = self.extensions.first() else {
            return Vec::new();
        };
        let mut out: Vec<(usize, usize)> = first
            .edges()
            .filter(|&(f, t)| self.extensions.iter().all(|d| d.has_edge(f, t)))
            .collect();
        out.sort_unstable();
        out
    }
}

/// All consistent extensions of the chain graph `g`, in deterministic order.
pub fn enumerate_extensions(g: &Pdag, cap: u64) -> Result<ExtensionSet> {
    let parts = enumerate_components(g, cap)?;
    let total = product(parts.iter().map(|p| p.len() as u64), cap)?;
    let fixed: Vec<(usize, usize)> = g.directed_edges().collect();

    let mut extensions = Vec::with_capacity(total as usize);
    let mut idx = vec![0usize; parts.len()];
    for _ in 0..total {
        let mut edges = fixed.clone();
        for (p, &i) in parts.iter().zip(&idx) {
            edges.extend(p.arrows(i));
        }
        extensions.push(Dag::from_edges(g.n(), &edges)?);
        // Odometer, last component fastest.
        for k in (0..parts.len()).rev() {
            idx[k] += 1;
            if idx[k] < parts[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(ExtensionSet {
        base: g.clone(),
        extensions,
    })
}

/// Size of the class represented by `g`.
pub fn mec_size(g: &Pdag, cap: u64) -> Result<u64> {
    check_chain_graph(g)?;
    let mut total = 1u64;
    for comp in chain_components(g).iter().filter(|c| c.len() > 1) {
        let c = count_component(g, comp, cap)?;
        total = total.checked_mul(c).filter(|&t| t <= cap).ok_or(Error::CapacityExceeded { cap })?;
    }
    Ok(total)
}

/// Number of extensions restricted to the chain components of `g` that lie
/// inside `nodes`. Zero when `g` admits no extension at all.
pub fn mec_size_within(g: &Pdag, nodes: &[usize], cap: u64) -> Result<u64> {
    check_chain_graph(g)?;
    let mut total = 1u64;
    for comp in chain_components(g)
        .iter()
        .filter(|c| c.len() > 1 && nodes.contains(&c[0]))
    {
        let c = count_component(g, comp, cap)?;
        total = total.checked_mul(c).filter(|&t| t <= cap).ok_or(Error::CapacityExceeded { cap })?;
    }
    Ok(total)
}

/// Uniformly random member of the class of `g`.
pub fn sample_uniform<R: Rng + ?Sized>(g: &Pdag, rng: &mut R, cap: u64) -> Result<Dag> {
    Ok(UniformSampler::new(g, cap)?.sample(rng))
}

/// Draws repeatedly from one class, enumerating it once.
#[derive(Debug, Clone)]
pub struct UniformSampler {
    n: usize,
    fixed: Vec<(usize, usize)>,
    parts: Vec<ComponentExtensions>,
}

impl UniformSampler {
    pub fn new(g: &Pdag, cap: u64) -> Result<Self> {
        let parts = enumerate_components(g, cap)?;
        product(parts.iter().map(|p| p.len() as u64), cap)?;
        Ok(Self {
            n: g.n(),
            fixed: g.directed_edges().collect(),
            parts,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Dag {
        let mut edges = self.fixed.clone();
        for p in &self.parts {
            let i = rng.random_range(0..p.len());
            edges.extend(p.arrows(i));
        }
        Dag::from_edges(self.n, &edges).expect("extensions are acyclic")
    }
}

/// Extensions grouped by the orientation pattern of one node's edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomePartition {
    pub node: usize,
    /// Pattern key to indices into the extension list.
    pub cells: BTreeMap<String, Vec<usize>>,
}

impl OutcomePartition {
    pub fn cell_sizes(&self) -> Vec<usize> {
        self.cells.values().map(Vec::len).collect()
    }
}

/// Partition of an already enumerated extension set by the pattern of `v`'s
/// undirected edges in the base graph.
pub fn partition_by_outcome(set: &ExtensionSet, v: usize) -> OutcomePartition {
    let nbrs: Vec<usize> = set.base.undirected_neighbors(v).collect();
    let mut cells: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, dag) in set.extensions.iter().enumerate() {
        let incident = nbrs
            .iter()
            .map(|&u| if dag.has_edge(u, v) { (u, v) } else { (v, u) })
            .collect();
        cells.entry(pattern_key(v, incident)).or_default().push(i);
    }
    OutcomePartition { node: v, cells }
}

pub fn outcome_partition(g: &Pdag, v: usize, cap: u64) -> Result<OutcomePartition> {
    if v >= g.n() {
        return Err(Error::NodeOutOfRange { node: v, n: g.n() });
    }
    Ok(partition_by_outcome(&enumerate_extensions(g, cap)?, v))
}

fn enumerate_components(g: &Pdag, cap: u64) -> Result<Vec<ComponentExtensions>> {
    chain_components(g)
        .iter()
        .filter(|c| c.len() > 1)
        .map(|c| ComponentExtensions::enumerate(g, c, cap))
        .collect()
}

fn product(sizes: impl Iterator<Item = u64>, cap: u64) -> Result<u64> {
    let mut total = 1u64;
    for s in sizes {
        total = total.checked_mul(s).filter(|&t| t <= cap).ok_or(Error::CapacityExceeded { cap })?;
    }
    Ok(total)
}

fn check_chain_graph(g: &Pdag) -> Result<()> {
    if g.has_partially_directed_cycle() {
        return Err(Error::InvalidGraph("graph has a partially directed cycle".into()));
    }
    Ok(())
}

/// Backtracking state over one component in local ids.
struct Search {
    k: usize,
    global: Vec<usize>,
    adjacent: Vec<bool>,
    // arrow[i * k + j]: local i -> j chosen so far.
    arrow: Vec<bool>,
    // forbidden[i * k + j]: j has a fixed parent outside the component that
    // is not adjacent to i, so i -> j would create a collider.
    forbidden: Vec<bool>,
    edges: Vec<(usize, usize)>,
    bits: Vec<bool>,
    cap: u64,
    count: u64,
    stack: Vec<usize>,
    seen: Vec<bool>,
}

impl Search {
    fn new(g: &Pdag, component: &[usize], cap: u64) -> Self {
        let k = component.len();
        let mut local = vec![usize::MAX; g.n()];
        for (i, &v) in component.iter().enumerate() {
            local[v] = i;
        }
        let mut adjacent = vec![false; k * k];
        let mut sub = Pdag::new(k);
        for (i, &u) in component.iter().enumerate() {
            for (j, &v) in component.iter().enumerate() {
                if i < j && g.is_undirected(u, v) {
                    adjacent[i * k + j] = true;
                    adjacent[j * k + i] = true;
                    sub.set_undirected(i, j);
                }
            }
        }
        let mut forbidden = vec![false; k * k];
        for (j, &v) in component.iter().enumerate() {
            for z in g.parents(v) {
                for (i, &u) in component.iter().enumerate() {
                    if i != j && !g.adjacent(z, u) {
                        forbidden[i * k + j] = true;
                    }
                }
            }
        }
        // Decide edges node by node along a maximum-cardinality search order
        // so that conflicts surface early.
        let order = mcs_order(&sub);
        let mut pos = vec![0usize; k];
        for (p, &v) in order.iter().enumerate() {
            pos[v] = p;
        }
        let mut edges: Vec<(usize, usize)> = sub.undirected_edges().collect();
        edges.sort_by_key(|&(a, b)| (pos[a].max(pos[b]), pos[a].min(pos[b])));

        Self {
            k,
            global: component.to_vec(),
            adjacent,
            arrow: vec![false; k * k],
            forbidden,
            bits: vec![false; edges.len()],
            edges,
            cap,
            count: 0,
            stack: Vec::with_capacity(k),
            seen: vec![false; k],
        }
    }

    /// Edges in global ids `(lo, hi)`, aligned with the emitted bits.
    fn global_edges(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .map(|&(a, b)| {
                let (u, v) = (self.global[a], self.global[b]);
                (u.min(v), u.max(v))
            })
            .collect()
    }

    fn run(&mut self, visit: &mut dyn FnMut(&[bool])) -> Result<()> {
        // Emitted bits are relative to global (lo, hi); record which local
        // edges are flipped with respect to that.
        let flipped: Vec<bool> = self
            .edges
            .iter()
            .map(|&(a, b)| self.global[a] > self.global[b])
            .collect();
        let mut out = vec![false; self.edges.len()];
        let mut emit = |bits: &[bool]| {
            for ((o, &b), &f) in out.iter_mut().zip(bits).zip(&flipped) {
                *o = b != f;
            }
            visit(&out);
        };
        self.recurse(0, &mut emit)
    }

    fn recurse(&mut self, i: usize, visit: &mut dyn FnMut(&[bool])) -> Result<()> {
        if i == self.edges.len() {
            self.count += 1;
            if self.count > self.cap {
                return Err(Error::CapacityExceeded { cap: self.cap });
            }
            visit(&self.bits);
            return Ok(());
        }
        let (a, b) = self.edges[i];
        for (from, to, bit) in [(a, b, true), (b, a, false)] {
            if self.allowed(from, to) {
                self.arrow[from * self.k + to] = true;
                self.bits[i] = bit;
                let r = self.recurse(i + 1, visit);
                self.arrow[from * self.k + to] = false;
                r?;
            }
        }
        Ok(())
    }

    fn allowed(&mut self, from: usize, to: usize) -> bool {
        let k = self.k;
        if self.forbidden[from * k + to] {
            return false;
        }
        // Collider with a parent already chosen inside the component.
        if (0..k).any(|z| z != from && self.arrow[z * k + to] && !self.adjacent[z * k + from]) {
            return false;
        }
        // Cycle: is `from` already reachable from `to`?
        self.seen.iter_mut().for_each(|s| *s = false);
        self.stack.clear();
        self.stack.push(to);
        self.seen[to] = true;
        while let Some(x) = self.stack.pop() {
            for y in 0..k {
                if self.arrow[x * k + y] && !self.seen[y] {
                    if y == from {
                        return false;
                    }
                    self.seen[y] = true;
                    self.stack.push(y);
                }
            }
        }
        true
    }
}
