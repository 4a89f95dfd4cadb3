//! Mixed graphs and the structural algorithms over them.
//!
//! A [`Pdag`] stores at most one edge per unordered node pair together with a
//! three-state orientation tag. A [`Dag`] is a fully directed, acyclic graph
//! stored as per-node parent lists and serves as the ground truth that
//! interventions reveal.

mod chordal;
mod intervention;
mod io;
mod meek;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};

pub use chordal::{is_chordal, is_perfect_elimination_order, mcs_order};
pub use intervention::{apply_intervention, discovered_edge_ratio, InterventionOutcome};
pub use io::GraphJson;
pub use meek::{meek_closure, meek_closure_with, MeekRule, MeekSchedule};
pub(crate) use meek::close_in_place;

/// Orientation tag of an unordered pair `(lo, hi)` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orientation {
    Undirected,
    /// `lo -> hi`
    Forward,
    /// `hi -> lo`
    Backward,
}

/// Partially directed graph over nodes `0..n`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Pdag {
    n: usize,
    // Row-major n*n table; only entries with row < col are used.
    marks: Vec<Option<Orientation>>,
}

impl Pdag {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            marks: vec![None; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, u: usize, v: usize) -> usize {
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        lo * self.n + hi
    }

    fn check_pair(&self, u: usize, v: usize) -> Result<()> {
        for node in [u, v] {
            if node >= self.n {
                return Err(Error::NodeOutOfRange { node, n: self.n });
            }
        }
        if u == v {
            return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
        }
        Ok(())
    }

    /// Raw tag of the pair, relative to `(min(u,v), max(u,v))`.
    #[inline]
    pub fn mark(&self, u: usize, v: usize) -> Option<Orientation> {
        if u == v {
            return None;
        }
        self.marks[self.slot(u, v)]
    }

    #[inline]
    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.mark(u, v).is_some()
    }

    #[inline]
    pub fn is_undirected(&self, u: usize, v: usize) -> bool {
        self.mark(u, v) == Some(Orientation::Undirected)
    }

    /// `true` iff the graph contains `from -> to`.
    #[inline]
    pub fn has_arrow(&self, from: usize, to: usize) -> bool {
        match self.mark(from, to) {
            Some(Orientation::Forward) => from < to,
            Some(Orientation::Backward) => from > to,
            _ => false,
        }
    }

    pub fn add_undirected(&mut self, u: usize, v: usize) -> Result<()> {
        self.check_pair(u, v)?;
        let slot = self.slot(u, v);
        self.marks[slot] = Some(Orientation::Undirected);
        Ok(())
    }

    pub fn add_directed(&mut self, from: usize, to: usize) -> Result<()> {
        self.check_pair(from, to)?;
        self.set_arrow(from, to);
        Ok(())
    }

    pub fn remove_edge(&mut self, u: usize, v: usize) {
        if u != v && u < self.n && v < self.n {
            let slot = self.slot(u, v);
            self.marks[slot] = None;
        }
    }

    #[inline]
    pub(crate) fn set_arrow(&mut self, from: usize, to: usize) {
        let slot = self.slot(from, to);
        self.marks[slot] = Some(if from < to {
            Orientation::Forward
        } else {
            Orientation::Backward
        });
    }

    #[inline]
    pub(crate) fn set_undirected(&mut self, u: usize, v: usize) {
        let slot = self.slot(u, v);
        self.marks[slot] = Some(Orientation::Undirected);
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&u| self.adjacent(u, v))
    }

    pub fn undirected_neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&u| self.is_undirected(u, v))
    }

    pub fn parents(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&u| self.has_arrow(u, v))
    }

    pub fn children(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&u| self.has_arrow(v, u))
    }

    /// All edges as `(lo, hi, tag)` in lexicographic pair order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, Orientation)> + '_ {
        (0..self.n).flat_map(move |u| {
            (u + 1..self.n).filter_map(move |v| self.marks[u * self.n + v].map(|o| (u, v, o)))
        })
    }

    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges()
            .filter(|&(_, _, o)| o == Orientation::Undirected)
            .map(|(u, v, _)| (u, v))
    }

    /// Directed edges as `(from, to)` pairs.
    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges().filter_map(|(u, v, o)| match o {
            Orientation::Forward => Some((u, v)),
            Orientation::Backward => Some((v, u)),
            Orientation::Undirected => None,
        })
    }

    pub fn edge_count(&self) -> usize {
        self.marks.iter().filter(|m| m.is_some()).count()
    }

    pub fn undirected_count(&self) -> usize {
        self.marks
            .iter()
            .filter(|m| **m == Some(Orientation::Undirected))
            .count()
    }

    pub fn directed_count(&self) -> usize {
        self.edge_count() - self.undirected_count()
    }

    /// Copy of the graph with every directed edge deleted, leaving the
    /// chain components.
    pub fn without_directed(&self) -> Pdag {
        let marks = self
            .marks
            .iter()
            .map(|m| m.filter(|o| *o == Orientation::Undirected))
            .collect();
        Pdag { n: self.n, marks }
    }

    /// `true` iff both graphs have the same node count and the same adjacencies.
    pub fn same_skeleton(&self, other: &Pdag) -> bool {
        self.n == other.n
            && self
                .marks
                .iter()
                .zip(&other.marks)
                .all(|(a, b)| a.is_some() == b.is_some())
    }

    /// Detects a partially directed cycle: a closed walk using undirected
    /// edges in either direction and directed edges forwards, with at least
    /// one directed edge.
    pub fn has_partially_directed_cycle(&self) -> bool {
        let components = chain_components(self);
        let mut comp_of = vec![0; self.n];
        for (i, c) in components.iter().enumerate() {
            for &v in c {
                comp_of[v] = i;
            }
        }
        // Contract chain components; a partially directed cycle exists iff the
        // quotient has a directed cycle or a directed edge inside a component.
        let k = components.len();
        let mut adj = vec![BTreeSet::new(); k];
        for (from, to) in self.directed_edges() {
            let (a, b) = (comp_of[from], comp_of[to]);
            if a == b {
                return true;
            }
            adj[a].insert(b);
        }
        let mut indeg = vec![0usize; k];
        for outs in &adj {
            for &b in outs {
                indeg[b] += 1;
            }
        }
        let mut queue: VecDeque<usize> = (0..k).filter(|&c| indeg[c] == 0).collect();
        let mut seen = 0;
        while let Some(c) = queue.pop_front() {
            seen += 1;
            for &b in &adj[c] {
                indeg[b] -= 1;
                if indeg[b] == 0 {
                    queue.push_back(b);
                }
            }
        }
        seen != k
    }

    /// `true` iff the directed part alone contains a cycle.
    pub fn has_directed_cycle(&self) -> bool {
        let mut indeg = vec![0usize; self.n];
        for (_, to) in self.directed_edges() {
            indeg[to] += 1;
        }
        let mut queue: VecDeque<usize> = (0..self.n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop_front() {
            seen += 1;
            for c in self.children(v).collect::<Vec<_>>() {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        seen != self.n
    }
}

impl fmt::Debug for Pdag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pdag(n={}; ", self.n)?;
        let mut first = true;
        for (u, v, o) in self.edges() {
            if !first {
                write!(f, ", ")?;
            }
            first = false;
            match o {
                Orientation::Undirected => write!(f, "{u}-{v}")?,
                Orientation::Forward => write!(f, "{u}->{v}")?,
                Orientation::Backward => write!(f, "{v}->{u}")?,
            }
        }
        write!(f, ")")
    }
}

impl From<&Dag> for Pdag {
    fn from(dag: &Dag) -> Self {
        let mut g = Pdag::new(dag.n());
        for (from, to) in dag.edges() {
            g.set_arrow(from, to);
        }
        g
    }
}

/// Directed acyclic graph stored as per-node parent lists.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Dag {
    n: usize,
    parents: Vec<Vec<usize>>,
}

impl Dag {
    /// Builds a DAG from parent lists, rejecting self-parenting, duplicate
    /// parents, out-of-range ids and cycles. Parent lists are sorted.
    pub fn new(parents: Vec<Vec<usize>>) -> Result<Self> {
        let n = parents.len();
        let mut sorted = parents;
        for (v, ps) in sorted.iter_mut().enumerate() {
            ps.sort_unstable();
            for w in ps.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::InvalidGraph(format!(
                        "duplicate parent {} of node {v}",
                        w[0]
                    )));
                }
            }
            for &p in ps.iter() {
                if p >= n {
                    return Err(Error::NodeOutOfRange { node: p, n });
                }
                if p == v {
                    return Err(Error::InvalidGraph(format!("node {v} is its own parent")));
                }
            }
        }
        for v in 0..n {
            for &p in &sorted[v] {
                if sorted[p].contains(&v) {
                    return Err(Error::InvalidGraph(format!(
                        "both {p}->{v} and {v}->{p} present"
                    )));
                }
            }
        }
        let dag = Self { n, parents: sorted };
        if dag.topological_order().is_none() {
            return Err(Error::Cycle("parent lists contain a directed cycle".into()));
        }
        Ok(dag)
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut parents = vec![Vec::new(); n];
        for &(from, to) in edges {
            if to >= n {
                return Err(Error::NodeOutOfRange { node: to, n });
            }
            parents[to].push(from);
        }
        Self::new(parents)
    }

    /// Interprets a fully directed [`Pdag`] as a DAG.
    pub fn from_pdag(g: &Pdag) -> Result<Self> {
        if g.undirected_count() > 0 {
            return Err(Error::InvalidGraph("graph has undirected edges".into()));
        }
        Self::from_edges(g.n(), &g.directed_edges().collect::<Vec<_>>())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        to < self.n && self.parents[to].binary_search(&from).is_ok()
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.has_edge(u, v) || self.has_edge(v, u)
    }

    /// Edges as `(from, to)`, grouped by child in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(v, ps)| ps.iter().map(move |&p| (p, v)))
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// Kahn's algorithm with smallest-id-first tie-breaking; `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut children = vec![Vec::new(); self.n];
        let mut indeg = vec![0usize; self.n];
        for (p, c) in self.edges() {
            children[p].push(c);
            indeg[c] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..self.n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &c in &children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == self.n).then_some(order)
    }

    /// Undirected skeleton as a [`Pdag`].
    pub fn skeleton(&self) -> Pdag {
        let mut g = Pdag::new(self.n);
        for (p, c) in self.edges() {
            g.set_undirected(p, c);
        }
        g
    }

    /// `true` iff the underlying undirected graph is connected.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        chain_components(&self.skeleton()).len() == 1
    }
}

impl fmt::Debug for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dag(n={}; ", self.n)?;
        let edges: Vec<String> = self.edges().map(|(p, c)| format!("{p}->{c}")).collect();
        write!(f, "{})", edges.join(", "))
    }
}

/// Every collider `a -> c <- b` with `a`, `b` non-adjacent, as `(a, c, b)`
/// with `a < b`, sorted.
pub fn v_structures(dag: &Dag) -> Vec<(usize, usize, usize)> {
    let mut out = BTreeSet::new();
    for c in 0..dag.n() {
        let ps = dag.parents(c);
        for (i, &a) in ps.iter().enumerate() {
            for &b in &ps[i + 1..] {
                if !dag.adjacent(a, b) {
                    out.insert((a.min(b), c, a.max(b)));
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Essential graph of the DAG's Markov equivalence class: skeleton, colliders
/// oriented, then closed under the Meek rules.
pub fn cpdag_from_dag(dag: &Dag) -> Pdag {
    let mut g = dag.skeleton();
    for (a, c, b) in v_structures(dag) {
        g.set_arrow(a, c);
        g.set_arrow(b, c);
    }
    close_in_place(&mut g, &MeekSchedule::default())
        .expect("closure of a DAG's pattern is always consistent");
    g
}

/// Connected components of the undirected part, each sorted, ordered by
/// smallest member. Nodes without undirected edges are singletons.
pub fn chain_components(g: &Pdag) -> Vec<Vec<usize>> {
    let n = g.n();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for u in g.undirected_neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    comp.push(u);
                    queue.push_back(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pdag_edge_bookkeeping() {
        let mut g = Pdag::new(4);
        g.add_undirected(0, 1).unwrap();
        g.add_directed(3, 2).unwrap();
        assert!(g.is_undirected(1, 0));
        assert!(g.has_arrow(3, 2));
        assert!(!g.has_arrow(2, 3));
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.directed_edges().collect::<Vec<_>>(), vec![(3, 2)]);
        assert_eq!(g.without_directed().edge_count(), 1);
        assert!(matches!(g.add_undirected(1, 1), Err(Error::InvalidGraph(_))));
        assert!(matches!(
            g.add_undirected(0, 9),
            Err(Error::NodeOutOfRange { node: 9, .. })
        ));
    }

    #[test]
    fn dag_rejects_cycles_and_duplicates() {
        assert!(matches!(
            Dag::from_edges(3, &[(0, 1), (1, 2), (2, 0)]),
            Err(Error::Cycle(_))
        ));
        assert!(Dag::new(vec![vec![], vec![0, 0]]).is_err());
        assert!(Dag::new(vec![vec![0]]).is_err());
        let d = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(d.topological_order().unwrap(), vec![0, 1, 2]);
        assert!(d.is_connected());
    }

    #[test]
    fn v_structures_basic() {
        let collider = Dag::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        assert_eq!(v_structures(&collider), vec![(0, 2, 1)]);
        let chain = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(v_structures(&chain).is_empty());
        let shielded = Dag::from_edges(3, &[(0, 2), (1, 2), (0, 1)]).unwrap();
        assert!(v_structures(&shielded).is_empty());
    }

    #[test]
    fn chain_components_mixed() {
        let mut g = Pdag::new(4);
        g.add_undirected(0, 1).unwrap();
        g.add_directed(2, 3).unwrap();
        assert_eq!(chain_components(&g), vec![vec![0, 1], vec![2], vec![3]]);

        let dag = Dag::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(chain_components(&Pdag::from(&dag)).len(), 3);
    }

    #[test]
    fn cpdag_of_chain_and_single_edge() {
        let chain = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let g = cpdag_from_dag(&chain);
        assert_eq!(g.undirected_count(), 2);
        assert_eq!(g.directed_count(), 0);

        let single = Dag::from_edges(2, &[(0, 1)]).unwrap();
        assert!(cpdag_from_dag(&single).is_undirected(0, 1));
    }

    #[test]
    fn partially_directed_cycle_detection() {
        let mut g = Pdag::new(3);
        g.add_directed(0, 1).unwrap();
        g.add_undirected(1, 2).unwrap();
        g.add_undirected(2, 0).unwrap();
        assert!(g.has_partially_directed_cycle());
        let mut h = Pdag::new(3);
        h.add_directed(0, 1).unwrap();
        h.add_undirected(1, 2).unwrap();
        assert!(!h.has_partially_directed_cycle());
    }
}
