use super::{close_in_place, Dag, MeekSchedule, Pdag};
use crate::error::{Error, Result};

/// Result of one perfect intervention.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterventionOutcome {
    /// The post-intervention graph with every directed edge removed.
    pub next_state: Pdag,
    /// Number of edges that went from undirected to directed.
    pub oriented_count: usize,
    /// Newly oriented edges as `(from, to)`: incident edges first, then the
    /// ones derived by the Meek rules.
    pub oriented_edges: Vec<(usize, usize)>,
}

/// Intervenes on `v`: orients every undirected edge incident to `v` as in
/// `truth`, closes under the Meek rules and drops the directed edges.
pub fn apply_intervention(state: &Pdag, truth: &Dag, v: usize) -> Result<InterventionOutcome> {
    let n = state.n();
    if v >= n {
        return Err(Error::NodeOutOfRange { node: v, n });
    }
    if truth.n() != n {
        return Err(Error::InvalidGraph(format!(
            "state has {n} nodes but truth has {}",
            truth.n()
        )));
    }

    let mut work = state.clone();
    let mut oriented = Vec::new();
    for u in state.undirected_neighbors(v) {
        let edge = if truth.has_edge(u, v) {
            (u, v)
        } else if truth.has_edge(v, u) {
            (v, u)
        } else {
            return Err(Error::InvalidGraph(format!(
                "edge {u}-{v} is not in the ground-truth skeleton"
            )));
        };
        work.set_arrow(edge.0, edge.1);
        oriented.push(edge);
    }
    if !oriented.is_empty() {
        oriented.extend(close_in_place(&mut work, &MeekSchedule::default())?);
    }
    if let Some(&(from, to)) = oriented.iter().find(|&&(f, t)| !truth.has_edge(f, t)) {
        return Err(Error::InvalidState(format!(
            "derived {from}->{to} contradicts the ground truth"
        )));
    }

    Ok(InterventionOutcome {
        next_state: work.without_directed(),
        oriented_count: oriented.len(),
        oriented_edges: oriented,
    })
}

/// Fraction of edges whose orientation is known.
pub fn discovered_edge_ratio(total_edges: usize, oriented_so_far: usize) -> Result<f64> {
    if total_edges == 0 {
        return Err(Error::UndefinedRatio);
    }
    if oriented_so_far > total_edges {
        return Err(Error::InvalidState(format!(
            "{oriented_so_far} oriented edges exceed the total of {total_edges}"
        )));
    }
    Ok(oriented_so_far as f64 / total_edges as f64)
}
