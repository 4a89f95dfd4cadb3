use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Pdag;
use crate::error::{Error, Result};

/// One of the four Meek orientation rules. Each rule orients an undirected
/// edge `a - b` into `a -> b`:
///
/// * `R1`: `c -> a`, with `c` and `b` non-adjacent.
/// * `R2`: `a -> c -> b`.
/// * `R3`: `a - c`, `a - d`, `c -> b`, `d -> b`, with `c` and `d` non-adjacent.
/// * `R4`: `a - c`, `c -> d`, `d -> b`, with `c` and `b` non-adjacent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeekRule {
    R1,
    R2,
    R3,
    R4,
}

/// Scheduling knobs for the closure work-list. The fixed point does not
/// depend on them; they exist so that independence can be tested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeekSchedule {
    pub rules: [MeekRule; 4],
    /// Shuffle the initial work-list with this seed.
    pub shuffle_seed: Option<u64>,
}

impl Default for MeekSchedule {
    fn default() -> Self {
        Self {
            rules: [MeekRule::R1, MeekRule::R2, MeekRule::R3, MeekRule::R4],
            shuffle_seed: None,
        }
    }
}

/// Closes `g` under the Meek rules. Directed edges of `g` are kept as they are.
pub fn meek_closure(g: &Pdag) -> Result<Pdag> {
    meek_closure_with(g, &MeekSchedule::default())
}

pub fn meek_closure_with(g: &Pdag, schedule: &MeekSchedule) -> Result<Pdag> {
    let mut out = g.clone();
    close_in_place(&mut out, schedule)?;
    Ok(out)
}

fn rule_orients(g: &Pdag, rule: MeekRule, a: usize, b: usize) -> bool {
    let n = g.n();
    match rule {
        MeekRule::R1 => (0..n).any(|c| g.has_arrow(c, a) && c != b && !g.adjacent(c, b)),
        MeekRule::R2 => (0..n).any(|c| g.has_arrow(a, c) && g.has_arrow(c, b)),
        MeekRule::R3 => {
            let cs: Vec<usize> = (0..n)
                .filter(|&c| g.is_undirected(a, c) && g.has_arrow(c, b))
                .collect();
            cs.iter()
                .enumerate()
                .any(|(i, &c)| cs[i + 1..].iter().any(|&d| !g.adjacent(c, d)))
        }
        MeekRule::R4 => (0..n).filter(|&d| g.has_arrow(d, b)).any(|d| {
            (0..n).any(|c| c != b && g.has_arrow(c, d) && g.is_undirected(a, c) && !g.adjacent(c, b))
        }),
    }
}

fn forced(g: &Pdag, rules: &[MeekRule; 4], a: usize, b: usize) -> bool {
    rules.iter().any(|&r| rule_orients(g, r, a, b))
}

/// Work-list fixed point. Returns the newly oriented edges as `(from, to)` in
/// the order they were oriented. Fails when the result contains a directed
/// cycle or a collider that involves a newly oriented edge, either of which
/// means the input had no consistent extension.
pub(crate) fn close_in_place(g: &mut Pdag, schedule: &MeekSchedule) -> Result<Vec<(usize, usize)>> {
    let n = g.n();
    let mut initial: Vec<(usize, usize)> = g.undirected_edges().collect();
    if initial.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(seed) = schedule.shuffle_seed {
        initial.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut queued = vec![false; n * n];
    let mut queue = VecDeque::with_capacity(initial.len());
    for (u, v) in initial {
        queued[u * n + v] = true;
        queue.push_back((u, v));
    }

    let mut oriented = Vec::new();
    while let Some((u, v)) = queue.pop_front() {
        queued[u * n + v] = false;
        if !g.is_undirected(u, v) {
            continue;
        }
        let (from, to) = if forced(g, &schedule.rules, u, v) {
            (u, v)
        } else if forced(g, &schedule.rules, v, u) {
            (v, u)
        } else {
            continue;
        };
        g.set_arrow(from, to);
        oriented.push((from, to));

        // Any undirected edge touching the closed neighbourhoods of the two
        // endpoints may now satisfy a premise.
        let mut touched = vec![false; n];
        touched[from] = true;
        touched[to] = true;
        for w in g.neighbors(from).chain(g.neighbors(to)).collect::<Vec<_>>() {
            touched[w] = true;
        }
        for x in (0..n).filter(|&x| touched[x]) {
            for y in g.undirected_neighbors(x).collect::<Vec<_>>() {
                let (lo, hi) = (x.min(y), x.max(y));
                if !queued[lo * n + hi] {
                    queued[lo * n + hi] = true;
                    queue.push_back((lo, hi));
                }
            }
        }
    }

    for &(from, to) in &oriented {
        if let Some(z) = g.parents(to).find(|&z| z != from && !g.adjacent(z, from)) {
            return Err(Error::InvalidState(format!(
                "orienting {from}->{to} creates collider with {z}->{to}"
            )));
        }
    }
    if !oriented.is_empty() && g.has_directed_cycle() {
        return Err(Error::InvalidState("orientation produced a directed cycle".into()));
    }
    Ok(oriented)
}
