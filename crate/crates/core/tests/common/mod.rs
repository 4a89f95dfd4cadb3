//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use causal_design::graph::{Dag, Pdag};
use rand::Rng;

/// Random DAG: random topological order, each forward pair an edge with
/// probability `p`.
pub fn random_dag<R: Rng>(n: usize, p: f64, rng: &mut R) -> Dag {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((order[i], order[j]));
            }
        }
    }
    Dag::from_edges(n, &edges).unwrap()
}

/// Every DAG on `n` labelled nodes.
pub fn all_dags(n: usize) -> Vec<Dag> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut out = Vec::new();
    // Each pair: absent, i->j or j->i.
    let total = 3usize.pow(pairs.len() as u32);
    for mut code in 0..total {
        let mut edges = Vec::new();
        for &(i, j) in &pairs {
            match code % 3 {
                1 => edges.push((i, j)),
                2 => edges.push((j, i)),
                _ => {}
            }
            code /= 3;
        }
        if let Ok(d) = Dag::from_edges(n, &edges) {
            out.push(d);
        }
    }
    out
}

fn acyclic(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut indeg = vec![0; n];
    for &(_, t) in edges {
        indeg[t] += 1;
    }
    let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = stack.pop() {
        seen += 1;
        for &(f, t) in edges {
            if f == v {
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    stack.push(t);
                }
            }
        }
    }
    seen == n
}

/// Unshielded colliders `(a, c, b)` with `a < b` among the listed arrows.
pub fn colliders(n: usize, arrows: &[(usize, usize)], adjacent: impl Fn(usize, usize) -> bool) -> BTreeSet<(usize, usize, usize)> {
    let mut out = BTreeSet::new();
    for c in 0..n {
        let ps: Vec<usize> = arrows.iter().filter(|&&(_, t)| t == c).map(|&(f, _)| f).collect();
        for &a in &ps {
            for &b in &ps {
                if a < b && !adjacent(a, b) {
                    out.insert((a, c, b));
                }
            }
        }
    }
    out
}

/// All DAGs that keep `g`'s arrows, orient its undirected edges, are acyclic
/// and have exactly the colliders already present in `g`.
pub fn brute_extensions(g: &Pdag) -> Vec<Dag> {
    let n = g.n();
    let fixed: Vec<(usize, usize)> = g.directed_edges().collect();
    let free: Vec<(usize, usize)> = g.undirected_edges().collect();
    let base = colliders(n, &fixed, |a, b| g.adjacent(a, b));
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << free.len()) {
        let mut arrows = fixed.clone();
        for (i, &(u, v)) in free.iter().enumerate() {
            arrows.push(if mask >> i & 1 == 1 { (u, v) } else { (v, u) });
        }
        if !acyclic(n, &arrows) {
            continue;
        }
        if colliders(n, &arrows, |a, b| g.adjacent(a, b)) != base {
            continue;
        }
        out.push(Dag::from_edges(n, &arrows).unwrap());
    }
    out
}

/// Members of the Markov equivalence class of `d`: same skeleton and the
/// same unshielded colliders.
pub fn brute_mec(d: &Dag) -> Vec<Dag> {
    let skeleton = d.skeleton();
    let target = colliders(d.n(), &d.edges().collect::<Vec<_>>(), |a, b| d.adjacent(a, b));
    let pairs: Vec<(usize, usize)> = skeleton.undirected_edges().collect();
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << pairs.len()) {
        let arrows: Vec<(usize, usize)> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(u, v))| if mask >> i & 1 == 1 { (u, v) } else { (v, u) })
            .collect();
        if acyclic(d.n(), &arrows) && colliders(d.n(), &arrows, |a, b| d.adjacent(a, b)) == target {
            out.push(Dag::from_edges(d.n(), &arrows).unwrap());
        }
    }
    out
}

/// Arrows shared by every DAG in `set`.
pub fn invariant_arrows(set: &[Dag]) -> BTreeSet<(usize, usize)> {
    let mut common: BTreeSet<(usize, usize)> = set[0].edges().collect();
    for d in &set[1..] {
        let e: BTreeSet<(usize, usize)> = d.edges().collect();
        common = common.intersection(&e).copied().collect();
    }
    common
}

/// The arrows at `v` in `d`, sorted.
pub fn incident_pattern(d: &Dag, v: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = d.edges().filter(|&(f, t)| f == v || t == v).collect();
    out.sort_unstable();
    out
}

/// Per-block relative error between the analytic TD-loss gradient and central
/// differences with step `h`, on one random instance built from `seed`.
pub fn gradient_check(seed: u64, h: f64) -> [f64; 5] {
    use causal_design::graph::cpdag_from_dag;
    use causal_design::neural::{td_loss_frozen, td_loss_grad, ModelParams};
    use causal_design::rl::{run_episode, Transition};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let p = rng.random_range(3..6);
    let q = rng.random_range(1..3);
    let layers = rng.random_range(1..4);
    let params = ModelParams::init(p, q, layers, &mut rng);
    // Two episodes on different random graphs; keep the transitions whose
    // state still has undirected edges.
    let mut transitions: Vec<Transition> = Vec::new();
    while transitions.is_empty() {
        for _ in 0..2 {
            let n = rng.random_range(4..8);
            let truth = random_dag(n, 0.6, &mut rng);
            if cpdag_from_dag(&truth).undirected_count() == 0 {
                continue;
            }
            transitions.extend(run_episode(&truth, &params, 1.0, 3, &mut rng).unwrap());
        }
    }
    let batch: Vec<&Transition> = transitions.iter().collect();
    let gamma = 0.9;
    let (_, grad) = td_loss_grad(&batch, &params, gamma).unwrap();

    let mut errors = [0.0; 5];
    for (b, err) in errors.iter_mut().enumerate() {
        let len = params.blocks()[b].len();
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut f2 = 0.0;
        for i in 0..len {
            let mut plus = params.clone();
            plus.blocks_mut()[b][i] += h;
            let mut minus = params.clone();
            minus.blocks_mut()[b][i] -= h;
            let fd = (td_loss_frozen(&batch, &plus, &params, gamma).unwrap()
                - td_loss_frozen(&batch, &minus, &params, gamma).unwrap())
                / (2.0 * h);
            let an = grad.blocks()[b][i];
            diff2 += (an - fd).powi(2);
            a2 += an * an;
            f2 += fd * fd;
        }
        let scale = a2.sqrt().max(f2.sqrt());
        *err = if scale < 1e-10 { diff2.sqrt() } else { diff2.sqrt() / scale };
    }
    errors
}
