use super::Pdag;

/// Maximum-cardinality search over the undirected part of `g`, ties broken
/// by smallest id. Returns nodes in visit order.
pub fn mcs_order(g: &Pdag) -> Vec<usize> {
    let n = g.n();
    let mut weight = vec![0usize; n];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !visited[v])
            .max_by(|&a, &b| weight[a].cmp(&weight[b]).then(b.cmp(&a)))
            .expect("unvisited node remains");
        visited[v] = true;
        order.push(v);
        for u in g.undirected_neighbors(v) {
            if !visited[u] {
                weight[u] += 1;
            }
        }
    }
    order
}

/// `true` iff, for every node, its undirected neighbours that come *earlier*
/// in `order` form a clique. Read backwards, such an order eliminates each
/// node while its remaining neighbours are pairwise adjacent.
pub fn is_perfect_elimination_order(g: &Pdag, order: &[usize]) -> bool {
    let n = g.n();
    if order.len() != n {
        return false;
    }
    let mut pos = vec![usize::MAX; n];
    for (i, &v) in order.iter().enumerate() {
        if v >= n || pos[v] != usize::MAX {
            return false;
        }
        pos[v] = i;
    }
    order.iter().all(|&v| {
        let earlier: Vec<usize> = g.undirected_neighbors(v).filter(|&u| pos[u] < pos[v]).collect();
        earlier.iter().enumerate().all(|(i, &a)| {
            earlier[i + 1..].iter().all(|&b| g.is_undirected(a, b))
        })
    })
}

/// Chordality of the undirected part of `g`, via maximum-cardinality search
/// followed by elimination-order verification.
pub fn is_chordal(g: &Pdag) -> bool {
    is_perfect_elimination_order(g, &mcs_order(g))
}
