//! Graph-embedding Q-network with hand-derived gradients.
//!
//! Embedding, for `l = 1..=L`:
//!
//! ```text
//! h_v^l = relu(theta1 * W_v + theta2 * sum_{u in N(v)} h_u^{l-1})
//! ```
//!
//! with `W_v` the all-ones feature vector, and score
//!
//! ```text
//! Q(G, v) = theta3 . relu([theta4 * sum_u h_u^L ; theta5 * h_v^L])
//! ```
//!
//! `N(v)` is the undirected neighbourhood. Vector sums are accumulated in a
//! canonical (sorted) order so that nodes related by a graph automorphism get
//! bit-identical embeddings and scores.

use std::cmp::Ordering;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Pdag;
use crate::rl::Transition;
use crate::strategies::action_set;

pub const CHECKPOINT_VERSION: u32 = 1;

/// The five parameter blocks. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Embedding width.
    pub p: usize,
    /// Node-feature width.
    pub q: usize,
    /// Message-passing iterations.
    #[serde(rename = "L")]
    pub layers: usize,
    /// `p x q`
    pub theta1: Vec<f64>,
    /// `p x p`
    pub theta2: Vec<f64>,
    /// `2p`
    pub theta3: Vec<f64>,
    /// `p x p`
    pub theta4: Vec<f64>,
    /// `p x p`
    pub theta5: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    #[serde(flatten)]
    params: ModelParams,
}

impl ModelParams {
    pub fn zeros(p: usize, q: usize, layers: usize) -> Self {
        Self {
            p,
            q,
            layers,
            theta1: vec![0.0; p * q],
            theta2: vec![0.0; p * p],
            theta3: vec![0.0; 2 * p],
            theta4: vec![0.0; p * p],
            theta5: vec![0.0; p * p],
        }
    }

    /// Entries drawn from `N(0, 1)` and scaled by `1 / sqrt(p)`.
    pub fn init<R: Rng + ?Sized>(p: usize, q: usize, layers: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (p as f64).sqrt();
        let mut params = Self::zeros(p, q, layers);
        for block in params.blocks_mut() {
            for x in block.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *x = z * scale;
            }
        }
        params
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.p, self.q, self.layers)
    }

    pub fn blocks(&self) -> [&Vec<f64>; 5] {
        [&self.theta1, &self.theta2, &self.theta3, &self.theta4, &self.theta5]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.theta1,
            &mut self.theta2,
            &mut self.theta3,
            &mut self.theta4,
            &mut self.theta5,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let (p, q) = (self.p, self.q);
        if p == 0 || q == 0 {
            return Err(Error::DimensionMismatch("p and q must be positive".into()));
        }
        let expected = [p * q, p * p, 2 * p, p * p, p * p];
        for (i, (block, want)) in self.blocks().iter().zip(expected).enumerate() {
            if block.len() != want {
                return Err(Error::DimensionMismatch(format!(
                    "theta{} has {} entries, expected {want}",
                    i + 1,
                    block.len()
                )));
            }
            if block.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("theta{}", i + 1)));
            }
        }
        Ok(())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ModelParams) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|x| *x *= alpha);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint {
            format_version: CHECKPOINT_VERSION,
            params: self.clone(),
        })
        .expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint version {}",
                ck.format_version
            )));
        }
        ck.params.validate()?;
        Ok(ck.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Per-node embeddings plus the activations needed for backpropagation.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    n: usize,
    p: usize,
    /// `layers[l]` holds `h^l` as `n x p`, for `l = 0..=L`.
    layers: Vec<Vec<f64>>,
    /// `pre[l-1]`: pre-activations of layer `l` as `n x p`.
    pre: Vec<Vec<f64>>,
    /// `agg[l-1]`: neighbour sums feeding layer `l` as `n x p`.
    agg: Vec<Vec<f64>>,
    neighbors: Vec<Vec<usize>>,
}

impl EmbeddingTable {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Final embedding of node `v`.
    pub fn node(&self, v: usize) -> &[f64] {
        let last = self.layers.last().expect("at least h^0");
        &last[v * self.p..(v + 1) * self.p]
    }

    /// Embedding of node `v` after `layer` iterations.
    pub fn at_layer(&self, layer: usize, v: usize) -> &[f64] {
        &self.layers[layer][v * self.p..(v + 1) * self.p]
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Sum of the given rows in lexicographic row order.
fn canonical_sum<'a>(mut rows: Vec<&'a [f64]>, p: usize) -> Vec<f64> {
    rows.sort_by(|a, b| lex_cmp(a, b));
    let mut out = vec![0.0; p];
    for r in rows {
        for (o, x) in out.iter_mut().zip(r) {
            *o += x;
        }
    }
    out
}

fn matvec(m: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..rows {
        let row = &m[i * cols..(i + 1) * cols];
        out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// `out += m^T x` for `m` of shape `rows x cols`.
fn matvec_t_add(m: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..rows {
        if x[i] == 0.0 {
            continue;
        }
        let row = &m[i * cols..(i + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * x[i];
        }
    }
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Runs the embedding network on `state`. The initial embedding is the
/// all-ones vector of width `p`.
pub fn embed(state: &Pdag, params: &ModelParams) -> Result<EmbeddingTable> {
    params.validate()?;
    let (n, p, q) = (state.n(), params.p, params.q);
    let neighbors: Vec<Vec<usize>> = (0..n).map(|v| state.undirected_neighbors(v).collect()).collect();

    // theta1 * W_v is the same for every node since W_v is all ones.
    let feature: Vec<f64> = (0..p)
        .map(|i| params.theta1[i * q..(i + 1) * q].iter().sum())
        .collect();

    let mut layers = vec![vec![1.0; n * p]];
    let mut pre = Vec::with_capacity(params.layers);
    let mut agg = Vec::with_capacity(params.layers);
    for _ in 0..params.layers {
        let prev = layers.last().expect("h^0 present");
        let mut s = vec![0.0; n * p];
        let mut z = vec![0.0; n * p];
        let mut h = vec![0.0; n * p];
        for v in 0..n {
            let rows = neighbors[v].iter().map(|&u| &prev[u * p..(u + 1) * p]).collect();
            let sum = canonical_sum(rows, p);
            let zv = &mut z[v * p..(v + 1) * p];
            matvec(&params.theta2, p, p, &sum, zv);
            for i in 0..p {
                zv[i] += feature[i];
                h[v * p + i] = relu(zv[i]);
            }
            s[v * p..(v + 1) * p].copy_from_slice(&sum);
        }
        pre.push(z);
        agg.push(s);
        layers.push(h);
    }
    Ok(EmbeddingTable {
        n,
        p,
        layers,
        pre,
        agg,
        neighbors,
    })
}

/// Intermediate values of the score network for one state.
struct ScoreCache {
    pooled: Vec<f64>,
    z1: Vec<f64>,
    /// `n x p`
    z2: Vec<f64>,
    scores: Vec<f64>,
}

fn score_from_table(table: &EmbeddingTable, params: &ModelParams) -> ScoreCache {
    let (n, p) = (table.n, table.p);
    let pooled = canonical_sum((0..n).map(|v| table.node(v)).collect(), p);
    let mut z1 = vec![0.0; p];
    matvec(&params.theta4, p, p, &pooled, &mut z1);
    let pooled_part: f64 = (0..p).map(|i| params.theta3[i] * relu(z1[i])).sum();
    let mut z2 = vec![0.0; n * p];
    let mut scores = vec![0.0; n];
    for v in 0..n {
        let zv = &mut z2[v * p..(v + 1) * p];
        matvec(&params.theta5, p, p, table.node(v), zv);
        let own: f64 = (0..p).map(|i| params.theta3[p + i] * relu(zv[i])).sum();
        scores[v] = pooled_part + own;
    }
    ScoreCache {
        pooled,
        z1,
        z2,
        scores,
    }
}

/// `Q(state, v)` for every node.
pub fn score_all(state: &Pdag, params: &ModelParams) -> Result<Vec<f64>> {
    let table = embed(state, params)?;
    let scores = score_from_table(&table, params).scores;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("scores".into()));
    }
    Ok(scores)
}

/// `Q(state, action)` and `grad += weight * dQ/dTheta`.
pub fn q_value_grad(
    state: &Pdag,
    action: usize,
    params: &ModelParams,
    weight: f64,
    grad: &mut ModelParams,
) -> Result<f64> {
    let table = embed(state, params)?;
    if action >= table.n {
        return Err(Error::NodeOutOfRange {
            node: action,
            n: table.n,
        });
    }
    let cache = score_from_table(&table, params);
    let q = cache.scores[action];
    if !q.is_finite() {
        return Err(Error::Numeric("Q value".into()));
    }
    if weight == 0.0 {
        return Ok(q);
    }
    let (n, p) = (table.n, params.p);

    // Score network.
    let z2a = &cache.z2[action * p..(action + 1) * p];
    let ha = table.node(action);
    let mut g1 = vec![0.0; p];
    let mut g2 = vec![0.0; p];
    for i in 0..p {
        grad.theta3[i] += weight * relu(cache.z1[i]);
        grad.theta3[p + i] += weight * relu(z2a[i]);
        g1[i] = weight * params.theta3[i] * relu_grad(cache.z1[i]);
        g2[i] = weight * params.theta3[p + i] * relu_grad(z2a[i]);
    }
    for i in 0..p {
        for j in 0..p {
            grad.theta4[i * p + j] += g1[i] * cache.pooled[j];
            grad.theta5[i * p + j] += g2[i] * ha[j];
        }
    }

    // dQ/dh^L: every node feeds the pooled sum; the action also feeds theta5.
    let mut pooled_back = vec![0.0; p];
    matvec_t_add(&params.theta4, p, p, &g1, &mut pooled_back);
    let mut dh = vec![0.0; n * p];
    for v in 0..n {
        dh[v * p..(v + 1) * p].copy_from_slice(&pooled_back);
    }
    matvec_t_add(&params.theta5, p, p, &g2, &mut dh[action * p..(action + 1) * p]);

    // Embedding layers, last to first.
    let q_width = params.q;
    for l in (0..params.layers).rev() {
        let pre = &table.pre[l];
        let agg = &table.agg[l];
        let mut delta = vec![0.0; n * p];
        for k in 0..n * p {
            delta[k] = dh[k] * relu_grad(pre[k]);
        }
        for v in 0..n {
            let dv = &delta[v * p..(v + 1) * p];
            let sv = &agg[v * p..(v + 1) * p];
            for i in 0..p {
                if dv[i] == 0.0 {
                    continue;
                }
                for j in 0..q_width {
                    grad.theta1[i * q_width + j] += dv[i];
                }
                for j in 0..p {
                    grad.theta2[i * p + j] += dv[i] * sv[j];
                }
            }
        }
        if l == 0 {
            break;
        }
        // Messages flow back along undirected edges.
        let mut back = vec![0.0; n * p];
        for v in 0..n {
            matvec_t_add(&params.theta2, p, p, &delta[v * p..(v + 1) * p], &mut back[v * p..(v + 1) * p]);
        }
        let mut next = vec![0.0; n * p];
        for u in 0..n {
            for &v in &table.neighbors[u] {
                for i in 0..p {
                    next[u * p + i] += back[v * p + i];
                }
            }
        }
        dh = next;
    }
    Ok(q)
}

/// Bootstrapped target `r + gamma * max_x Q(next, x)` over the next state's
/// action set, or `r` when that set is empty.
pub fn td_target(t: &Transition, params: &ModelParams, gamma: f64) -> Result<f64> {
    let actions = action_set(&t.next_state);
    if actions.is_empty() {
        return Ok(t.reward as f64);
    }
    let scores = score_all(&t.next_state, params)?;
    let best = actions
        .iter()
        .map(|&a| scores[a])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(t.reward as f64 + gamma * best)
}

/// Mean squared TD error over the batch and its semi-gradient (targets held
/// constant).
pub fn td_loss_grad(batch: &[&Transition], params: &ModelParams, gamma: f64) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    params.validate()?;
    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    let m = batch.len() as f64;
    for t in batch {
        let y = td_target(t, params, gamma)?;
        let mut scratch = params.zeros_like();
        let q = q_value_grad(&t.state, t.action, params, 1.0, &mut scratch)?;
        let err = y - q;
        loss += err * err / m;
        grad.axpy(-2.0 * err / m, &scratch);
    }
    if !loss.is_finite() {
        return Err(Error::Numeric("TD loss".into()));
    }
    Ok((loss, grad))
}

/// Loss only, with targets computed from `target_params` (for finite differences).
pub fn td_loss_frozen(
    batch: &[&Transition],
    params: &ModelParams,
    target_params: &ModelParams,
    gamma: f64,
) -> Result<f64> {
    let mut loss = 0.0;
    for t in batch {
        let y = td_target(t, target_params, gamma)?;
        let q = score_all(&t.state, params)?[t.action];
        loss += (y - q).powi(2) / batch.len() as f64;
    }
    Ok(loss)
}
