//! Random connected chordal DAGs from random perfect elimination orderings.
//!
//! Vertices get a uniformly random rank `1..=n`. Going from the highest rank
//! down, each lower-ranked vertex becomes a parent of the current vertex with
//! probability `min(1, c / rank)`; a vertex that ends up with no parent gets one
//! drawn uniformly from the lower ranks, and the parents of every vertex are
//! then joined pairwise, lower rank pointing to higher rank. Parent sets are
//! cliques, so the DAG has no colliders and the rank order is a perfect
//! elimination ordering of its skeleton.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dag;

/// Generator settings. `tolerance` is relative to `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n: usize,
    pub rho: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_resamples")]
    pub max_resamples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_tolerance() -> f64 {
    0.1
}

fn default_max_resamples() -> usize {
    200
}

impl GenSpec {
    pub fn new(n: usize, rho: f64) -> Self {
        Self {
            n,
            rho,
            tolerance: default_tolerance(),
            max_resamples: default_max_resamples(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Raises `rho` to the smallest density a connected graph on `n` nodes can
    /// have. Use when a nominal density is below what connectivity forces.
    pub fn clamped_to_feasible(mut self) -> Self {
        if self.n >= 2 {
            self.rho = self.rho.max(min_density(self.n));
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidSpec(format!("need n >= 2, got {}", self.n)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidSpec(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidSpec("tolerance must be positive".into()));
        }
        let floor = min_density(self.n);
        if self.rho < floor - 1e-12 {
            return Err(Error::InvalidSpec(format!(
                "rho {} is below the connectivity minimum {floor:.4} for n = {}",
                self.rho, self.n
            )));
        }
        Ok(())
    }
}

/// `(n - 1) / C(n, 2)`: density of a spanning tree.
pub fn min_density(n: usize) -> f64 {
    2.0 / n as f64
}

/// `|E| / C(n, 2)`.
pub fn density(dag: &Dag) -> f64 {
    let n = dag.n() as f64;
    dag.edge_count() as f64 / (n * (n - 1.0) / 2.0)
}

/// One generated graph.
#[derive(Debug, Clone)]
pub struct GeneratedDag {
    pub dag: Dag,
    /// Vertices by ascending rank; a perfect elimination ordering read backwards.
    pub order: Vec<usize>,
    pub density: f64,
    /// `false` when no draw landed within tolerance and the closest one was kept.
    pub within_tolerance: bool,
    pub c: f64,
}

/// Single draw with a fixed proportionality constant `c`. Consumes the same
/// number of random values for every `c`, so common seeds give edge sets that
/// grow with `c`.
pub fn draw_with_c<R: Rng + ?Sized>(n: usize, c: f64, rng: &mut R) -> (Dag, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    // parent[a][b]: rank-a vertex is a parent of rank-b vertex (a < b), 0-based.
    let mut parent = vec![vec![false; n]; n];
    for r in (1..n).rev() {
        let p = (c / (r + 1) as f64).min(1.0);
        for s in 0..r {
            if rng.random::<f64>() < p {
                parent[s][r] = true;
            }
        }
        let fallback = rng.random_range(0..r);
        if !(0..r).any(|s| parent[s][r]) {
            parent[fallback][r] = true;
        }
        let ps: Vec<usize> = (0..r).filter(|&s| parent[s][r]).collect();
        for (i, &a) in ps.iter().enumerate() {
            for &b in &ps[i + 1..] {
                parent[a][b] = true;
            }
        }
    }
    let mut parents = vec![Vec::new(); n];
    for b in 0..n {
        for a in 0..b {
            if parent[a][b] {
                parents[order[b]].push(order[a]);
            }
        }
    }
    let dag = Dag::new(parents).expect("rank order is a topological order");
    (dag, order)
}

/// Finds `c` whose mean realized density over `trials` draws matches `rho`,
/// by bisection with common random numbers across evaluations.
pub fn calibrate_c<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R, trials: usize) -> Result<f64> {
    const MAX_ITER: usize = 60;
    GenSpec::new(n, rho).validate()?;
    let base_seed: u64 = rng.random();
    let trials = trials.max(1);
    let mean_density = |c: f64| {
        let mut r = ChaCha8Rng::seed_from_u64(base_seed);
        (0..trials).map(|_| density(&draw_with_c(n, c, &mut r).0)).sum::<f64>() / trials as f64
    };

    let (mut lo, mut hi) = (0.0, n as f64);
    let at_lo = mean_density(lo);
    if at_lo >= rho - 1e-12 {
        return Ok(lo);
    }
    if mean_density(hi) <= rho {
        return Ok(hi);
    }
    let mut best = (f64::INFINITY, lo);
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let d = mean_density(mid);
        let err = (d - rho).abs();
        if err < best.0 {
            best = (err, mid);
        }
        if err <= 1e-3 * rho {
            return Ok(mid);
        }
        if d < rho {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    if best.0 <= 0.05 * rho {
        Ok(best.1)
    } else {
        Err(Error::NoConvergence { iterations: MAX_ITER })
    }
}

/// A generator with its constant calibrated once for `spec`.
#[derive(Debug, Clone)]
pub struct ChordalGenerator {
    spec: GenSpec,
    c: f64,
}

impl ChordalGenerator {
    pub const CALIBRATION_TRIALS: usize = 200;

    pub fn new<R: Rng + ?Sized>(spec: GenSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let c = calibrate_c(spec.n, spec.rho, rng, Self::CALIBRATION_TRIALS)?;
        Ok(Self { spec, c })
    }

    pub fn spec(&self) -> &GenSpec {
        &self.spec
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Draws until the realized density is within tolerance, up to
    /// `max_resamples` attempts, otherwise keeps the closest draw.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> GeneratedDag {
        let GenSpec { n, rho, tolerance, .. } = self.spec;
        let mut best: Option<(f64, Dag, Vec<usize>)> = None;
        for _ in 0..self.spec.max_resamples.max(1) {
            let (dag, order) = draw_with_c(n, self.c, rng);
            let d = density(&dag);
            let err = (d - rho).abs();
            if err <= tolerance * rho + 1e-12 {
                return GeneratedDag {
                    dag,
                    order,
                    density: d,
                    within_tolerance: true,
                    c: self.c,
                };
            }
            if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
                best = Some((err, dag, order));
            }
        }
        let (_, dag, order) = best.expect("at least one draw");
        let d = density(&dag);
        log::warn!("no draw within tolerance for n={n}, rho={rho}; realized density {d:.4}");
        GeneratedDag {
            dag,
            order,
            density: d,
            within_tolerance: false,
            c: self.c,
        }
    }
}

/// Calibrates for `spec` and draws one graph.
pub fn random_chordal_dag<R: Rng + ?Sized>(spec: &GenSpec, rng: &mut R) -> Result<GeneratedDag> {
    Ok(ChordalGenerator::new(spec.clone(), rng)?.generate(rng))
}

/// `count` graphs from `spec`, seeded by `spec.seed`.
pub fn generate_many(spec: &GenSpec, count: usize) -> Result<Vec<GeneratedDag>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let generator = ChordalGenerator::new(spec.clone(), &mut rng)?;
    Ok((0..count).map(|_| generator.generate(&mut rng)).collect())
}
