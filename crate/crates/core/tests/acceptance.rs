//! Acceptance suite. Runs every criterion in sequence on one thread and
//! prints one PASS/FAIL line each; exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use causal_design::graph::*;
use causal_design::graphgen::{generate_many, GenSpec};
use causal_design::harness::{run_bench, BenchSpec, GeneratedSource, StrategySpec};
use causal_design::mec::*;
use causal_design::neural::ModelParams;
use causal_design::rl::{evaluate, evaluate_graph, train, TrainConfig};
use causal_design::strategies::*;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// State shared between criteria: the desk-scale trained model.
#[derive(Default)]
struct Shared {
    trained: Option<Arc<ModelParams>>,
}

fn five_node_dag() -> Dag {
    // X1 -> X2, X2 -> X4, X5 -> X4, X2 -> X3, X4 -> X3 with Xi = i - 1.
    Dag::from_edges(5, &[(0, 1), (1, 3), (4, 3), (1, 2), (3, 2)]).unwrap()
}

fn c1_cpdag_oracle(_: &mut Shared) -> Outcome {
    let start = Instant::now();
    let mut dags: Vec<Dag> = (1..=4).flat_map(all_dags).collect();
    let exhaustive = dags.len();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..200 {
        let n = 5 + i % 2;
        let p = rng.random_range(0.2..0.8);
        dags.push(random_dag(n, p, &mut rng));
    }
    let mut mismatches = 0;
    for d in &dags {
        let cpdag = cpdag_from_dag(d);
        let set = enumerate_extensions(&cpdag, DEFAULT_CAP).map_err(|e| e.to_string())?;
        let directed: BTreeSet<(usize, usize)> = cpdag.directed_edges().collect();
        let invariant: BTreeSet<(usize, usize)> = set.invariant_edges().into_iter().collect();
        let brute = invariant_arrows(&brute_mec(d));
        if directed != invariant || directed != brute || set.len() != brute_mec(d).len() {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(mismatches == 0, "{mismatches} mismatches over {} DAGs", dags.len());
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!(
        "{exhaustive} exhaustive + 200 random DAGs, 0 mismatches, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn c2_five_node_class(_: &mut Shared) -> Outcome {
    let cpdag = cpdag_from_dag(&five_node_dag());
    let undirected: Vec<_> = cpdag.undirected_edges().collect();
    let mut directed: Vec<_> = cpdag.directed_edges().collect();
    directed.sort_unstable();
    ensure!(undirected == vec![(0, 1)], "undirected edges {undirected:?}");
    ensure!(directed == vec![(1, 2), (1, 3), (3, 2), (4, 3)], "directed edges {directed:?}");
    let size = mec_size(&cpdag, DEFAULT_CAP).map_err(|e| e.to_string())?;
    ensure!(size == 2, "mec_size {size}");
    Ok("X1-X2 undirected, 4 arrows as drawn, mec_size 2".into())
}

fn c3_triangle(_: &mut Shared) -> Outcome {
    // Triangle X3 -> X4, X4 -> X5, X3 -> X5.
    let truth = Dag::from_edges(5, &[(2, 3), (3, 4), (2, 4)]).unwrap();
    let state = cpdag_from_dag(&truth);
    ensure!(state.undirected_count() == 3, "triangle should be undirected");
    let out = apply_intervention(&state, &truth, 3).map_err(|e| e.to_string())?;
    let mut edges = out.oriented_edges.clone();
    edges.sort_unstable();
    ensure!(out.oriented_count == 3, "oriented_count {}", out.oriented_count);
    ensure!(edges == vec![(2, 3), (2, 4), (3, 4)], "oriented {edges:?}");
    ensure!(out.next_state.edge_count() == 0, "next state not empty");
    Ok("intervening on X4 orients 3 edges, next state empty".into())
}

fn c4_structure(_: &mut Shared) -> Outcome {
    let start = Instant::now();
    let cells = [(10, 0.1), (10, 0.2), (10, 0.3), (15, 0.1), (15, 0.2), (15, 0.3)];
    let mut graphs = Vec::new();
    for (i, &(n, rho)) in cells.iter().enumerate() {
        let count = 500 / cells.len() + usize::from(i < 500 % cells.len());
        let spec = GenSpec::new(n, rho).clamped_to_feasible().with_seed(400 + i as u64);
        graphs.extend(generate_many(&spec, count).map_err(|e| e.to_string())?);
    }
    ensure!(graphs.len() == 500, "generated {}", graphs.len());

    let mut violations: Vec<String> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for (gi, g) in graphs.iter().enumerate() {
        let d = &g.dag;
        let mut fail = |what: &str| violations.push(format!("graph {gi}: {what}"));
        if !d.is_connected() || !is_chordal(&d.skeleton()) || !is_perfect_elimination_order(&d.skeleton(), &g.order) {
            fail("generator output not connected/chordal");
        }
        let cpdag = cpdag_from_dag(d);
        if !is_chordal(&cpdag.without_directed()) {
            fail("chain component not chordal");
        }

        let total = d.edge_count();
        let mut oriented = cpdag.directed_count();
        let mut state = cpdag.without_directed();
        let mut last = oriented as f64 / total as f64;
        for v in 0..d.n() {
            match apply_intervention(&state, d, v) {
                Ok(out) => {
                    oriented += out.oriented_count;
                    state = out.next_state;
                }
                Err(e) => {
                    fail(&format!("intervention failed: {e}"));
                    break;
                }
            }
            let r = oriented as f64 / total as f64;
            if r < last {
                fail("ratio decreased");
            }
            last = r;
        }
        if last != 1.0 || state.edge_count() != 0 {
            fail("full intervention did not reach ratio 1");
        }

        // Closure on a partially oriented copy: idempotent and independent of
        // rule order and work-list order.
        let mut partial = cpdag.clone();
        for (u, v) in cpdag.undirected_edges() {
            if rng.random::<f64>() < 0.3 {
                partial.remove_edge(u, v);
                let (f, t) = if d.has_edge(u, v) { (u, v) } else { (v, u) };
                partial.add_directed(f, t).unwrap();
            }
        }
        let once = meek_closure(&partial).map_err(|e| e.to_string())?;
        if meek_closure(&once).map_err(|e| e.to_string())? != once {
            fail("closure not idempotent");
        }
        let mut rules = [MeekRule::R1, MeekRule::R2, MeekRule::R3, MeekRule::R4];
        for k in 0..3 {
            rules.rotate_left(1);
            if k == 1 {
                rules.reverse();
            }
            let schedule = MeekSchedule {
                rules,
                shuffle_seed: Some(rng.random()),
            };
            if meek_closure_with(&partial, &schedule).map_err(|e| e.to_string())? != once {
                fail("closure depends on schedule");
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(violations.is_empty(), "{} violations, first: {}", violations.len(), violations[0]);
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!("500 graphs, 0 violations, {:.2}s", elapsed.as_secs_f64()))
}

fn c5_gradient(_: &mut Shared) -> Outcome {
    let mut worst = 0.0f64;
    let instances = 24;
    for seed in 1000..1000 + instances {
        let errors = gradient_check(seed, 1e-5);
        for (b, &e) in errors.iter().enumerate() {
            ensure!(e < 1e-4, "instance {seed}, theta{}: relative error {e:e}", b + 1);
            worst = worst.max(e);
        }
    }
    Ok(format!("{instances} instances, worst block relative error {worst:.2e}"))
}

/// A deterministic policy's expected discovered-edge ratio after each of
/// `budget` steps, with the truth uniform over `set`.
fn expected_policy_ratios(kind: &StrategyKind, set: &ExtensionSet, budget: usize) -> Vec<f64> {
    let mut sums = vec![0.0; budget + 1];
    for member in &set.extensions {
        let mut sel = Selector::new(kind.clone(), 0).unwrap();
        let run = evaluate_graph("m", member, &mut sel, budget, None);
        for (k, s) in sums.iter_mut().enumerate() {
            *s += run.ratio_at(k).unwrap();
        }
    }
    sums.iter().map(|s| s / set.len() as f64).collect()
}

fn c6_learning(shared: &mut Shared) -> Outcome {
    let start = Instant::now();
    let config = TrainConfig {
        episodes: 2000,
        ..TrainConfig::default()
    };
    let out = train(&config).map_err(|e| e.to_string())?;
    let train_time = start.elapsed();
    ensure!(train_time < Duration::from_secs(1800), "training took {train_time:?}");
    let params = Arc::new(out.params);
    shared.trained = Some(params.clone());

    let mut held_out = Vec::new();
    for (i, n) in [8usize, 10].into_iter().enumerate() {
        let spec = GenSpec::new(n, 0.2).clamped_to_feasible().with_seed(90_000 + i as u64);
        held_out.extend(generate_many(&spec, 25).map_err(|e| e.to_string())?.into_iter().map(|g| g.dag));
    }
    let budget = 5;
    let learned = evaluate(&StrategyKind::Learned { params: params.clone() }, &held_out, budget, 1)
        .map_err(|e| e.to_string())?;
    let reps = 20;
    let mut random_sum = 0.0;
    for rep in 0..reps {
        let runs = evaluate(&StrategyKind::Random, &held_out, budget, 500 + rep).map_err(|e| e.to_string())?;
        random_sum += runs.iter().map(|r| r.ratio_at(2).unwrap()).sum::<f64>();
    }
    let random_k2 = random_sum / (reps as usize * held_out.len()) as f64;
    let learned_k2 = learned.iter().map(|r| r.ratio_at(2).unwrap()).sum::<f64>() / held_out.len() as f64;

    // Exact expectations against the planner on every enumerable graph.
    let mut checked = 0;
    let mut worst_gap = f64::NEG_INFINITY;
    for d in &held_out {
        let cpdag = cpdag_from_dag(d);
        let state = cpdag.without_directed();
        let Ok(set) = enumerate_extensions(&state, DEFAULT_CAP) else {
            continue;
        };
        let kind = StrategyKind::Learned { params: params.clone() };
        let ours = expected_policy_ratios(&kind, &set, budget);
        for k in 1..=budget {
            let plan = plan_optimal(&state, &set, k).map_err(|e| e.to_string())?;
            let optimal = (cpdag.directed_count() as f64 + plan.value) / d.edge_count() as f64;
            worst_gap = worst_gap.max(ours[k] - optimal);
            ensure!(ours[k] <= optimal + 1e-9, "learned {} > optimal {optimal} at k={k}", ours[k]);
        }
        checked += 1;
    }
    ensure!(
        learned_k2 >= random_k2 + 0.03,
        "learned {learned_k2:.4} vs random {random_k2:.4} at k=2"
    );
    Ok(format!(
        "trained in {:.1}s; k=2 ratio learned {learned_k2:.4} vs random {random_k2:.4}; \
         below optimal on {checked}/{} graphs (max gap {worst_gap:.4})",
        train_time.as_secs_f64(),
        held_out.len()
    ))
}

fn c7_dominance(shared: &mut Shared) -> Outcome {
    let params = shared
        .trained
        .clone()
        .unwrap_or_else(|| Arc::new(ModelParams::init(32, 1, 4, &mut ChaCha8Rng::seed_from_u64(7))));
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut done = 0;
    let mut violations = Vec::new();
    while done < 100 {
        let d = random_dag(6, rng.random_range(0.3..0.8), &mut rng);
        let state = cpdag_from_dag(&d).without_directed();
        let actions = action_set(&state);
        if actions.is_empty() {
            continue;
        }
        done += 1;
        let set = enumerate_extensions(&state, DEFAULT_CAP).map_err(|e| e.to_string())?;
        let plan = plan_optimal(&state, &set, 1).map_err(|e| e.to_string())?;
        let exact: BTreeMap<usize, f64> = expected_oriented_exact(&state, DEFAULT_CAP)
            .map_err(|e| e.to_string())?
            .into_iter()
            .collect();
        let random_value = exact.values().sum::<f64>() / exact.len() as f64;
        let mut choices = vec![
            ("entropy", select_entropy(&state, DEFAULT_CAP).map_err(|e| e.to_string())?),
            ("minimax", select_minimax(&state, DEFAULT_CAP).map_err(|e| e.to_string())?),
            (
                "average",
                select_average(&state, 0, AverageMode::Exact, &mut rng, DEFAULT_CAP).map_err(|e| e.to_string())?,
            ),
            ("learned", select_learned(&state, &params).map_err(|e| e.to_string())?),
        ];
        for &(name, v) in &choices {
            if exact[&v] > plan.value + 1e-9 {
                violations.push(format!("{name} {} > optimal {}", exact[&v], plan.value));
            }
        }
        if random_value > plan.value + 1e-9 {
            violations.push(format!("random {random_value} > optimal {}", plan.value));
        }
        // Worst-case remaining class size, from the brute-force class.
        let worst = |v: usize| {
            let mut cells: BTreeMap<Vec<(usize, usize)>, usize> = BTreeMap::new();
            for m in &set.extensions {
                *cells.entry(incident_pattern(m, v)).or_default() += 1;
            }
            cells.into_values().max().unwrap()
        };
        let minimax = choices.remove(1).1;
        let mm = worst(minimax);
        if let Some(&v) = actions.iter().find(|&&v| worst(v) < mm) {
            violations.push(format!("random choice {v} has worst case {} < minimax {mm}", worst(v)));
        }
    }
    ensure!(violations.is_empty(), "{} violations, first: {}", violations.len(), violations[0]);
    Ok("100 CPDAGs, 0 violations".into())
}

fn c8_timing(shared: &mut Shared) -> Outcome {
    let params = shared
        .trained
        .clone()
        .unwrap_or_else(|| Arc::new(ModelParams::init(32, 1, 4, &mut ChaCha8Rng::seed_from_u64(7))));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    params.save(dir.path().join("model.json")).map_err(|e| e.to_string())?;
    let spec = BenchSpec {
        generated: vec![GeneratedSource {
            n: 15,
            rho: 0.3,
            count: 20,
            clamp_density: false,
        }],
        edge_lists: vec![],
        strategies: ["learned", "average", "minimax", "entropy"]
            .iter()
            .map(|&name| StrategySpec {
                model: (name == "learned").then(|| "model.json".into()),
                ..StrategySpec::named(name)
            })
            .collect(),
        budget: 5,
        repetitions: 1,
        timeout_seconds: 60.0,
        seed: 8,
        parallel: false,
        out_dir: None,
        base_dir: dir.path().to_path_buf(),
    };
    let report = run_bench(&spec).map_err(|e| e.to_string())?;
    let failed = report.records.iter().filter(|r| r.run.status != causal_design::rl::RunStatus::Ok).count();
    ensure!(failed == 0, "{failed} runs did not finish");
    let t: BTreeMap<&str, f64> = report
        .timing
        .iter()
        .map(|r| (r.strategy.as_str(), r.mean_seconds.unwrap_or(f64::NAN)))
        .collect();
    let (l, a, m, e) = (t["learned"], t["average"], t["minimax"], t["entropy"]);
    let summary = format!(
        "learned {:.2}ms, average {:.2}ms, minimax {:.2}ms, entropy {:.2}ms per run",
        l * 1e3,
        a * 1e3,
        m * 1e3,
        e * 1e3
    );
    ensure!(l < a && a < m && m <= e, "ordering violated: {summary}");
    ensure!(e >= 10.0 * l, "entropy only {:.1}x slower than learned: {summary}", e / l);

    let big: Vec<Dag> = generate_many(&GenSpec::new(30, 0.2).with_seed(30), 5)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|g| g.dag)
        .collect();
    let mut slowest = 0.0f64;
    for (i, d) in big.iter().enumerate() {
        let mut sel = Selector::new(StrategyKind::Learned { params: params.clone() }, 0).map_err(|e| e.to_string())?;
        let run = evaluate_graph(&i.to_string(), d, &mut sel, 5, None);
        slowest = run.select_seconds.iter().copied().fold(slowest, f64::max);
    }
    ensure!(slowest < 0.05, "learned step at n=30 took {:.1}ms", slowest * 1e3);
    Ok(format!(
        "{summary}; entropy/learned {:.0}x; slowest learned step at n=30 {:.2}ms",
        e / l,
        slowest * 1e3
    ))
}

fn c9_determinism(_: &mut Shared) -> Outcome {
    let config = TrainConfig {
        episodes: 300,
        seed: 99,
        ..TrainConfig::default()
    };
    let a = train(&config).map_err(|e| e.to_string())?;
    let b = train(&config).map_err(|e| e.to_string())?;
    ensure!(a.params.to_json() == b.params.to_json(), "checkpoints differ");
    ensure!(a.log == b.log, "training logs differ");

    let graphs: Vec<Dag> = generate_many(&GenSpec::new(10, 0.3).with_seed(9), 10)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|g| g.dag)
        .collect();
    let params = Arc::new(a.params);
    for kind in [
        StrategyKind::Random,
        StrategyKind::Learned { params },
        StrategyKind::Average {
            samples: 50,
            cap: DEFAULT_CAP,
            mode: AverageMode::MonteCarlo,
        },
    ] {
        let x = evaluate(&kind, &graphs, 5, 3).map_err(|e| e.to_string())?;
        let y = evaluate(&kind, &graphs, 5, 3).map_err(|e| e.to_string())?;
        let bits = |runs: &[causal_design::rl::RunRecord]| {
            runs.iter()
                .flat_map(|r| r.ratios.iter().map(|x| x.to_bits()))
                .collect::<Vec<_>>()
        };
        ensure!(bits(&x) == bits(&y), "{} ratios differ", kind.tag());
    }
    Ok("checkpoints and ratio columns identical across runs".into())
}

fn main() {
    let criteria: [(&str, fn(&mut Shared) -> Outcome); 9] = [
        ("CPDAG oracle equivalence", c1_cpdag_oracle),
        ("five-node worked example", c2_five_node_class),
        ("triangle worked example", c3_triangle),
        ("structural properties", c4_structure),
        ("gradient check", c5_gradient),
        ("learning signal", c6_learning),
        ("baseline dominance", c7_dominance),
        ("timing ordering", c8_timing),
        ("determinism", c9_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut shared = Shared::default();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| check(&mut shared)))
            .unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
