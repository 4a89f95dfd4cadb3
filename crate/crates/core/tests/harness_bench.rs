use std::fs;

use causal_design::harness::*;
use causal_design::neural::ModelParams;
use causal_design::rl::RunStatus;
use rand::SeedableRng;

fn spec_text(model: &str) -> String {
    format!(
        r#"
        budget = 3
        repetitions = 2
        seed = 17

        [[generated]]
        n = 7
        rho = 0.5
        count = 3

        [[generated]]
        n = 8
        rho = 0.2
        count = 2
        clamp_density = true

        [[strategies]]
        name = "random"

        [[strategies]]
        name = "entropy"
        cap = 3

        [[strategies]]
        name = "average"

        [[strategies]]
        name = "learned"
        model = "{model}"
        "#
    )
}

fn setup() -> (tempfile::TempDir, BenchSpec) {
    let dir = tempfile::tempdir().unwrap();
    let params = ModelParams::init(4, 1, 2, &mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
    params.save(dir.path().join("model.json")).unwrap();
    let spec_path = dir.path().join("bench.toml");
    fs::write(&spec_path, spec_text("model.json")).unwrap();
    let spec = BenchSpec::load(&spec_path).unwrap();
    (dir, spec)
}

#[test]
fn bench_reports_are_complete_and_isolated() {
    let (dir, spec) = setup();
    let report = run_bench(&spec).unwrap();
    // 5 graphs x 4 strategies x 2 repetitions.
    assert_eq!(report.records.len(), 40);
    for r in &report.records {
        match r.run.strategy.as_str() {
            // A cap of 3 is below every class size here.
            "entropy" => assert_eq!(r.run.status, RunStatus::CapacityExceeded),
            _ => assert_eq!(r.run.status, RunStatus::Ok, "{:?}", r.run),
        }
        assert!(r.run.ratios.len() <= 4);
        assert!(r.run.ratios.windows(2).all(|w| w[0] <= w[1]));
    }
    let entropy_rows: Vec<_> = report.mean_ratio.iter().filter(|r| r.strategy == "entropy").collect();
    assert!(entropy_rows.iter().all(|r| r.mean_ratio.is_none() && r.n_ok == 0 && r.n_fail > 0));
    // Two cells, four strategies, steps 0..=3.
    assert_eq!(report.mean_ratio.len(), 2 * 4 * 4);
    assert_eq!(report.timing.len(), 2 * 4);
    let learned = report.timing.iter().find(|t| t.strategy == "learned").unwrap();
    assert_eq!(learned.speedup_vs_learned, Some(1.0));

    let out = dir.path().join("out");
    write_report(&out, &report).unwrap();
    let header = |f: &str| fs::read_to_string(out.join(f)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header(RUNS_FILE), "graph_id,strategy,step,ratio,select_ms");
    assert_eq!(header(MEAN_RATIO_FILE), "n,rho,strategy,step,mean_ratio,n_ok,n_fail");
    assert_eq!(header(TIMING_FILE), "n,rho,strategy,mean_seconds,speedup_vs_learned");

    let exported = dir.path().join("plots");
    export_plots_data(out.join(RECORDS_FILE), &exported, Some(3)).unwrap();
    assert_eq!(
        fs::read_to_string(exported.join(MEAN_RATIO_FILE)).unwrap(),
        fs::read_to_string(out.join(MEAN_RATIO_FILE)).unwrap()
    );
}

#[test]
fn bench_ratios_are_reproducible() {
    let (_dir, spec) = setup();
    let a = run_bench(&spec).unwrap();
    let b = run_bench(&spec).unwrap();
    let ratios = |r: &BenchReport| r.records.iter().map(|x| (x.run.graph_id.clone(), x.run.ratios.clone())).collect::<Vec<_>>();
    assert_eq!(ratios(&a), ratios(&b));
    let parallel = BenchSpec { parallel: true, ..spec };
    assert_eq!(ratios(&run_bench(&parallel).unwrap()), ratios(&a));
}

#[test]
fn budget_zero_reports_the_cpdag_ratio() {
    let dir = tempfile::tempdir().unwrap();
    // Collider 0 -> 2 <- 1 plus 2 -> 3: fully oriented CPDAG.
    let path = dir.path().join("g.txt");
    fs::write(&path, "a c\nb c\nc d\n").unwrap();
    let spec = BenchSpec {
        generated: vec![],
        edge_lists: vec![path],
        strategies: vec![StrategySpec::named("random")],
        budget: 0,
        repetitions: 1,
        timeout_seconds: 60.0,
        seed: 0,
        parallel: false,
        out_dir: None,
        base_dir: dir.path().to_path_buf(),
    };
    let report = run_bench(&spec).unwrap();
    assert_eq!(report.records.len(), 1);
    assert_eq!(report.records[0].run.ratios, vec![1.0]);
    assert_eq!(report.records[0].run.graph_id, "g");
}

#[test]
fn large_edge_list_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grn.tsv");
    let mut text = String::from("# gene regulatory sub-network\n");
    for i in 0..99 {
        text.push_str(&format!("G{i}\tG{}\n", i + 1));
        if i % 3 == 0 && i + 5 < 100 {
            text.push_str(&format!("G{i} G{}\n", i + 5));
        }
    }
    fs::write(&path, text).unwrap();
    let named = load_edge_list(&path).unwrap();
    assert_eq!(named.dag.n(), 100);
    assert_eq!(named.names[..3], ["G0", "G1", "G5"]);
    let cpdag = causal_design::graph::cpdag_from_dag(&named.dag);
    assert_eq!(cpdag.edge_count(), named.dag.edge_count());
}

#[test]
fn invalid_specs_are_rejected() {
    let no_source = BenchSpec::from_toml("[[strategies]]\nname = \"random\"").unwrap();
    assert!(run_bench(&no_source).is_err());
    assert!(BenchSpec::from_toml("budget = -1\nstrategies = []").is_err());
    let missing = BenchSpec::from_toml(
        "edge_lists = [\"/nonexistent/file.txt\"]\n[[strategies]]\nname = \"random\"",
    )
    .unwrap();
    assert!(run_bench(&missing).is_err());
}
