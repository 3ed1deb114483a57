mod common;

use std::fs;

use common::{assert_same_results, read_tree, small_config};
use polb::baselines::StrategyKind;
use polb::environment::make_env;
use polb::experiment::{read_runs, run_experiment, run_single, summarize, summarize_rows, sweep, write_summary};
use polb::Error;

const MIXED: &str = r#"["pol", "jsq", "jmo-e"]"#;

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&small_config(a.path(), MIXED)).unwrap();
    run_experiment(&small_config(b.path(), MIXED)).unwrap();
    let names: Vec<_> = read_tree(a.path())
        .iter()
        .map(|(n, _)| n.to_string_lossy().into_owned())
        .collect();
    for expected in [
        "config.toml",
        "runs.csv",
        "summary.csv",
        "response_times.csv",
        "belief_trace_run0.csv",
        "policy_heatmap_pol.csv",
    ] {
        assert!(names.iter().any(|n| n == expected), "missing {expected} in {names:?}");
    }
    assert_same_results(a.path(), b.path());
}

#[test]
fn worker_count_does_not_change_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut one = small_config(a.path(), MIXED);
    one.workers = Some(1);
    let mut three = small_config(b.path(), MIXED);
    three.workers = Some(3);
    run_experiment(&one).unwrap();
    run_experiment(&three).unwrap();
    assert_same_results(a.path(), b.path());
}

#[test]
fn summarize_reproduces_run_summary() {
    let dir = tempfile::tempdir().unwrap();
    let result = run_experiment(&small_config(dir.path(), MIXED)).unwrap();
    let again = summarize(&[dir.path().to_path_buf()]).unwrap();
    assert_eq!(again, result.summary);

    let out = dir.path().join("summary_again.csv");
    write_summary(&out, &again).unwrap();
    assert_eq!(
        fs::read(&out).unwrap(),
        fs::read(dir.path().join("summary.csv")).unwrap()
    );
    // idempotent on its own output
    assert_eq!(summarize(&[dir.path().to_path_buf()]).unwrap(), again);
}

#[test]
fn shards_combine_to_the_full_experiment() {
    let full = tempfile::tempdir().unwrap();
    let s0 = tempfile::tempdir().unwrap();
    let s1 = tempfile::tempdir().unwrap();
    let whole = run_experiment(&small_config(full.path(), r#"["jsq", "jmo"]"#)).unwrap();

    let mut first = small_config(s0.path(), r#"["jsq", "jmo"]"#);
    first.t_m = 2;
    let mut second = small_config(s1.path(), r#"["jsq", "jmo"]"#);
    second.t_m = 2;
    second.first_run = 2;
    run_experiment(&first).unwrap();
    run_experiment(&second).unwrap();

    let combined = summarize(&[s0.path().to_path_buf(), s1.path().to_path_buf()]).unwrap();
    assert_eq!(combined, whole.summary);

    // the same shard twice is refused
    assert!(summarize(&[s0.path().to_path_buf(), s0.path().to_path_buf()]).is_err());
}

#[test]
fn missing_results_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_runs(dir.path()), Err(Error::NoResults(_))));
    assert!(matches!(summarize(&[]), Err(Error::NoResults(_))));
}

#[test]
fn strategies_share_arrivals_and_services() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), r#"["jsq", "jmo"]"#);
    let jsq = run_single(&config, 1, StrategyKind::JsqFi).unwrap();
    let jmo = run_single(&config, 1, StrategyKind::Jmo).unwrap();
    assert_eq!(jsq.seed, jmo.seed);
    assert_eq!(jsq.metrics.jobs_arrived, jmo.metrics.jobs_arrived);

    let env = make_env(&config.env_config(), jsq.seed).unwrap();
    let again = make_env(&config.env_config(), jsq.seed).unwrap();
    assert_eq!(env.streams().inter_arrivals(), again.streams().inter_arrivals());
}

#[test]
fn sweep_hits_requested_loads() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(dir.path(), r#"["jsq"]"#);
    config.t_m = 1;
    config.t_e = 50;
    let etas = [0.4, 0.8, 1.1];
    let out = sweep(&config, &etas).unwrap();
    assert_eq!(out.len(), 3);
    for (want, (got, rows)) in etas.iter().zip(&out) {
        assert!((want - got).abs() < 1e-9);
        assert_eq!(rows.len(), 1);
        assert!((config.with_eta(*want).unwrap().eta() - want).abs() < 1e-9);
    }
    let runs = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(runs.lines().count(), 4);
}

#[test]
fn smoke_every_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(dir.path(), r#"["pol", "jsq", "djsq", "sed", "jmo", "jmo-e"]"#);
    config.t_m = 1;
    config.t_e = 100;
    let result = run_experiment(&config).unwrap();
    assert_eq!(result.summary.len(), 6);
    for row in &result.rows {
        assert_eq!(row.jobs_arrived, 100);
        assert!((0.0..=1.0).contains(&row.drop_rate));
        assert!(row.cumulative_reward <= 0.0);
    }
    let pol = result.records.iter().find(|r| r.strategy == StrategyKind::Pol).unwrap();
    let stats = pol.metrics.planner.as_ref().unwrap();
    assert_eq!(stats.simulations, 100 * 40);
    assert_eq!(pol.belief_trace.len(), 200);
    assert_eq!(summarize_rows(&result.rows), result.summary);
}
