use safebsp_bench::report::{write_csv, write_json};
use safebsp_bench::{run, PlannerKind, Problem, RunConfig, RunOutput, RunSummary};
use serde_json::json;

fn small(problem: Problem, planner: PlannerKind) -> RunConfig {
    let mut cfg = RunConfig::defaults(problem);
    cfg.planner = planner;
    cfg.trials = 3;
    cfg.queries = 30;
    cfg.particles = 30;
    cfg.max_steps = 3;
    cfg
}

fn csv_bytes(cfg: &RunConfig) -> Vec<u8> {
    let out = run(cfg, None).unwrap();
    let mut buf = Vec::new();
    write_csv(&out.trials, &mut buf).unwrap();
    buf
}

#[test]
fn same_seed_gives_identical_csv() {
    for problem in [Problem::Lightdark, Problem::Roomba, Problem::Slam, Problem::Pushbox] {
        let cfg = small(problem, PlannerKind::PcDpw);
        assert_eq!(csv_bytes(&cfg), csv_bytes(&cfg), "{problem}");
    }
}

#[test]
fn different_seeds_give_different_trials() {
    let mut cfg = small(Problem::Lightdark, PlannerKind::Pft);
    let a = run(&cfg, None).unwrap();
    cfg.seed = 1;
    let b = run(&cfg, None).unwrap();
    assert_ne!(a.trials[0].seed, b.trials[0].seed);
}

#[test]
fn json_round_trip_preserves_summary() {
    let cfg = small(Problem::Roomba, PlannerKind::Cpft);
    let out = run(&cfg, None).unwrap();
    let mut buf = Vec::new();
    write_json(&out, &mut buf).unwrap();
    let back: RunOutput = serde_json::from_slice(&buf).unwrap();
    assert_eq!(back.summary, out.summary);
    assert_eq!(back.config, cfg);
    assert_eq!(RunSummary::from_records(&back.trials), out.summary);
}

#[test]
fn csv_rows_have_constant_width() {
    let cfg = small(Problem::Pushbox, PlannerKind::PcPuct);
    let text = String::from_utf8(csv_bytes(&cfg)).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let width = reader.headers().unwrap().len();
    assert_eq!(width, 11);
    let rows: Vec<_> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), cfg.trials);
    assert!(rows.iter().all(|r| r.len() == width));
}

#[test]
fn trials_are_ordered_by_id() {
    let cfg = small(Problem::Slam, PlannerKind::PcDpw);
    let out = run(&cfg, None).unwrap();
    let ids: Vec<_> = out.trials.iter().map(|t| t.trial).collect();
    assert_eq!(ids, vec![0, 1, 2]);
}

#[test]
fn zero_trials_is_a_config_error() {
    let mut cfg = small(Problem::Lightdark, PlannerKind::PcDpw);
    cfg.trials = 0;
    assert!(run(&cfg, None).unwrap_err().is_config());
}

#[test]
fn out_of_range_delta_is_a_config_error() {
    let mut cfg = small(Problem::Lightdark, PlannerKind::PcDpw);
    cfg.delta = 1.5;
    assert!(run(&cfg, None).unwrap_err().is_config());
}

#[test]
fn unknown_env_field_is_a_config_error() {
    let cfg = small(Problem::Roomba, PlannerKind::PcDpw);
    let err = run(&cfg, Some(&json!({ "no_such_field": 1 }))).unwrap_err();
    assert!(err.is_config());
}

#[test]
fn env_overrides_are_applied() {
    let mut cfg = small(Problem::Lightdark, PlannerKind::Pft);
    cfg.keep_trajectories = true;
    let env = json!({ "prior_mean": 4.0, "prior_bounds": [3.5, 4.5] });
    let out = run(&cfg, Some(&env)).unwrap();
    assert!(out.trials.iter().all(|t| (3.5..=4.5).contains(&t.initial_state[0])));
}

#[test]
fn json_overrides_merge_into_problem_defaults() {
    let cfg = RunConfig::from_json(None, &json!({ "problem": "slam", "trials": 4 })).unwrap();
    assert_eq!(cfg.trials, 4);
    assert!(!cfg.make_safe);
    assert!(RunConfig::from_json(None, &json!({ "problem": "slam", "bogus": 1 })).is_err());
}
