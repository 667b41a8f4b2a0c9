//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion outside `KNOWN_RED` fails.

use std::collections::HashSet;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use safebsp_bench::trial::planner_config;
use safebsp_bench::{run, PlannerKind, Problem, RunConfig, RunSummary};
use safebsp_core::belief::{make_safe, update};
use safebsp_core::cleaner::oracle_discrepancy;
use safebsp_core::cpft::{cpft_plan, pft_plan, DualState};
use safebsp_core::safety::{check_indicator, cost_from_payoff, prob_safe};
use safebsp_core::toy::LineModel;
use safebsp_core::tree::widen;
use safebsp_core::{
    plan, BeliefKind, FilterConfig, GenerativeModel, ParticleBelief, PcPlanner, PlannerConfig,
    QueryOutcome, ResampleRule, RolloutConfig, SafetySpec,
};
use safebsp_envs::{
    Benchmark, LightDark, PushBox, PushBoxConfig, Roomba, RoombaConfig, Slam, SlamConfig,
};

/// Criteria known to miss at desk budgets; their lines still print.
const KNOWN_RED: &[u32] = &[2];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn summary(cfg: &RunConfig) -> RunSummary {
    run(cfg, None).expect("run succeeds").summary
}

fn light_dark_safety() -> Outcome {
    let mut cfg = RunConfig::defaults(Problem::Lightdark);
    cfg.queries = 300;
    let pc = summary(&cfg);
    cfg.planner = PlannerKind::Cpft;
    let cpft = summary(&cfg);

    // The baseline keeps dangerous actions in its tree.
    let model = LightDark::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let root = model.initial_belief(cfg.particles, &mut rng);
    let pconf = planner_config(&cfg, 0);
    let spec = SafetySpec::prob_safe(cfg.delta).unwrap();
    let mut dual = DualState::new(cfg.dual.lambda0, cfg.dual.eta, cfg.dual.budget);
    let cost = cost_from_payoff(cfg.dual.cost, spec);
    let (_, tree) = cpft_plan(&model, root, pconf, cost, &mut dual, &mut rng).unwrap();
    let dangerous = tree.audit_violations(&model, &spec, 0).len();

    outcome(
        pc.collisions == 0 && cpft.collisions >= 5 && dangerous > 0,
        format!(
            "pc collisions {}/{}, cpft collisions {}/{}, cpft audit violations {}",
            pc.collisions, pc.trials, cpft.collisions, cpft.trials, dangerous
        ),
    )
}

fn roomba_departing() -> Outcome {
    let mut cfg = RunConfig::defaults(Problem::Roomba);
    cfg.queries = 200;
    cfg.particles = 200;
    let pc = summary(&cfg);
    cfg.planner = PlannerKind::Cpft;
    let cpft = summary(&cfg);
    let ratio = cpft.mean_terminal_goal_distance / pc.mean_terminal_goal_distance.max(1e-12);
    outcome(
        ratio >= 1.5 && cpft.goal_reach_rate == 0.0 && pc.goal_reach_rate >= 0.5,
        format!(
            "terminal distance pc {:.2} cpft {:.2} (ratio {:.2}), goal rate pc {:.2} cpft {:.2}",
            pc.mean_terminal_goal_distance,
            cpft.mean_terminal_goal_distance,
            ratio,
            pc.goal_reach_rate,
            cpft.goal_reach_rate
        ),
    )
}

/// Violations summed over seeds. Stored beliefs never change, so each node
/// is checked once when it first appears; the full audit runs per seed.
fn audit_env<M: Benchmark>(model: &M, problem: Problem, make_safe_root: bool) -> (usize, u64) {
    let mut cfg = RunConfig::defaults(problem);
    cfg.queries = 2000;
    cfg.make_safe = make_safe_root;
    let pconf = planner_config(&cfg, 0);
    let spec = pconf.safety.unwrap();
    let mut violations = 0;
    let mut queries = 0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let belief = model.initial_belief(100, &mut rng);
        let root = if pconf.make_safe {
            make_safe(model, &belief, 0, &mut rng).expect("prior has safe particles")
        } else {
            belief
        };
        let mut planner = PcPlanner::new(model, root, pconf).unwrap();
        let mut seen = HashSet::new();
        for _ in 0..pconf.queries {
            queries += 1;
            if planner.query(&mut rng).unwrap() == QueryOutcome::Exhausted {
                break;
            }
            let tree = planner.tree();
            for id in tree.node_ids() {
                let node = tree.node(id);
                let Some(prop) = &node.safe_propagated else {
                    continue;
                };
                if seen.insert((id, Arc::as_ptr(prop))) {
                    let r = check_indicator(model, &spec, prop, &node.safe_belief, node.depth);
                    violations += usize::from(!r.passed());
                }
            }
        }
        violations += planner.tree().audit_violations(model, &spec, 0).len();
    }
    (violations, queries)
}

fn anytime_safety() -> Outcome {
    let slam = Slam::new(SlamConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let runs = [
        ("lightdark", audit_env(&LightDark::default(), Problem::Lightdark, true)),
        ("roomba", audit_env(&Roomba::new(RoombaConfig::default()).unwrap(), Problem::Roomba, true)),
        ("slam (make-safe off)", audit_env(&slam, Problem::Slam, false)),
        ("slam (make-safe on)", audit_env(&slam, Problem::Slam, true)),
        ("pushbox", audit_env(&PushBox::new(PushBoxConfig::default()).unwrap(), Problem::Pushbox, true)),
    ];
    let pass = runs.iter().all(|(_, (v, _))| *v == 0);
    let detail = runs
        .iter()
        .map(|(name, (v, q))| format!("{name} {v} violations in {q} queries"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, detail)
}

fn cliff_model() -> LineModel {
    LineModel::default()
        .with_moves(vec![-1.0, -0.5, 0.0, 0.5, 1.0])
        .with_motion_noise(0.3)
        .with_safe_interval(-1.2, 1.4)
        .with_observation_sigma(0.4)
        .with_goal(1.0)
}

fn cleaning_oracle() -> Outcome {
    let model = cliff_model();
    let mut worst = 0.0f64;
    let mut prunes = 0;
    let mut failures = 0;
    for seq in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seq);
        let xs = (0..40).map(|_| rng.random_range(-0.4..0.4)).collect();
        let root = ParticleBelief::uniform(xs, BeliefKind::SafetyFiltered).unwrap();
        let cfg = PlannerConfig {
            queries: 60,
            horizon: 4,
            safety: Some(SafetySpec::prob_safe(rng.random_range(0.5..1.0)).unwrap()),
            make_safe: rng.random(),
            rollout: RolloutConfig {
                enabled: seq % 2 == 1,
                max_depth: Some(2),
                samples: 2,
                epsilon: 0.0,
            },
            record_laces: true,
            ..PlannerConfig::default()
        };
        let mut planner = PcPlanner::new(&model, root, cfg).unwrap();
        for _ in 0..cfg.queries {
            let done = planner.query(&mut rng).unwrap() == QueryOutcome::Exhausted;
            match oracle_discrepancy(planner.tree()) {
                Ok(d) => worst = worst.max(d),
                Err(_) => failures += 1,
            }
            if done {
                break;
            }
        }
        prunes += planner.tree().stats.pruned_laces;
    }
    outcome(
        worst <= 1e-9 && failures == 0,
        format!("1000 sequences, {prunes} prunes, max discrepancy {worst:.2e}, structural mismatches {failures}"),
    )
}

fn puct_schedule() -> Outcome {
    let mut mismatches = 0;
    for alpha in [0.2, 0.5, 0.8] {
        let mut children = 0usize;
        for n in 1..=10_000u64 {
            if widen(children, n, 1.0, alpha) {
                children += 1;
                let expected = (children as f64).powf(1.0 / alpha).ceil() as u64;
                if expected != n {
                    mismatches += 1;
                }
            }
            if children != (n as f64).powf(alpha).floor() as usize {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches over alpha 0.2, 0.5, 0.8"))
}

fn slam_pruning() -> Outcome {
    let mut cfg = RunConfig::defaults(Problem::Slam);
    cfg.queries = 2000;
    cfg.particles = 100;
    cfg.make_safe = false;
    let off = summary(&cfg);
    cfg.make_safe = true;
    let on = summary(&cfg);
    outcome(
        off.trials_with_exhausted_nodes >= 1 && on.pruned_null_actions == 0,
        format!(
            "make-safe off: {}/{} trials exhausted a node; make-safe on: {} null prunes",
            off.trials_with_exhausted_nodes, off.trials, on.pruned_null_actions
        ),
    )
}

fn pushbox_ablation() -> Outcome {
    let mut cfg = RunConfig::defaults(Problem::Pushbox);
    cfg.queries = 200;
    cfg.particles = 100;
    let mut pass = true;
    let mut best_reduction = 0i64;
    let mut cells = Vec::new();
    for delta in [0.3, 0.7, 1.0] {
        cfg.delta = delta;
        cfg.constrain_propagated = true;
        let on = summary(&cfg);
        cfg.constrain_propagated = false;
        let off = summary(&cfg);
        pass &= on.collisions <= off.collisions;
        best_reduction = best_reduction.max(off.collisions as i64 - on.collisions as i64);
        cells.push(format!(
            "delta {delta}: on {} off {} (goal {:.2}/{:.2})",
            on.collisions, off.collisions, on.goal_reach_rate, off.goal_reach_rate
        ));
    }
    outcome(pass && best_reduction >= 2, cells.join(", "))
}

fn gate_off_root<M: Benchmark>(model: &M, problem: Problem) -> usize {
    let mut cfg = RunConfig::defaults(problem);
    cfg.queries = 200;
    let mut pconf = planner_config(&cfg, 0);
    pconf.safety = None;
    pconf.make_safe = false;
    let mut mismatches = 0;
    for seed in 0..20 {
        let root = model.initial_belief(50, &mut ChaCha8Rng::seed_from_u64(seed));
        let (a, ta) = plan(model, root.clone(), pconf, &mut ChaCha8Rng::seed_from_u64(seed + 100)).unwrap();
        let (b, tb) = pft_plan(model, root, pconf, &mut ChaCha8Rng::seed_from_u64(seed + 100)).unwrap();
        let (mut da, mut db) = (Vec::new(), Vec::new());
        ta.dump(&mut da).unwrap();
        tb.dump(&mut db).unwrap();
        if a.best_action != b.best_action || da != db {
            mismatches += 1;
        }
    }
    mismatches
}

fn unconstrained_regression() -> Outcome {
    let slam = Slam::new(SlamConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let m = [
        ("lightdark", gate_off_root(&LightDark::default(), Problem::Lightdark)),
        ("roomba", gate_off_root(&Roomba::new(RoombaConfig::default()).unwrap(), Problem::Roomba)),
        ("slam", gate_off_root(&slam, Problem::Slam)),
        ("pushbox", gate_off_root(&PushBox::new(PushBoxConfig::default()).unwrap(), Problem::Pushbox)),
    ];
    outcome(
        m.iter().all(|(_, k)| *k == 0),
        m.iter()
            .map(|(name, k)| format!("{name} {k}/20 differ"))
            .collect::<Vec<_>>()
            .join(", "),
    )
}

fn violating_child() -> Outcome {
    let model = LightDark::default();
    let exact = FilterConfig {
        resample: ResampleRule::Never,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut instances = 0;
    let mut found = 0;
    let mut max_draws = 0;
    while instances < 200 {
        let center: f64 = rng.random_range(-2.0..8.0);
        let xs = (0..60).map(|_| center + rng.random_range(-3.0..3.0)).collect();
        let b = ParticleBelief::uniform(xs, BeliefKind::Propagated).unwrap();
        let phi = prob_safe(&model, &b, 0);
        if phi >= 1.0 {
            continue;
        }
        let delta = rng.random_range(phi..1.0).max(f64::MIN_POSITIVE);
        if delta <= phi {
            continue;
        }
        instances += 1;
        for draw in 1..=500 {
            let i = b.sample_index(&mut rng);
            let z = model.sample_observation(&b.particles()[i].state, &mut rng);
            let Ok(post) = update(&model, &b, &z, &exact, &mut rng) else {
                continue;
            };
            if prob_safe(&model, &post, 0) < delta {
                found += 1;
                max_draws = max_draws.max(draw);
                break;
            }
        }
    }
    outcome(
        found == instances,
        format!("{found}/{instances} instances, worst case {max_draws} draws"),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "light dark safety", light_dark_safety),
        (2, "roomba departing behavior", roomba_departing),
        (3, "anytime safety audit", anytime_safety),
        (4, "tree cleaning oracle", cleaning_oracle),
        (5, "puct widening schedule", puct_schedule),
        (6, "slam pruning", slam_pruning),
        (7, "pushbox propagated ablation", pushbox_ablation),
        (8, "gate-off regression", unconstrained_regression),
        (9, "violating child posterior", violating_child),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut unexpected = 0;
    for (id, name, f) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} {id}. {name}: {} [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
        if !o.pass && !KNOWN_RED.contains(&id) {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
