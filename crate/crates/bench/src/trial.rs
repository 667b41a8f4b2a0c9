use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use safebsp_core::belief::{make_safe, propagate, update};
use safebsp_core::cpft::{cpft_plan, pft_plan, DualState};
use safebsp_core::safety::cost_from_payoff;
use safebsp_core::{
    ActionId, BeliefKind, FilterConfig, GenerativeModel, ParticleBelief, PlanResult, PlannerConfig, PcPlanner,
    SafetySpec, SearchTree, SearchVariant,
};
use safebsp_envs::pushbox::{PushAction, PushBoxState, PushObservation};
use safebsp_envs::roomba::RoombaState;
use safebsp_envs::{step_ground_truth, Benchmark};
use serde::{Deserialize, Serialize};

use crate::config::{PlannerKind, RunConfig};
use crate::HarnessError;

/// Flat numeric view of states, actions and observations for trajectory dumps.
pub trait Flatten {
    fn flatten(&self) -> Vec<f64>;
}

impl Flatten for f64 {
    fn flatten(&self) -> Vec<f64> {
        vec![*self]
    }
}

impl<const N: usize> Flatten for [f64; N] {
    fn flatten(&self) -> Vec<f64> {
        self.to_vec()
    }
}

impl Flatten for (f64, f64) {
    fn flatten(&self) -> Vec<f64> {
        vec![self.0, self.1]
    }
}

impl Flatten for RoombaState {
    fn flatten(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.theta, self.status as f64]
    }
}

impl Flatten for PushBoxState {
    fn flatten(&self) -> Vec<f64> {
        vec![self.robot[0], self.robot[1], self.puck[0], self.puck[1]]
    }
}

impl Flatten for PushAction {
    fn flatten(&self) -> Vec<f64> {
        match self {
            PushAction::Null => vec![],
            PushAction::Move(u) => u.to_vec(),
        }
    }
}

impl Flatten for PushObservation {
    fn flatten(&self) -> Vec<f64> {
        vec![self.contact as u8 as f64, self.bearing_range[0], self.bearing_range[1]]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: usize,
    pub observation: Vec<f64>,
    pub state: Vec<f64>,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub steps: usize,
    pub collided: bool,
    pub cumulative_reward: f64,
    pub infeasible_abort: bool,
    pub reached_goal: bool,
    pub terminal_goal_distance: f64,
    /// Sessions whose root had no admissible action and fell back to the
    /// null action.
    pub null_fallbacks: usize,
    /// Nodes left with every action pruned, summed over sessions.
    pub exhausted_nodes: u64,
    pub pruned_null_actions: u64,
    pub filter_failures: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial_state: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<StepRecord>,
    #[serde(skip)]
    pub tree_dump: Option<String>,
}

/// Seed of one trial, derived from the master seed with a splitmix step so
/// trials are independent of scheduling order.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut z = master.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Streams of a trial: 0 drives the world, 1 the planner and filter, 2
/// builds randomized environments.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn safety_spec(cfg: &RunConfig) -> SafetySpec {
    SafetySpec {
        operator: cfg.operator,
        delta: cfg.delta,
        alpha: cfg.risk_alpha,
        constrain_propagated: cfg.constrain_propagated,
    }
}

/// Planner configuration of the session started at time `t`.
pub fn planner_config(cfg: &RunConfig, t: usize) -> PlannerConfig {
    let pc = cfg.planner.is_constrained();
    let base = PlannerConfig {
        variant: SearchVariant::DpwUcb,
        queries: cfg.queries,
        horizon: cfg.depth,
        exploration: cfg.exploration,
        puct_exponent: cfg.puct_exponent,
        action_widening: cfg.action_widening,
        observation_widening: cfg.observation_widening,
        safety: pc.then(|| safety_spec(cfg)),
        make_safe: pc && cfg.make_safe,
        rollout: cfg.rollout,
        filter: FilterConfig::default(),
        time0: t,
        record_laces: false,
    };
    if cfg.planner == PlannerKind::PcPuct {
        base.puct()
    } else {
        base
    }
}

type Planned<M> = (PlanResult, SearchTree<<M as GenerativeModel>::State, <M as GenerativeModel>::Observation>);

fn plan_session<M: GenerativeModel>(
    model: &M,
    cfg: &RunConfig,
    root: ParticleBelief<M::State>,
    t: usize,
    dual: &mut DualState,
    rng: &mut ChaCha8Rng,
) -> Result<Planned<M>, HarnessError> {
    let pconf = planner_config(cfg, t);
    Ok(match cfg.planner {
        PlannerKind::PcDpw | PlannerKind::PcPuct => {
            let mut p = PcPlanner::new(model, root, pconf)?;
            let r = p.run(rng)?;
            (r, p.into_tree())
        }
        PlannerKind::Cpft => {
            let cost = cost_from_payoff(cfg.dual.cost, safety_spec(cfg));
            cpft_plan(model, root, pconf, cost, dual, rng)?
        }
        PlannerKind::Pft => pft_plan(model, root, pconf, rng)?,
    })
}

/// One closed-loop trial: plan from the current (made safe) belief, execute,
/// observe, filter, repeat.
pub fn run_trial<M>(model: &M, cfg: &RunConfig, trial: usize, seed: u64) -> Result<TrialRecord, HarnessError>
where
    M: Benchmark,
    M::State: Flatten,
    M::Observation: Flatten,
{
    let mut world = trial_rng(seed, 0);
    let mut rng = trial_rng(seed, 1);
    let mut x = model.sample_initial_state(&mut world);
    let mut belief = model.initial_belief(cfg.particles, &mut world);
    let mut dual = DualState::new(cfg.dual.lambda0, cfg.dual.eta, cfg.dual.budget);
    let filter = FilterConfig::default();
    let gate_root = cfg.planner.is_constrained() && cfg.make_safe;
    let mut rec = TrialRecord {
        trial,
        seed,
        steps: 0,
        collided: !model.is_safe(&x, 0),
        cumulative_reward: 0.0,
        infeasible_abort: false,
        reached_goal: false,
        terminal_goal_distance: 0.0,
        null_fallbacks: 0,
        exhausted_nodes: 0,
        pruned_null_actions: 0,
        filter_failures: 0,
        initial_state: if cfg.keep_trajectories { x.flatten() } else { Vec::new() },
        trajectory: Vec::new(),
        tree_dump: None,
    };
    for t in 0..cfg.max_steps {
        if rec.collided || model.is_terminal(&x) {
            break;
        }
        let root = if gate_root {
            make_safe(model, &belief, t, &mut rng).ok()
        } else {
            Some(belief.clone())
        };
        let mut chosen: Option<ActionId> = None;
        if let Some(root) = &root {
            let (result, tree) = plan_session(model, cfg, root.clone(), t, &mut dual, &mut rng)?;
            rec.exhausted_nodes += result.stats.exhausted_nodes;
            rec.pruned_null_actions += result.stats.pruned_null_actions;
            if cfg.dump_first_tree && trial == 0 && t == 0 {
                let mut buf = Vec::new();
                tree.dump(&mut buf)?;
                rec.tree_dump = Some(String::from_utf8_lossy(&buf).into_owned());
            }
            chosen = result.best_action;
        }
        let a = match (chosen, model.null_action()) {
            (Some(a), _) => a,
            (None, Some(null)) => {
                rec.null_fallbacks += 1;
                null
            }
            (None, None) => {
                rec.infeasible_abort = true;
                break;
            }
        };
        let action = model.action(a).clone();
        let step = step_ground_truth(model, &x, &action, t + 1, &mut world);
        rec.steps += 1;
        rec.cumulative_reward += step.state_reward;
        rec.collided |= step.collided;
        if cfg.keep_trajectories {
            rec.trajectory.push(StepRecord {
                action: a.0,
                observation: step.observation.flatten(),
                state: step.next.flatten(),
                reward: step.state_reward,
            });
        }
        let source = root.unwrap_or(belief);
        let predicted = propagate(model, &source, &action, &mut rng);
        belief = match update(model, &predicted, &step.observation, &filter, &mut rng) {
            Ok(b) => b,
            Err(_) => {
                rec.filter_failures += 1;
                ParticleBelief::weighted(predicted.particles().to_vec(), BeliefKind::Posterior)
                    .expect("propagated belief is non-empty")
            }
        };
        x = step.next;
    }
    rec.reached_goal = model.reached_goal(&x);
    rec.terminal_goal_distance = model.goal_distance(&x);
    Ok(rec)
}

/// Runs every trial of `cfg`; `build` creates the environment of a trial
/// from its environment stream.
pub fn run_trials<M, F>(cfg: &RunConfig, build: F) -> Result<Vec<TrialRecord>, HarnessError>
where
    M: Benchmark,
    M::State: Flatten,
    M::Observation: Flatten,
    F: Fn(&mut ChaCha8Rng) -> Result<M, HarnessError> + Sync,
{
    cfg.validate()?;
    let mut records = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(cfg.seed, trial);
            let model = build(&mut trial_rng(seed, 2))?;
            run_trial(&model, cfg, trial, seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    records.sort_by_key(|r| r.trial);
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|t| trial_seed(7, t)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(trial_seed(7, 0), trial_seed(8, 0));
    }
}
