use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::belief::{
    make_safe, propagate, update, FilterConfig, ParticleBelief, ResampleRule,
};
use crate::config::RolloutConfig;
use crate::expand::all_terminal;
use crate::model::{ActionId, GenerativeModel};
use crate::safety::{propagated_passes, CostOperator, SafetySpec};

#[derive(Clone, Copy, Debug)]
pub struct RolloutParams {
    pub safety: Option<SafetySpec>,
    pub make_safe: bool,
    pub filter: FilterConfig,
    pub config: RolloutConfig,
    /// Accumulates a constraint cost alongside the reward when set.
    pub cost: Option<CostOperator>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RolloutReturn {
    pub value: f64,
    pub cost: f64,
    pub steps: usize,
}

/// Fraction of `m` myopic samples in which taking `a` from the safe belief
/// passes the gate. Observations come from the full belief.
pub fn myopic_pass_rate<M: GenerativeModel, R: Rng + ?Sized>(
    model: &M,
    spec: &SafetySpec,
    m: usize,
    full: &ParticleBelief<M::State>,
    safe: &ParticleBelief<M::State>,
    a: ActionId,
    time: usize,
    rng: &mut R,
) -> f64 {
    let pass = myopic_passes(model, spec, m, usize::MAX, full, safe, a, time, rng);
    pass as f64 / m.max(1) as f64
}

/// Passing samples out of `m`, giving up once more than `max_failures`
/// samples have failed.
#[allow(clippy::too_many_arguments)]
fn myopic_passes<M: GenerativeModel, R: Rng + ?Sized>(
    model: &M,
    spec: &SafetySpec,
    m: usize,
    max_failures: usize,
    full: &ParticleBelief<M::State>,
    safe: &ParticleBelief<M::State>,
    a: ActionId,
    time: usize,
    rng: &mut R,
) -> usize {
    let action = model.action(a);
    let plain = FilterConfig {
        resample: ResampleRule::Never,
    };
    let mut pass = 0usize;
    for k in 0..m {
        if k - pass > max_failures {
            break;
        }
        let sprop = propagate(model, safe, action, rng);
        if !propagated_passes(model, spec, &sprop, time + 1) {
            continue;
        }
        let i = full.sample_index(rng);
        let x = model.sample_transition(&full.particles()[i].state, action, rng);
        let z = model.sample_observation(&x, rng);
        let Ok(spost) = update(model, &sprop, &z, &plain, rng) else {
            continue;
        };
        if spec.payoff(model, &spost, time + 1) >= spec.delta {
            pass += 1;
        }
    }
    pass
}

/// Rollout action: uniform among the actions passing the myopic check at
/// rate `1 - epsilon`, otherwise the best rate with ties to the lowest id.
/// Without a gate every action is admissible.
pub fn choose_rollout_action<M: GenerativeModel, R: Rng + ?Sized>(
    model: &M,
    params: &RolloutParams,
    full: &ParticleBelief<M::State>,
    safe: &ParticleBelief<M::State>,
    time: usize,
    rng: &mut R,
) -> ActionId {
    let count = model.num_actions();
    let Some(spec) = &params.safety else {
        return ActionId(rng.random_range(0..count));
    };
    let m = params.config.samples;
    // Checking actions in random order and keeping the first that passes is
    // a uniform draw among the passing ones.
    let allowed = (params.config.epsilon * m as f64).floor() as usize;
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(rng);
    for &i in &order {
        let pass = myopic_passes(model, spec, m, allowed, full, safe, ActionId(i), time, rng);
        if m - pass <= allowed {
            return ActionId(i);
        }
    }
    let mut best = 0;
    let mut best_rate = f64::NEG_INFINITY;
    for i in 0..count {
        let r = myopic_pass_rate(model, spec, m, full, safe, ActionId(i), time, rng);
        if r > best_rate {
            best = i;
            best_rate = r;
        }
    }
    ActionId(best)
}

/// Simulates up to `steps` rollout actions from the pair of beliefs and
/// returns the accumulated belief reward.
pub fn rollout<M: GenerativeModel, R: Rng + ?Sized>(
    model: &M,
    params: &RolloutParams,
    full: Arc<ParticleBelief<M::State>>,
    safe: Arc<ParticleBelief<M::State>>,
    time: usize,
    steps: usize,
    rng: &mut R,
) -> RolloutReturn {
    let steps = params.config.max_depth.map_or(steps, |d| d.min(steps));
    let track_safe = params.safety.is_some() && params.make_safe;
    let mut out = RolloutReturn::default();
    let (mut full, mut safe) = (full, safe);
    for k in 0..steps {
        if all_terminal(model, &full) {
            break;
        }
        let t = time + k;
        let base = if track_safe {
            match make_safe(model, &safe, t, rng) {
                Ok(b) => Arc::new(b),
                Err(_) => break,
            }
        } else {
            safe.clone()
        };
        let a = choose_rollout_action(model, params, &full, &base, t, rng);
        let action = model.action(a);
        let prop = propagate(model, &full, action, rng);
        let i = prop.sample_index(rng);
        let z = model.sample_observation(&prop.particles()[i].state, rng);
        let Ok(post) = update(model, &prop, &z, &params.filter, rng) else {
            break;
        };
        out.value += model.reward(&full, action, &post);
        if let Some(c) = &params.cost {
            out.cost += c.cost(model, &prop, &post, t + 1);
        }
        out.steps += 1;
        let post = Arc::new(post);
        safe = if track_safe {
            let sprop = propagate(model, &base, action, rng);
            match update(model, &sprop, &z, &params.filter, rng) {
                Ok(b) => Arc::new(b),
                Err(_) => break,
            }
        } else {
            post.clone()
        };
        full = post;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::BeliefKind;
    use crate::toy::LineModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(delta: f64) -> RolloutParams {
        RolloutParams {
            safety: Some(SafetySpec::prob_safe(delta).unwrap()),
            make_safe: true,
            filter: FilterConfig::default(),
            config: RolloutConfig {
                enabled: true,
                max_depth: None,
                samples: 1,
                epsilon: 0.0,
            },
            cost: None,
        }
    }

    #[test]
    fn deterministic_safe_model_passes_every_action() {
        let model = LineModel::default().with_motion_noise(0.0);
        let b = ParticleBelief::uniform(vec![0.0; 20], BeliefKind::Posterior).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for a in 0..3 {
            let r = myopic_pass_rate(&model, &params(1.0).safety.unwrap(), 1, &b, &b, ActionId(a), 0, &mut rng);
            assert_eq!(r, 1.0);
        }
    }

    #[test]
    fn all_failing_actions_fall_back_to_lowest_best_rate() {
        let model = LineModel::default()
            .with_motion_noise(0.0)
            .with_safe_interval(10.0, 20.0);
        let b = ParticleBelief::uniform(vec![0.0; 10], BeliefKind::Posterior).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = choose_rollout_action(&model, &params(0.5), &b, &b, 0, &mut rng);
        assert_eq!(a, ActionId(0));
    }

    #[test]
    fn rollout_only_takes_passing_actions() {
        // Moving left leaves the safe interval, so the rollout must avoid it.
        let model = LineModel::default()
            .with_motion_noise(0.0)
            .with_safe_interval(-0.5, 10.0);
        let b = Arc::new(ParticleBelief::uniform(vec![0.0; 10], BeliefKind::Posterior).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = choose_rollout_action(&model, &params(1.0), &b, &b, 0, &mut rng);
            assert_ne!(a, ActionId(0));
        }
        let ret = rollout(&model, &params(1.0), b.clone(), b, 0, 4, &mut rng);
        assert_eq!(ret.steps, 4);
    }
}
