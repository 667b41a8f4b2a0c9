use std::sync::Arc;

use rand::Rng;

use crate::belief::{make_safe, propagate, update_with_evidence, FilterConfig, ParticleBelief};
use crate::model::{ActionId, GenerativeModel};
use crate::tree::{ChildBeliefs, NodeId, SearchTree};

pub(crate) struct Expansion<S, O> {
    pub observation: O,
    pub reward: f64,
    pub weight: f64,
    pub beliefs: ChildBeliefs<S>,
}

pub(crate) enum ExpandError {
    /// The full belief could not absorb the observation; the lace is dropped.
    Full,
    /// The safe belief collapsed; counts as a gate failure.
    Safe,
}

pub(crate) fn all_terminal<M: GenerativeModel>(model: &M, b: &ParticleBelief<M::State>) -> bool {
    b.iter().all(|(x, w)| w <= 0.0 || model.is_terminal(x))
}

/// Samples a new observation child of `(h, a)`. The observation is drawn
/// from the full belief; the safe belief, when tracked, is conditioned on
/// the same observation.
pub(crate) fn expand<M: GenerativeModel, R: Rng + ?Sized>(
    model: &M,
    tree: &mut SearchTree<M::State, M::Observation>,
    h: NodeId,
    a: ActionId,
    track_safe: bool,
    filter: &FilterConfig,
    time: usize,
    rng: &mut R,
) -> Result<Expansion<M::State, M::Observation>, ExpandError> {
    let action = model.action(a);
    let node = tree.node(h);
    let parent = node.belief.clone();
    let parent_safe = node.safe_belief.clone();
    let prop = propagate(model, &parent, action, rng);
    let i = prop.sample_index(rng);
    let z = model.sample_observation(&prop.particles()[i].state, rng);
    let (post, log_ev) =
        update_with_evidence(model, &prop, &z, filter, rng).map_err(|_| ExpandError::Full)?;
    let reward = model.reward(&parent, action, &post);
    let terminal = all_terminal(model, &post);
    let post = Arc::new(post);
    if !track_safe {
        return Ok(Expansion {
            observation: z,
            reward,
            weight: 1.0,
            beliefs: ChildBeliefs {
                belief: post.clone(),
                safe_belief: post,
                safe_propagated: Arc::new(prop),
                terminal,
            },
        });
    }
    let base = match tree.filtered_cache(h) {
        Some(b) => b,
        None => {
            let b = Arc::new(make_safe(model, &parent_safe, time, rng).map_err(|_| ExpandError::Safe)?);
            tree.set_filtered_cache(h, b.clone());
            b
        }
    };
    let sprop = propagate(model, &base, action, rng);
    let (spost, slog_ev) =
        update_with_evidence(model, &sprop, &z, filter, rng).map_err(|_| ExpandError::Safe)?;
    Ok(Expansion {
        observation: z,
        reward,
        weight: (slog_ev - log_ev).exp(),
        beliefs: ChildBeliefs {
            belief: post,
            safe_belief: Arc::new(spost),
            safe_propagated: Arc::new(sprop),
            terminal,
        },
    })
}

/// Highest-scoring action; ties go to the lowest id. Unvisited actions
/// score infinity.
pub(crate) fn argmax_action<O>(
    actions: &[crate::tree::ActionNode<O>],
    score: impl Fn(&crate::tree::ActionNode<O>) -> f64,
) -> Option<ActionId> {
    let mut best: Option<(f64, ActionId)> = None;
    for an in actions {
        let s = if an.n == 0 { f64::INFINITY } else { score(an) };
        best = match best {
            None => Some((s, an.action)),
            Some((bs, ba)) => {
                if s > bs || (s == bs && an.action < ba) {
                    Some((s, an.action))
                } else {
                    Some((bs, ba))
                }
            }
        };
    }
    best.map(|(_, a)| a)
}
