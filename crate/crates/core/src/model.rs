use std::fmt::Debug;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::ParticleBelief;

/// Index into [`GenerativeModel::actions`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId(pub usize);

/// Black-box POMDP simulator used by the filters and planners.
///
/// Observation densities must be strictly positive wherever the observation
/// can be generated, otherwise posterior reweighting can silently discard
/// safe particles.
pub trait GenerativeModel {
    type State: Clone + Debug;
    type Action: Clone + Debug;
    type Observation: Clone + Debug;

    fn actions(&self) -> &[Self::Action];

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        x: &Self::State,
        a: &Self::Action,
        rng: &mut R,
    ) -> Self::State;

    fn sample_observation<R: Rng + ?Sized>(&self, x: &Self::State, rng: &mut R)
        -> Self::Observation;

    fn observation_logpdf(&self, z: &Self::Observation, x: &Self::State) -> f64;

    /// Belief-dependent reward of taking `a` in `b` and arriving at `b_next`.
    fn reward(
        &self,
        b: &ParticleBelief<Self::State>,
        a: &Self::Action,
        b_next: &ParticleBelief<Self::State>,
    ) -> f64;

    /// Membership of the safe set at the given time index.
    fn is_safe(&self, x: &Self::State, time: usize) -> bool;

    fn is_terminal(&self, _x: &Self::State) -> bool {
        false
    }

    /// Reward of a single ground-truth step, used for reporting only.
    fn state_reward(&self, _x: &Self::State, _a: &Self::Action, _next: &Self::State) -> f64 {
        0.0
    }

    /// Picks the next action to add at a belief node among those not yet
    /// present or pruned there. `available` is never empty.
    fn propose_action<R: Rng + ?Sized>(
        &self,
        _b: &ParticleBelief<Self::State>,
        available: &[ActionId],
        rng: &mut R,
    ) -> ActionId {
        available[rng.random_range(0..available.len())]
    }

    /// Action executed when no safe action exists, if the problem has one.
    fn null_action(&self) -> Option<ActionId> {
        None
    }

    /// Distance from `x` to the safe set; zero inside it.
    fn distance_to_safe(&self, x: &Self::State, time: usize) -> f64 {
        if self.is_safe(x, time) {
            0.0
        } else {
            1.0
        }
    }

    /// Noise-free successor used to audit bounded transition support.
    fn nominal_transition(&self, x: &Self::State, a: &Self::Action) -> Self::State;

    /// Every sampled successor lies within this distance of the nominal one.
    fn transition_radius(&self) -> f64;

    fn state_distance(&self, x: &Self::State, y: &Self::State) -> f64;

    fn action(&self, id: ActionId) -> &Self::Action {
        &self.actions()[id.0]
    }

    fn num_actions(&self) -> usize {
        self.actions().len()
    }
}
