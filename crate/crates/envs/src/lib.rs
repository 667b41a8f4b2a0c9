//! The four benchmark problems: Light Dark, Lidar Roomba, active SLAM with
//! tiny obstacles, and PushBox2D.

pub mod dist;
pub mod lightdark;
pub mod pushbox;
pub mod roomba;
pub mod slam;

use rand::Rng;
use safebsp_core::{BeliefKind, GenerativeModel, ParticleBelief};
use serde::de::DeserializeOwned;
use thiserror::Error;

pub use lightdark::{LightDark, LightDarkConfig};
pub use pushbox::{PushBox, PushBoxConfig};
pub use roomba::{Roomba, RoombaConfig};
pub use slam::{Slam, SlamConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read environment config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid environment config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid environment config field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
}

/// Reads a JSON object; missing fields keep their defaults.
pub fn load_config<T: DeserializeOwned>(path: &std::path::Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// A problem that can run the closed loop: it knows its prior and how far
/// the true state is from the goal.
pub trait Benchmark: GenerativeModel {
    fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    fn initial_belief<R: Rng + ?Sized>(&self, particles: usize, rng: &mut R) -> ParticleBelief<Self::State> {
        let states = (0..particles).map(|_| self.sample_initial_state(rng)).collect();
        ParticleBelief::uniform(states, BeliefKind::Posterior).expect("at least one particle")
    }

    fn goal_distance(&self, _x: &Self::State) -> f64 {
        0.0
    }

    fn reached_goal(&self, _x: &Self::State) -> bool {
        false
    }
}

#[derive(Clone, Debug)]
pub struct GroundTruthStep<S, O> {
    pub next: S,
    pub observation: O,
    pub state_reward: f64,
    pub collided: bool,
    pub terminal: bool,
}

/// Samples the true transition and observation and reports whether the new
/// state left the safe set.
pub fn step_ground_truth<M: GenerativeModel, R: Rng + ?Sized>(
    model: &M,
    x: &M::State,
    a: &M::Action,
    time: usize,
    rng: &mut R,
) -> GroundTruthStep<M::State, M::Observation> {
    let next = model.sample_transition(x, a, rng);
    let observation = model.sample_observation(&next, rng);
    GroundTruthStep {
        state_reward: model.state_reward(x, a, &next),
        collided: !model.is_safe(&next, time),
        terminal: model.is_terminal(&next),
        observation,
        next,
    }
}

pub(crate) fn field_error(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        reason: reason.into(),
    }
}
