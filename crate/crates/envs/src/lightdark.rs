use rand::Rng;
use safebsp_core::{ActionId, GenerativeModel, ParticleBelief};
use serde::{Deserialize, Serialize};

use crate::dist::{gaussian, normal_logpdf, truncated_normal};
use crate::{field_error, Benchmark, ConfigError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightDarkConfig {
    pub actions: Vec<f64>,
    pub motion_sigma: f64,
    /// Motion noise is truncated to `[-motion_truncation, motion_truncation]`.
    pub motion_truncation: f64,
    pub light_center: f64,
    pub light_half_width: f64,
    pub light_sigma: f64,
    /// Everything at or left of the cliff is unsafe.
    pub cliff: f64,
    /// Closed pit interval.
    pub pit: (f64, f64),
    pub goal_half_width: f64,
    pub stop_reward: f64,
    pub prior_mean: f64,
    pub prior_variance: f64,
    pub prior_bounds: (f64, f64),
}

impl Default for LightDarkConfig {
    fn default() -> Self {
        Self {
            actions: vec![
                0.0, 0.5, -0.5, 1.0, -1.0, 1.5, -1.5, 2.0, -2.0, 2.5, -2.5, 6.0, -6.0,
            ],
            motion_sigma: 0.1,
            motion_truncation: 0.5,
            light_center: 2.0,
            light_half_width: 1.0,
            light_sigma: 1e-10,
            cliff: -0.75,
            pit: (1.0, 3.0),
            goal_half_width: 0.75,
            stop_reward: 100.0,
            prior_mean: 7.0,
            prior_variance: 20.0,
            prior_bounds: (6.0, 8.0),
        }
    }
}

/// One-dimensional localization with a light region near which the sensor
/// becomes exact, a cliff on the left and a pit between the start and the
/// goal.
#[derive(Clone, Debug)]
pub struct LightDark {
    pub config: LightDarkConfig,
}

impl LightDark {
    pub fn new(config: LightDarkConfig) -> Result<Self, ConfigError> {
        if config.actions.is_empty() {
            return Err(field_error("actions", "must not be empty"));
        }
        if config.motion_sigma < 0.0 || config.motion_truncation < 0.0 {
            return Err(field_error("motion_sigma", "noise parameters must be non-negative"));
        }
        if !(config.light_sigma > 0.0) {
            return Err(field_error("light_sigma", "must be positive"));
        }
        if config.prior_bounds.0 > config.prior_bounds.1 {
            return Err(field_error("prior_bounds", "lower bound exceeds upper bound"));
        }
        Ok(Self { config })
    }

    pub fn observation_sigma(&self, x: f64) -> f64 {
        let d = (x - self.config.light_center).abs();
        if d <= self.config.light_half_width {
            self.config.light_sigma
        } else {
            d
        }
    }

    pub fn state_reward_of(&self, x: f64, a: f64) -> f64 {
        if a == 0.0 {
            if x.abs() <= self.config.goal_half_width {
                self.config.stop_reward
            } else {
                -self.config.stop_reward
            }
        } else {
            -x.abs()
        }
    }
}

impl Default for LightDark {
    fn default() -> Self {
        Self::new(LightDarkConfig::default()).expect("default config is valid")
    }
}

impl GenerativeModel for LightDark {
    type State = f64;
    type Action = f64;
    type Observation = f64;

    fn actions(&self) -> &[f64] {
        &self.config.actions
    }

    fn sample_transition<R: Rng + ?Sized>(&self, x: &f64, a: &f64, rng: &mut R) -> f64 {
        let t = self.config.motion_truncation;
        x + a + truncated_normal(rng, 0.0, self.config.motion_sigma, -t, t)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, x: &f64, rng: &mut R) -> f64 {
        gaussian(rng, *x, self.observation_sigma(*x))
    }

    fn observation_logpdf(&self, z: &f64, x: &f64) -> f64 {
        normal_logpdf(*z, *x, self.observation_sigma(*x))
    }

    fn reward(&self, b: &ParticleBelief<f64>, a: &f64, b_next: &ParticleBelief<f64>) -> f64 {
        b.mean_by(|x| self.state_reward_of(*x, *a)) - b_next.variance_by(|x| *x)
    }

    fn state_reward(&self, x: &f64, a: &f64, _next: &f64) -> f64 {
        self.state_reward_of(*x, *a)
    }

    fn is_safe(&self, x: &f64, _time: usize) -> bool {
        let (lo, hi) = self.config.pit;
        *x > self.config.cliff && !(*x >= lo && *x <= hi)
    }

    fn distance_to_safe(&self, x: &f64, time: usize) -> f64 {
        if self.is_safe(x, time) {
            return 0.0;
        }
        let (lo, hi) = self.config.pit;
        if *x <= self.config.cliff {
            self.config.cliff - x
        } else {
            (x - lo).min(hi - x)
        }
    }

    fn nominal_transition(&self, x: &f64, a: &f64) -> f64 {
        x + a
    }

    fn transition_radius(&self) -> f64 {
        self.config.motion_truncation
    }

    fn state_distance(&self, x: &f64, y: &f64) -> f64 {
        (x - y).abs()
    }

    fn null_action(&self) -> Option<ActionId> {
        None
    }
}

impl Benchmark for LightDark {
    fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.config.prior_bounds;
        truncated_normal(rng, self.config.prior_mean, self.config.prior_variance.sqrt(), lo, hi)
    }

    fn goal_distance(&self, x: &f64) -> f64 {
        (x.abs() - self.config.goal_half_width).max(0.0)
    }

    fn reached_goal(&self, x: &f64) -> bool {
        x.abs() <= self.config.goal_half_width
    }
}
