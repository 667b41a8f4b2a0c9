//! Small models for tests and examples.

use std::f64::consts::PI;

use rand::Rng;

use crate::belief::ParticleBelief;
use crate::model::GenerativeModel;

/// One-dimensional robot with additive bounded noise and a Gaussian position
/// sensor. Safe on the union of the configured intervals.
#[derive(Clone, Debug)]
pub struct LineModel {
    pub moves: Vec<f64>,
    pub motion_half_width: f64,
    pub observation_sigma: f64,
    pub safe: Vec<(f64, f64)>,
    pub goal: f64,
}

impl Default for LineModel {
    fn default() -> Self {
        Self {
            moves: vec![-1.0, 0.0, 1.0],
            motion_half_width: 0.1,
            observation_sigma: 0.5,
            safe: vec![(f64::NEG_INFINITY, f64::INFINITY)],
            goal: 0.0,
        }
    }
}

impl LineModel {
    pub fn with_observation_sigma(mut self, sigma: f64) -> Self {
        self.observation_sigma = sigma;
        self
    }

    pub fn with_safe_interval(mut self, lo: f64, hi: f64) -> Self {
        self.safe = vec![(lo, hi)];
        self
    }

    pub fn with_moves(mut self, moves: Vec<f64>) -> Self {
        self.moves = moves;
        self
    }

    pub fn with_motion_noise(mut self, half_width: f64) -> Self {
        self.motion_half_width = half_width;
        self
    }

    pub fn with_goal(mut self, goal: f64) -> Self {
        self.goal = goal;
        self
    }
}

impl GenerativeModel for LineModel {
    type State = f64;
    type Action = f64;
    type Observation = f64;

    fn actions(&self) -> &[f64] {
        &self.moves
    }

    fn sample_transition<R: Rng + ?Sized>(&self, x: &f64, a: &f64, rng: &mut R) -> f64 {
        let w = if self.motion_half_width > 0.0 {
            rng.random_range(-self.motion_half_width..self.motion_half_width)
        } else {
            0.0
        };
        x + a + w
    }

    fn sample_observation<R: Rng + ?Sized>(&self, x: &f64, rng: &mut R) -> f64 {
        // Box-Muller keeps this crate free of a distributions dependency.
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        x + self.observation_sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    fn observation_logpdf(&self, z: &f64, x: &f64) -> f64 {
        let s = self.observation_sigma;
        let d = (z - x) / s;
        -0.5 * d * d - s.ln() - 0.5 * (2.0 * PI).ln()
    }

    fn reward(&self, _b: &ParticleBelief<f64>, _a: &f64, b_next: &ParticleBelief<f64>) -> f64 {
        -b_next.mean_by(|x| (x - self.goal).abs())
    }

    fn is_safe(&self, x: &f64, _time: usize) -> bool {
        self.safe.iter().any(|&(lo, hi)| *x > lo && *x < hi)
    }

    fn distance_to_safe(&self, x: &f64, time: usize) -> f64 {
        if self.is_safe(x, time) {
            return 0.0;
        }
        self.safe
            .iter()
            .map(|&(lo, hi)| (lo - x).max(x - hi).max(0.0))
            .fold(f64::INFINITY, f64::min)
    }

    fn nominal_transition(&self, x: &f64, a: &f64) -> f64 {
        x + a
    }

    fn transition_radius(&self) -> f64 {
        self.motion_half_width
    }

    fn state_distance(&self, x: &f64, y: &f64) -> f64 {
        (x - y).abs()
    }
}

/// Static discrete model with a binary observation whose likelihood of
/// `true` is tabulated per state. States at even indices are safe.
#[derive(Clone, Debug)]
pub struct TableModel {
    pub likelihood: Vec<f64>,
    actions: Vec<()>,
}

impl TableModel {
    pub fn new(likelihood: Vec<f64>) -> Self {
        Self {
            likelihood,
            actions: vec![()],
        }
    }
}

impl GenerativeModel for TableModel {
    type State = usize;
    type Action = ();
    type Observation = bool;

    fn actions(&self) -> &[()] {
        &self.actions
    }

    fn sample_transition<R: Rng + ?Sized>(&self, x: &usize, _a: &(), _rng: &mut R) -> usize {
        *x
    }

    fn sample_observation<R: Rng + ?Sized>(&self, x: &usize, rng: &mut R) -> bool {
        rng.random::<f64>() < self.likelihood[*x]
    }

    fn observation_logpdf(&self, z: &bool, x: &usize) -> f64 {
        let p = self.likelihood[*x];
        if *z {
            p.ln()
        } else {
            (1.0 - p).ln()
        }
    }

    fn reward(&self, _b: &ParticleBelief<usize>, _a: &(), _bn: &ParticleBelief<usize>) -> f64 {
        0.0
    }

    fn is_safe(&self, x: &usize, _time: usize) -> bool {
        x % 2 == 0
    }

    fn nominal_transition(&self, x: &usize, _a: &()) -> usize {
        *x
    }

    fn transition_radius(&self) -> f64 {
        0.0
    }

    fn state_distance(&self, x: &usize, y: &usize) -> f64 {
        x.abs_diff(*y) as f64
    }
}
