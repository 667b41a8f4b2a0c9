use std::f64::consts::FRAC_1_SQRT_2;

use rand::seq::index::sample;
use rand::Rng;
use safebsp_core::{ActionId, BeliefKind, GenerativeModel, ParticleBelief};
use serde::{Deserialize, Serialize};

use crate::dist::{gaussian, normal_logpdf, truncated_normal};
use crate::{field_error, Benchmark, ConfigError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlamConfig {
    pub robot_prior_mean: [f64; 2],
    pub landmark_prior_mean: [f64; 2],
    pub prior_variance: f64,
    pub goal: [f64; 2],
    pub field_min: [f64; 2],
    pub field_max: [f64; 2],
    pub cell_size: f64,
    /// Side of the square obstacle centred in an occupied cell.
    pub obstacle_size: f64,
    /// Fraction of field cells holding an obstacle.
    pub fill_fraction: f64,
    pub robot_radius: f64,
    pub landmark_radius: f64,
    pub step: f64,
    /// Zero makes the motion deterministic.
    pub motion_sigma: f64,
    pub motion_truncation: f64,
    /// Lower bound on the observation variance.
    pub observation_floor: f64,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self {
            robot_prior_mean: [0.0, 0.0],
            landmark_prior_mean: [5.0, 4.5],
            prior_variance: 0.1,
            goal: [10.0, 0.0],
            field_min: [-3.0, -3.0],
            field_max: [7.0, 3.0],
            cell_size: 1.0,
            obstacle_size: 0.6,
            fill_fraction: 0.8,
            robot_radius: 0.1,
            landmark_radius: 0.5,
            step: 1.0,
            motion_sigma: 0.0,
            motion_truncation: 0.3,
            observation_floor: 1e-3,
        }
    }
}

/// Robot and landmark positions `[rx, ry, lx, ly]`.
pub type SlamState = [f64; 4];

/// Active SLAM with one uncertain landmark and a field of tiny certain
/// obstacles sown at random cells.
#[derive(Clone, Debug)]
pub struct Slam {
    pub config: SlamConfig,
    actions: Vec<[f64; 2]>,
    cols: usize,
    rows: usize,
    occupied: Vec<bool>,
}

impl Slam {
    /// Sows `round(fill_fraction * cells)` obstacle cells without replacement.
    pub fn new<R: Rng + ?Sized>(config: SlamConfig, rng: &mut R) -> Result<Self, ConfigError> {
        let (cols, rows) = Self::grid(&config)?;
        let cells = cols * rows;
        let count = ((config.fill_fraction * cells as f64).round() as usize).min(cells);
        let mut occupied = vec![false; cells];
        for i in sample(rng, cells, count) {
            occupied[i] = true;
        }
        Self::with_obstacles(config, occupied)
    }

    pub fn with_obstacles(config: SlamConfig, occupied: Vec<bool>) -> Result<Self, ConfigError> {
        let (cols, rows) = Self::grid(&config)?;
        if occupied.len() != cols * rows {
            return Err(field_error("occupied", "length must match the cell grid"));
        }
        let s = config.step;
        let d = s * FRAC_1_SQRT_2;
        let actions = vec![
            [0.0, 0.0],
            [s, 0.0],
            [d, d],
            [0.0, s],
            [-d, d],
            [-s, 0.0],
            [-d, -d],
            [0.0, -s],
            [d, -d],
        ];
        Ok(Self {
            config,
            actions,
            cols,
            rows,
            occupied,
        })
    }

    fn grid(config: &SlamConfig) -> Result<(usize, usize), ConfigError> {
        if !(config.cell_size > 0.0) {
            return Err(field_error("cell_size", "must be positive"));
        }
        if !(config.obstacle_size > 0.0 && config.obstacle_size <= config.cell_size) {
            return Err(field_error("obstacle_size", "must lie in (0, cell_size]"));
        }
        if !(0.0..=1.0).contains(&config.fill_fraction) {
            return Err(field_error("fill_fraction", "must lie in [0, 1]"));
        }
        if !(config.prior_variance >= 0.0) || !(config.observation_floor > 0.0) {
            return Err(field_error("prior_variance", "variances must be non-negative"));
        }
        let w = config.field_max[0] - config.field_min[0];
        let h = config.field_max[1] - config.field_min[1];
        if !(w > 0.0 && h > 0.0) {
            return Err(field_error("field_max", "field must have positive extent"));
        }
        Ok((
            (w / config.cell_size).round() as usize,
            (h / config.cell_size).round() as usize,
        ))
    }

    pub fn occupied_cells(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    /// Obstacle square of cell `(i, j)`.
    fn cell_box(&self, i: usize, j: usize) -> ([f64; 2], [f64; 2]) {
        let c = self.config.cell_size;
        let m = 0.5 * (c - self.config.obstacle_size);
        let lo = [self.config.field_min[0] + i as f64 * c + m, self.config.field_min[1] + j as f64 * c + m];
        let side = self.config.obstacle_size;
        (lo, [lo[0] + side, lo[1] + side])
    }

    /// Occupied cells overlapped by the robot disc.
    fn touching_cells(&self, p: [f64; 2]) -> impl Iterator<Item = (usize, usize)> + '_ {
        let c = self.config.cell_size;
        let r = self.config.robot_radius;
        let f = self.config.field_min;
        let span = |v: f64, o: f64, n: usize| {
            let lo = ((v - r - o) / c).floor().max(0.0) as i64;
            let hi = ((v + r - o) / c).floor().min(n as f64 - 1.0) as i64;
            (lo, hi)
        };
        let (i0, i1) = span(p[0], f[0], self.cols);
        let (j0, j1) = span(p[1], f[1], self.rows);
        (i0..=i1)
            .flat_map(move |i| (j0..=j1).map(move |j| (i, j)))
            .filter(|&(i, j)| i >= 0 && j >= 0)
            .map(|(i, j)| (i as usize, j as usize))
            .filter(move |&(i, j)| self.occupied[j * self.cols + i])
            .filter(move |&(i, j)| {
                let (lo, hi) = self.cell_box(i, j);
                let dx = (lo[0] - p[0]).max(p[0] - hi[0]).max(0.0);
                let dy = (lo[1] - p[1]).max(p[1] - hi[1]).max(0.0);
                dx.hypot(dy) < r || (dx == 0.0 && dy == 0.0)
            })
    }

    fn separation(x: &SlamState) -> f64 {
        (x[0] - x[2]).hypot(x[1] - x[3])
    }

    fn observation_sd(&self, x: &SlamState) -> f64 {
        Self::separation(x).max(self.config.observation_floor).sqrt()
    }
}

impl GenerativeModel for Slam {
    type State = SlamState;
    type Action = [f64; 2];
    type Observation = [f64; 2];

    fn actions(&self) -> &[[f64; 2]] {
        &self.actions
    }

    fn sample_transition<R: Rng + ?Sized>(&self, x: &SlamState, a: &[f64; 2], rng: &mut R) -> SlamState {
        if a[0] == 0.0 && a[1] == 0.0 {
            return *x;
        }
        let (s, t) = (self.config.motion_sigma, self.config.motion_truncation);
        let w = if s > 0.0 {
            [truncated_normal(rng, 0.0, s, -t, t), truncated_normal(rng, 0.0, s, -t, t)]
        } else {
            [0.0, 0.0]
        };
        [x[0] + a[0] + w[0], x[1] + a[1] + w[1], x[2], x[3]]
    }

    fn sample_observation<R: Rng + ?Sized>(&self, x: &SlamState, rng: &mut R) -> [f64; 2] {
        let sd = self.observation_sd(x);
        [gaussian(rng, x[0] - x[2], sd), gaussian(rng, x[1] - x[3], sd)]
    }

    fn observation_logpdf(&self, z: &[f64; 2], x: &SlamState) -> f64 {
        let sd = self.observation_sd(x);
        normal_logpdf(z[0], x[0] - x[2], sd) + normal_logpdf(z[1], x[1] - x[3], sd)
    }

    fn reward(&self, _b: &ParticleBelief<SlamState>, _a: &[f64; 2], b_next: &ParticleBelief<SlamState>) -> f64 {
        let g = self.config.goal;
        -b_next.mean_by(|x| (x[0] - g[0]).hypot(x[1] - g[1]))
    }

    fn state_reward(&self, _x: &SlamState, _a: &[f64; 2], next: &SlamState) -> f64 {
        let g = self.config.goal;
        -(next[0] - g[0]).hypot(next[1] - g[1])
    }

    fn is_safe(&self, x: &SlamState, _time: usize) -> bool {
        Self::separation(x) >= self.config.robot_radius + self.config.landmark_radius
            && self.touching_cells([x[0], x[1]]).next().is_none()
    }

    fn distance_to_safe(&self, x: &SlamState, time: usize) -> f64 {
        if self.is_safe(x, time) {
            return 0.0;
        }
        let landmark = (self.config.robot_radius + self.config.landmark_radius - Self::separation(x)).max(0.0);
        let p = [x[0], x[1]];
        let r = self.config.robot_radius;
        let cells = self
            .touching_cells(p)
            .map(|(i, j)| {
                let (lo, hi) = self.cell_box(i, j);
                let inside = (p[0] - lo[0]).min(hi[0] - p[0]).min(p[1] - lo[1]).min(hi[1] - p[1]);
                if inside >= 0.0 {
                    inside + r
                } else {
                    let dx = (lo[0] - p[0]).max(p[0] - hi[0]).max(0.0);
                    let dy = (lo[1] - p[1]).max(p[1] - hi[1]).max(0.0);
                    r - dx.hypot(dy)
                }
            })
            .fold(0.0, f64::max);
        landmark.max(cells)
    }

    fn null_action(&self) -> Option<ActionId> {
        Some(ActionId(0))
    }

    fn nominal_transition(&self, x: &SlamState, a: &[f64; 2]) -> SlamState {
        [x[0] + a[0], x[1] + a[1], x[2], x[3]]
    }

    fn transition_radius(&self) -> f64 {
        if self.config.motion_sigma > 0.0 {
            self.config.motion_truncation * std::f64::consts::SQRT_2
        } else {
            0.0
        }
    }

    fn state_distance(&self, x: &SlamState, y: &SlamState) -> f64 {
        let r = (x[0] - y[0]).hypot(x[1] - y[1]);
        r.max((x[2] - y[2]).hypot(x[3] - y[3]))
    }
}

impl Slam {
    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> SlamState {
        let sd = self.config.prior_variance.sqrt();
        let (r, l) = (self.config.robot_prior_mean, self.config.landmark_prior_mean);
        [
            gaussian(rng, r[0], sd),
            gaussian(rng, r[1], sd),
            gaussian(rng, l[0], sd),
            gaussian(rng, l[1], sd),
        ]
    }
}

impl Benchmark for Slam {
    /// The true start is drawn from the prior conditioned on being collision
    /// free; the initial belief is the unconditioned prior.
    fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> SlamState {
        let mut x = self.sample_prior(rng);
        for _ in 0..10_000 {
            if self.is_safe(&x, 0) {
                break;
            }
            x = self.sample_prior(rng);
        }
        x
    }

    fn initial_belief<R: Rng + ?Sized>(&self, particles: usize, rng: &mut R) -> ParticleBelief<SlamState> {
        let states = (0..particles).map(|_| self.sample_prior(rng)).collect();
        ParticleBelief::uniform(states, BeliefKind::Posterior).expect("at least one particle")
    }

    fn goal_distance(&self, x: &SlamState) -> f64 {
        let g = self.config.goal;
        (x[0] - g[0]).hypot(x[1] - g[1])
    }

    fn reached_goal(&self, x: &SlamState) -> bool {
        self.goal_distance(x) <= self.config.step
    }
}
