use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use safebsp_core::geometry::{dist, Point, Shape};
use safebsp_core::{ActionId, GenerativeModel, ParticleBelief};
use serde::{Deserialize, Serialize};

use crate::dist::{gaussian, normal_logpdf, truncated_normal};
use crate::{field_error, Benchmark, ConfigError};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PushBoxConfig {
    pub width: f64,
    pub height: f64,
    /// Width of the unsafe band along the map border.
    pub edge_width: f64,
    pub obstacles: Vec<Shape>,
    pub robot_radius: f64,
    pub puck_radius: f64,
    pub robot_prior_mean: Point,
    pub robot_prior_sd: f64,
    pub puck_start: Point,
    pub goal: Point,
    pub goal_radius: f64,
    pub step: f64,
    pub motion_sigma: f64,
    /// Robot noise is truncated at this many standard deviations per axis.
    pub motion_truncation_sds: f64,
    /// `(mu, sigma, lo, hi)` of the push scale.
    pub push_scale: (f64, f64, f64, f64),
    pub push_gain: f64,
    pub push_jitter_sigma: f64,
    pub push_jitter_bound: f64,
    /// Regions where the bearing-range sensor is accurate.
    pub low_noise: Vec<Shape>,
    pub low_noise_sd: f64,
    pub high_noise_sd: f64,
    /// Probability that the contact flag reads wrong.
    pub contact_flip: f64,
    pub edge_penalty: f64,
    pub goal_reward: f64,
    pub null_penalty: f64,
    pub entropy_weight: f64,
    pub entropy_floor: f64,
    /// Adds `P(safe | b')` to the reward; for planners without a chance
    /// constraint.
    pub soft_safety_term: bool,
}

impl Default for PushBoxConfig {
    fn default() -> Self {
        Self {
            width: 24.0,
            height: 14.0,
            edge_width: 1.0,
            obstacles: vec![Shape::rect(13.0, 5.0, 15.0, 14.0)],
            robot_radius: 0.5,
            puck_radius: 0.5,
            robot_prior_mean: [4.0, 2.5],
            robot_prior_sd: 0.2,
            puck_start: [8.0, 2.5],
            goal: [19.0, 2.5],
            goal_radius: 1.5,
            step: 1.0,
            motion_sigma: 0.15,
            motion_truncation_sds: 3.0,
            push_scale: (1.0, 0.1, 0.8, 1.2),
            push_gain: 5.0,
            push_jitter_sigma: 0.1,
            push_jitter_bound: 0.1,
            low_noise: vec![Shape::rect(1.0, 1.0, 23.0, 3.5)],
            low_noise_sd: 0.05,
            high_noise_sd: 1.0,
            contact_flip: 1e-3,
            edge_penalty: 1000.0,
            goal_reward: 100.0,
            null_penalty: 100.0,
            entropy_weight: 1.0,
            entropy_floor: 1e-3,
            soft_safety_term: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushBoxState {
    pub robot: Point,
    pub puck: Point,
    /// Whether the last move touched the puck.
    pub contact: bool,
    /// Set by the Null action.
    pub stopped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PushAction {
    Null,
    Move(Point),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushObservation {
    pub contact: bool,
    pub bearing_range: Point,
}

/// Disc robot pushing a disc puck towards a goal while staying clear of the
/// border band and obstacles.
#[derive(Clone, Debug)]
pub struct PushBox {
    pub config: PushBoxConfig,
    actions: Vec<PushAction>,
}

impl PushBox {
    pub fn new(config: PushBoxConfig) -> Result<Self, ConfigError> {
        if !(config.width > 2.0 * config.edge_width && config.height > 2.0 * config.edge_width) {
            return Err(field_error("width", "map must be larger than the border band"));
        }
        if !(config.step > 0.0) {
            return Err(field_error("step", "must be positive"));
        }
        if !(config.motion_sigma >= 0.0) {
            return Err(field_error("motion_sigma", "must be non-negative"));
        }
        let (_, sd, lo, hi) = config.push_scale;
        if !(sd > 0.0 && lo < hi) {
            return Err(field_error("push_scale", "need sigma > 0 and lo < hi"));
        }
        if !(config.low_noise_sd > 0.0 && config.high_noise_sd > 0.0) {
            return Err(field_error("low_noise_sd", "sensor noise must be positive"));
        }
        if !(0.0 < config.contact_flip && config.contact_flip < 0.5) {
            return Err(field_error("contact_flip", "must lie in (0, 0.5)"));
        }
        let s = config.step;
        let d = s * FRAC_1_SQRT_2;
        let mut actions = vec![PushAction::Null];
        actions.extend(
            [[s, 0.0], [d, d], [0.0, s], [-d, d], [-s, 0.0], [-d, -d], [0.0, -s], [d, -d]]
                .map(PushAction::Move),
        );
        Ok(Self { config, actions })
    }

    fn disc_clear(&self, p: Point, r: f64) -> bool {
        let c = &self.config;
        let e = c.edge_width + r;
        p[0] >= e
            && p[0] <= c.width - e
            && p[1] >= e
            && p[1] <= c.height - e
            && c.obstacles.iter().all(|s| !s.overlaps_disc(p, r))
    }

    pub fn puck_in_goal(&self, x: &PushBoxState) -> bool {
        dist(x.puck, self.config.goal) <= self.config.goal_radius
    }

    fn sensor_sd(&self, robot: Point) -> f64 {
        if self.config.low_noise.iter().any(|s| s.contains(robot)) {
            self.config.low_noise_sd
        } else {
            self.config.high_noise_sd
        }
    }

    /// First time along `from + t d`, `t` in `[0, 1]`, where the robot touches
    /// the puck.
    fn contact_time(&self, from: Point, d: Point, puck: Point) -> Option<f64> {
        let reach = self.config.robot_radius + self.config.puck_radius;
        let q = [from[0] - puck[0], from[1] - puck[1]];
        let a = d[0] * d[0] + d[1] * d[1];
        let b = 2.0 * (q[0] * d[0] + q[1] * d[1]);
        let c = q[0] * q[0] + q[1] * q[1] - reach * reach;
        if c < 0.0 {
            return (b < 0.0).then_some(0.0);
        }
        let disc = b * b - 4.0 * a * c;
        if a == 0.0 || disc < 0.0 {
            return None;
        }
        let t = (-b - disc.sqrt()) / (2.0 * a);
        (0.0..=1.0).contains(&t).then_some(t)
    }

    /// Nearest-neighbour entropy estimate of the robot position marginal.
    pub fn robot_entropy(&self, b: &ParticleBelief<PushBoxState>) -> f64 {
        let pts: Vec<(Point, f64)> = b.iter().filter(|(_, w)| *w > 0.0).map(|(x, w)| (x.robot, w)).collect();
        let n = pts.len();
        if n < 2 {
            return 0.0;
        }
        let floor = self.config.entropy_floor;
        let mut acc = 0.0;
        let mut total = 0.0;
        for (i, (p, w)) in pts.iter().enumerate() {
            let rho = pts
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, (q, _))| dist(*p, *q))
                .fold(f64::INFINITY, f64::min)
                .max(floor);
            acc += w * 2.0 * rho.ln();
            total += w;
        }
        acc / total + ((n - 1) as f64).ln() + EULER_GAMMA + PI.ln()
    }

    fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let s = self.config.motion_sigma;
        if s == 0.0 {
            return [0.0, 0.0];
        }
        let t = s * self.config.motion_truncation_sds;
        [truncated_normal(rng, 0.0, s, -t, t), truncated_normal(rng, 0.0, s, -t, t)]
    }
}

impl GenerativeModel for PushBox {
    type State = PushBoxState;
    type Action = PushAction;
    type Observation = PushObservation;

    fn actions(&self) -> &[PushAction] {
        &self.actions
    }

    fn sample_transition<R: Rng + ?Sized>(&self, x: &PushBoxState, a: &PushAction, rng: &mut R) -> PushBoxState {
        let PushAction::Move(u) = *a else {
            return PushBoxState { contact: false, stopped: true, ..*x };
        };
        let w = self.noise(rng);
        let d = [u[0] + w[0], u[1] + w[1]];
        let Some(t) = self.contact_time(x.robot, d, x.puck) else {
            return PushBoxState {
                robot: [x.robot[0] + d[0], x.robot[1] + d[1]],
                contact: false,
                ..*x
            };
        };
        let robot = [x.robot[0] + t * d[0], x.robot[1] + t * d[1]];
        let gap = dist(robot, x.puck).max(1e-12);
        let n = [(x.puck[0] - robot[0]) / gap, (x.puck[1] - robot[1]) / gap];
        let along = u[0] * n[0] + u[1] * n[1];
        let mut puck = x.puck;
        if along > 0.0 {
            let c = &self.config;
            let (mu, sd, lo, hi) = c.push_scale;
            let rs = truncated_normal(rng, mu, sd, lo, hi);
            let (js, jb) = (c.push_jitter_sigma, c.push_jitter_bound);
            let r = [truncated_normal(rng, 0.0, js, -jb, jb), truncated_normal(rng, 0.0, js, -jb, jb)];
            let m = c.push_gain * rs * along;
            puck = [puck[0] + m * (n[0] + r[0]), puck[1] + m * (n[1] + r[1])];
        }
        PushBoxState {
            robot,
            puck,
            contact: true,
            stopped: false,
        }
    }

    fn sample_observation<R: Rng + ?Sized>(&self, x: &PushBoxState, rng: &mut R) -> PushObservation {
        let sd = self.sensor_sd(x.robot);
        let flip = rng.random::<f64>() < self.config.contact_flip;
        PushObservation {
            contact: x.contact != flip,
            bearing_range: [
                gaussian(rng, x.robot[0] - x.puck[0], sd),
                gaussian(rng, x.robot[1] - x.puck[1], sd),
            ],
        }
    }

    fn observation_logpdf(&self, z: &PushObservation, x: &PushBoxState) -> f64 {
        let sd = self.sensor_sd(x.robot);
        let flip = self.config.contact_flip;
        let c = if z.contact == x.contact { 1.0 - flip } else { flip };
        c.ln()
            + normal_logpdf(z.bearing_range[0], x.robot[0] - x.puck[0], sd)
            + normal_logpdf(z.bearing_range[1], x.robot[1] - x.puck[1], sd)
    }

    fn reward(&self, _b: &ParticleBelief<PushBoxState>, a: &PushAction, b_next: &ParticleBelief<PushBoxState>) -> f64 {
        let c = &self.config;
        if *a == PushAction::Null {
            return -c.null_penalty;
        }
        let distance = b_next.mean_by(|x| dist(x.puck, c.goal));
        let unsafe_mass = 1.0 - b_next.mass_where(|x| self.is_safe(x, 0));
        let goal = b_next.mass_where(|x| self.puck_in_goal(x));
        let mut r = -distance - c.edge_penalty * unsafe_mass + c.goal_reward * goal;
        if c.entropy_weight != 0.0 {
            r -= c.entropy_weight * self.robot_entropy(b_next);
        }
        if c.soft_safety_term {
            r += 1.0 - unsafe_mass;
        }
        r
    }

    fn state_reward(&self, _x: &PushBoxState, a: &PushAction, next: &PushBoxState) -> f64 {
        let c = &self.config;
        if *a == PushAction::Null {
            return -c.null_penalty;
        }
        let mut r = -dist(next.puck, c.goal);
        if !self.is_safe(next, 0) {
            r -= c.edge_penalty;
        }
        if self.puck_in_goal(next) {
            r += c.goal_reward;
        }
        r
    }

    fn is_safe(&self, x: &PushBoxState, _time: usize) -> bool {
        self.disc_clear(x.robot, self.config.robot_radius) && self.disc_clear(x.puck, self.config.puck_radius)
    }

    fn is_terminal(&self, x: &PushBoxState) -> bool {
        x.stopped || self.puck_in_goal(x)
    }

    fn distance_to_safe(&self, x: &PushBoxState, time: usize) -> f64 {
        if self.is_safe(x, time) {
            return 0.0;
        }
        let c = &self.config;
        let intrusion = |p: Point, r: f64| {
            let e = c.edge_width + r;
            let edge = (e - p[0]).max(p[0] - (c.width - e)).max(e - p[1]).max(p[1] - (c.height - e)).max(0.0);
            let obstacle = c
                .obstacles
                .iter()
                .map(|s| (r - s.distance_outside(p)).max(0.0) + s.depth_inside(p))
                .fold(0.0, f64::max);
            edge.max(obstacle)
        };
        intrusion(x.robot, c.robot_radius).max(intrusion(x.puck, c.puck_radius))
    }

    fn null_action(&self) -> Option<ActionId> {
        Some(ActionId(0))
    }

    fn nominal_transition(&self, x: &PushBoxState, a: &PushAction) -> PushBoxState {
        match *a {
            PushAction::Null => PushBoxState { contact: false, stopped: true, ..*x },
            PushAction::Move(u) => PushBoxState {
                robot: [x.robot[0] + u[0], x.robot[1] + u[1]],
                contact: false,
                ..*x
            },
        }
    }

    fn transition_radius(&self) -> f64 {
        let c = &self.config;
        let noise = c.motion_sigma * c.motion_truncation_sds * std::f64::consts::SQRT_2;
        let jitter = c.push_jitter_bound * std::f64::consts::SQRT_2;
        let push = c.push_gain * c.push_scale.3 * (c.step + noise) * (1.0 + jitter);
        (c.step + 2.0 * noise).max(push)
    }

    fn state_distance(&self, x: &PushBoxState, y: &PushBoxState) -> f64 {
        dist(x.robot, y.robot).max(dist(x.puck, y.puck))
    }
}

impl Benchmark for PushBox {
    fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> PushBoxState {
        let c = &self.config;
        PushBoxState {
            robot: [
                gaussian(rng, c.robot_prior_mean[0], c.robot_prior_sd),
                gaussian(rng, c.robot_prior_mean[1], c.robot_prior_sd),
            ],
            puck: c.puck_start,
            contact: false,
            stopped: false,
        }
    }

    fn goal_distance(&self, x: &PushBoxState) -> f64 {
        dist(x.puck, self.config.goal)
    }

    fn reached_goal(&self, x: &PushBoxState) -> bool {
        self.puck_in_goal(x)
    }
}
