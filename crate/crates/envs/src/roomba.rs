use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use safebsp_core::geometry::{escape_distance, Point, Shape};
use safebsp_core::{GenerativeModel, ParticleBelief};
use serde::{Deserialize, Serialize};

use crate::dist::{normal_cdf, normal_logpdf, truncated_normal, wrap_angle};
use crate::{field_error, Benchmark, ConfigError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WallKind {
    Plain,
    Goal,
    Stairs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub from: Point,
    pub to: Point,
    pub kind: WallKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoombaConfig {
    /// Closed polygon of walls, listed in order.
    pub walls: Vec<Wall>,
    pub avoid: Vec<Shape>,
    pub start_min: Point,
    pub start_max: Point,
    pub heading_range: (f64, f64),
    /// `(v, omega)` pairs.
    pub actions: Vec<(f64, f64)>,
    pub dt: f64,
    pub v_noise_coeff: f64,
    pub om_noise_coeff: f64,
    pub lidar_sigma_ratio: f64,
    pub lidar_min_range: f64,
    pub goal_reward: f64,
    pub stairs_penalty: f64,
    pub step_penalty: f64,
}

fn rect_walls(w: f64, h: f64) -> Vec<Wall> {
    vec![
        Wall { from: [0.0, 0.0], to: [w, 0.0], kind: WallKind::Plain },
        Wall { from: [w, 0.0], to: [w, h], kind: WallKind::Goal },
        Wall { from: [w, h], to: [0.0, h], kind: WallKind::Plain },
        Wall { from: [0.0, h], to: [0.0, 0.0], kind: WallKind::Stairs },
    ]
}

impl Default for RoombaConfig {
    fn default() -> Self {
        Self {
            walls: rect_walls(12.0, 10.0),
            avoid: vec![Shape::rect(4.0, 2.5, 8.0, 7.5)],
            start_min: [1.0, 4.5],
            start_max: [2.0, 5.5],
            heading_range: (-0.1, 0.1),
            actions: vec![
                (0.0, -FRAC_PI_2),
                (0.0, 0.0),
                (0.0, FRAC_PI_2),
                (5.0, -FRAC_PI_2),
                (5.0, 0.0),
                (5.0, FRAC_PI_2),
            ],
            dt: 0.5,
            v_noise_coeff: 0.2,
            om_noise_coeff: 0.05,
            lidar_sigma_ratio: 0.01,
            lidar_min_range: 0.001,
            goal_reward: 10_000.0,
            stairs_penalty: 10_000.0,
            step_penalty: 1_000.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoombaState {
    pub pos: Point,
    pub theta: f64,
    /// 1 after hitting the goal wall, -1 after hitting the stairs, else 0.
    pub status: i8,
    /// Set on the step after the status became non-zero.
    pub absorbed: bool,
}

/// Differential-drive robot with a single forward lidar ray in a walled room.
#[derive(Clone, Debug)]
pub struct Roomba {
    pub config: RoombaConfig,
    v_max: f64,
    om_max: f64,
    goal_center: Point,
}

const WALL_BACKOFF: f64 = 1e-6;

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Parameter `t` along `p + t d` where the ray meets the wall segment.
fn ray_hits(p: Point, d: Point, w: &Wall) -> Option<f64> {
    let e = [w.to[0] - w.from[0], w.to[1] - w.from[1]];
    let denom = cross(d, e);
    if denom.abs() < 1e-15 {
        return None;
    }
    let q = [w.from[0] - p[0], w.from[1] - p[1]];
    let t = cross(q, e) / denom;
    let u = cross(q, d) / denom;
    (t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u)).then_some(t)
}

impl Roomba {
    pub fn new(config: RoombaConfig) -> Result<Self, ConfigError> {
        if config.walls.len() < 3 {
            return Err(field_error("walls", "need at least three walls"));
        }
        if config.actions.is_empty() {
            return Err(field_error("actions", "must not be empty"));
        }
        if !(config.dt > 0.0) {
            return Err(field_error("dt", "must be positive"));
        }
        let goals: Vec<&Wall> = config.walls.iter().filter(|w| w.kind == WallKind::Goal).collect();
        if goals.is_empty() {
            return Err(field_error("walls", "need a goal wall"));
        }
        let mut c = [0.0, 0.0];
        for w in &goals {
            c[0] += 0.5 * (w.from[0] + w.to[0]) / goals.len() as f64;
            c[1] += 0.5 * (w.from[1] + w.to[1]) / goals.len() as f64;
        }
        let v_top = config.actions.iter().map(|a| a.0).fold(0.0, f64::max);
        let om_top = config.actions.iter().map(|a| a.1.abs()).fold(0.0, f64::max);
        Ok(Self {
            v_max: v_top + 0.5 * config.v_noise_coeff,
            om_max: om_top + 0.5 * config.om_noise_coeff,
            goal_center: c,
            config,
        })
    }

    pub fn goal_center(&self) -> Point {
        self.goal_center
    }

    /// Distance along the heading to the first wall.
    pub fn ray_length(&self, pos: Point, theta: f64) -> f64 {
        let d = [theta.cos(), theta.sin()];
        self.config
            .walls
            .iter()
            .filter_map(|w| ray_hits(pos, d, w))
            .fold(f64::INFINITY, f64::min)
    }

    fn lidar_sigma(&self, range: f64) -> f64 {
        self.config.lidar_sigma_ratio * range.max(self.config.lidar_min_range)
    }

    fn advance(&self, x: &RoombaState, v: f64, om: f64) -> RoombaState {
        let theta = wrap_angle(x.theta + om * self.config.dt);
        let len = v * self.config.dt;
        let d = [theta.cos(), theta.sin()];
        let mut status = 0;
        let mut travel = len;
        if len > 0.0 {
            let mut first: Option<(f64, WallKind)> = None;
            for w in &self.config.walls {
                if let Some(t) = ray_hits(x.pos, d, w) {
                    if t <= len && first.is_none_or(|f| t < f.0) {
                        first = Some((t, w.kind));
                    }
                }
            }
            if let Some((t, kind)) = first {
                travel = (t - WALL_BACKOFF).max(0.0);
                status = match kind {
                    WallKind::Plain => 0,
                    WallKind::Goal => 1,
                    WallKind::Stairs => -1,
                };
            }
        }
        RoombaState {
            pos: [x.pos[0] + travel * d[0], x.pos[1] + travel * d[1]],
            theta,
            status,
            absorbed: false,
        }
    }

    fn state_reward_of(&self, x: &RoombaState) -> f64 {
        if x.absorbed {
            return 0.0;
        }
        match x.status {
            1 => self.config.goal_reward,
            -1 => -self.config.stairs_penalty,
            _ => -self.config.step_penalty,
        }
    }

    /// Whether the point lies inside the wall polygon (even-odd rule).
    pub fn inside_room(&self, p: Point) -> bool {
        let mut inside = false;
        for w in &self.config.walls {
            let (a, b) = (w.from, w.to);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

impl Default for Roomba {
    fn default() -> Self {
        Self::new(RoombaConfig::default()).expect("default config is valid")
    }
}

impl GenerativeModel for Roomba {
    type State = RoombaState;
    type Action = (f64, f64);
    type Observation = f64;

    fn actions(&self) -> &[(f64, f64)] {
        &self.config.actions
    }

    fn sample_transition<R: Rng + ?Sized>(&self, x: &RoombaState, a: &(f64, f64), rng: &mut R) -> RoombaState {
        if x.status != 0 {
            return RoombaState { absorbed: true, ..*x };
        }
        let dv = self.config.v_noise_coeff * (rng.random::<f64>() - 0.5);
        let dom = self.config.om_noise_coeff * (rng.random::<f64>() - 0.5);
        let v = (a.0 + dv).clamp(0.0, self.v_max);
        let om = (a.1 + dom).clamp(-self.om_max, self.om_max);
        self.advance(x, v, om)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, x: &RoombaState, rng: &mut R) -> f64 {
        let r = self.ray_length(x.pos, x.theta);
        truncated_normal(rng, r, self.lidar_sigma(r), 0.0, f64::INFINITY)
    }

    /// Gaussian density renormalized for the truncation at zero.
    fn observation_logpdf(&self, z: &f64, x: &RoombaState) -> f64 {
        if *z < 0.0 {
            return f64::NEG_INFINITY;
        }
        let r = self.ray_length(x.pos, x.theta);
        let s = self.lidar_sigma(r);
        let mass = normal_cdf(r / s).max(f64::MIN_POSITIVE);
        normal_logpdf(*z, r, s) - mass.ln()
    }

    fn reward(&self, _b: &ParticleBelief<RoombaState>, _a: &(f64, f64), b_next: &ParticleBelief<RoombaState>) -> f64 {
        b_next.mean_by(|x| self.state_reward_of(x))
    }

    fn state_reward(&self, _x: &RoombaState, _a: &(f64, f64), next: &RoombaState) -> f64 {
        self.state_reward_of(next)
    }

    fn is_safe(&self, x: &RoombaState, _time: usize) -> bool {
        !self.config.avoid.iter().any(|s| s.contains(x.pos))
    }

    fn distance_to_safe(&self, x: &RoombaState, _time: usize) -> f64 {
        escape_distance(&self.config.avoid, x.pos)
    }

    fn is_terminal(&self, x: &RoombaState) -> bool {
        x.status != 0
    }

    fn nominal_transition(&self, x: &RoombaState, a: &(f64, f64)) -> RoombaState {
        if x.status != 0 {
            return RoombaState { absorbed: true, ..*x };
        }
        self.advance(x, a.0, a.1)
    }

    fn transition_radius(&self) -> f64 {
        let dt = self.config.dt;
        let heading = 0.5 * self.config.om_noise_coeff * dt;
        let position = 0.5 * self.config.v_noise_coeff * dt + self.v_max * dt * heading;
        position.max(heading) + 2.0 * WALL_BACKOFF
    }

    /// Larger of the position and heading differences.
    fn state_distance(&self, x: &RoombaState, y: &RoombaState) -> f64 {
        let dp = (x.pos[0] - y.pos[0]).hypot(x.pos[1] - y.pos[1]);
        dp.max(wrap_angle(x.theta - y.theta).abs())
    }
}

impl Benchmark for Roomba {
    fn sample_initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> RoombaState {
        let (lo, hi) = (self.config.start_min, self.config.start_max);
        let (t0, t1) = self.config.heading_range;
        RoombaState {
            pos: [rng.random_range(lo[0]..=hi[0]), rng.random_range(lo[1]..=hi[1])],
            theta: if t1 > t0 { rng.random_range(t0..t1) } else { t0 },
            status: 0,
            absorbed: false,
        }
    }

    fn goal_distance(&self, x: &RoombaState) -> f64 {
        let c = self.goal_center;
        (x.pos[0] - c[0]).hypot(x.pos[1] - c[1])
    }

    fn reached_goal(&self, x: &RoombaState) -> bool {
        x.status == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use safebsp_core::BeliefKind;

    fn at(x: f64, y: f64, theta: f64) -> RoombaState {
        RoombaState { pos: [x, y], theta, status: 0, absorbed: false }
    }

    #[test]
    fn ray_length_to_east_wall() {
        let m = Roomba::default();
        assert!((m.ray_length([2.0, 5.0], 0.0) - 10.0).abs() < 1e-12);
        assert!((m.ray_length([2.0, 5.0], FRAC_PI_2) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn hitting_goal_wall_stops_and_flags() {
        let m = Roomba::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = m.sample_transition(&at(11.0, 5.0, 0.0), &(5.0, 0.0), &mut rng);
        assert_eq!(x.status, 1);
        assert!((x.pos[0] - 12.0).abs() < 1e-5 && x.pos[0] < 12.0);
        let y = m.sample_transition(&x, &(5.0, 0.0), &mut rng);
        assert!(y.absorbed && y.pos == x.pos);
    }

    #[test]
    fn stairs_and_plain_walls() {
        let m = Roomba::default();
        let s = m.nominal_transition(&at(1.0, 5.0, std::f64::consts::PI), &(5.0, 0.0));
        assert_eq!(s.status, -1);
        let p = m.nominal_transition(&at(5.0, 9.5, FRAC_PI_2), &(5.0, 0.0));
        assert_eq!(p.status, 0);
        assert!(p.pos[1] < 10.0 && p.pos[1] > 9.99);
    }

    #[test]
    fn turn_happens_before_the_move() {
        let m = Roomba::default();
        let x = m.nominal_transition(&at(3.0, 3.0, 0.0), &(5.0, FRAC_PI_2));
        let h = std::f64::consts::FRAC_PI_4;
        assert!((x.theta - h).abs() < 1e-12);
        assert!((x.pos[0] - (3.0 + 2.5 * h.cos())).abs() < 1e-12);
    }

    #[test]
    fn expected_reward_mixes_goal_and_step() {
        let m = Roomba::default();
        let mut g = at(11.9, 5.0, 0.0);
        g.status = 1;
        let b = ParticleBelief::uniform(vec![g, at(3.0, 3.0, 0.0)], BeliefKind::Posterior).unwrap();
        assert_eq!(m.reward(&b, &(0.0, 0.0), &b), 4500.0);
    }

    #[test]
    fn avoid_region_is_unsafe() {
        let m = Roomba::default();
        assert!(!m.is_safe(&at(6.0, 5.0, 0.0), 0));
        assert!(m.is_safe(&at(3.0, 5.0, 0.0), 0));
        assert!((m.distance_to_safe(&at(6.0, 5.0, 0.0), 0) - 2.0).abs() < 1e-12);
    }
}
