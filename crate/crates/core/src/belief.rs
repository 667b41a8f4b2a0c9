use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::FilterError;
use crate::model::GenerativeModel;

#[derive(Clone, Debug, PartialEq)]
pub struct Particle<S> {
    pub state: S,
    pub weight: f64,
}

/// Stage of the filter a belief was produced by.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BeliefKind {
    Posterior,
    Propagated,
    SafetyFiltered,
}

/// Weighted particle set. Weights are kept normalized.
#[derive(Clone, Debug)]
pub struct ParticleBelief<S> {
    particles: Vec<Particle<S>>,
    kind: BeliefKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum ResampleRule {
    /// Resample when the effective sample size drops below `fraction * N`.
    Adaptive { fraction: f64 },
    Always,
    Never,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub resample: ResampleRule,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            resample: ResampleRule::Adaptive { fraction: 0.5 },
        }
    }
}

impl<S> ParticleBelief<S> {
    pub fn uniform(states: Vec<S>, kind: BeliefKind) -> Result<Self, FilterError> {
        if states.is_empty() {
            return Err(FilterError::EmptyBelief);
        }
        let w = 1.0 / states.len() as f64;
        let particles = states
            .into_iter()
            .map(|state| Particle { state, weight: w })
            .collect();
        Ok(Self { particles, kind })
    }

    /// Builds a belief from unnormalized non-negative weights.
    pub fn weighted(mut particles: Vec<Particle<S>>, kind: BeliefKind) -> Result<Self, FilterError> {
        if particles.is_empty() {
            return Err(FilterError::EmptyBelief);
        }
        let total: f64 = particles.iter().map(|p| p.weight).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(FilterError::AllZeroLikelihood);
        }
        for p in &mut particles {
            p.weight /= total;
        }
        Ok(Self { particles, kind })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn kind(&self) -> BeliefKind {
        self.kind
    }

    pub fn particles(&self) -> &[Particle<S>] {
        &self.particles
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, f64)> {
        self.particles.iter().map(|p| (&p.state, p.weight))
    }

    pub fn states(&self) -> impl Iterator<Item = &S> {
        self.particles.iter().map(|p| &p.state)
    }

    pub fn ess(&self) -> f64 {
        let sq: f64 = self.particles.iter().map(|p| p.weight * p.weight).sum();
        if sq > 0.0 {
            1.0 / sq
        } else {
            0.0
        }
    }

    /// Index of a particle drawn proportionally to weight.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.particles.iter().enumerate() {
            acc += p.weight;
            if u < acc {
                return i;
            }
        }
        self.particles
            .iter()
            .rposition(|p| p.weight > 0.0)
            .unwrap_or(self.particles.len() - 1)
    }

    pub fn mean_by(&self, f: impl Fn(&S) -> f64) -> f64 {
        self.particles.iter().map(|p| p.weight * f(&p.state)).sum()
    }

    pub fn variance_by(&self, f: impl Fn(&S) -> f64) -> f64 {
        let m = self.mean_by(&f);
        self.particles
            .iter()
            .map(|p| {
                let d = f(&p.state) - m;
                p.weight * d * d
            })
            .sum()
    }

    /// Total weight of particles satisfying `pred`. Exactly 1.0 when every
    /// weighted particle satisfies it and strictly below 1.0 otherwise.
    pub fn mass_where(&self, mut pred: impl FnMut(&S) -> bool) -> f64 {
        let mut inside = 0.0;
        let mut outside = 0.0;
        for p in &self.particles {
            if p.weight <= 0.0 {
                continue;
            }
            if pred(&p.state) {
                inside += p.weight;
            } else {
                outside += p.weight;
            }
        }
        if outside == 0.0 {
            return 1.0;
        }
        let m = inside / (inside + outside);
        m.min(1.0 - f64::EPSILON / 2.0)
    }
}

/// Systematic resampling of `count` states.
pub fn systematic_resample<S: Clone, R: Rng + ?Sized>(
    particles: &[Particle<S>],
    count: usize,
    rng: &mut R,
) -> Vec<S> {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    let step = total / count as f64;
    let mut u = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(count);
    let mut i = 0;
    let mut acc = particles[0].weight;
    let last = particles.iter().rposition(|p| p.weight > 0.0).unwrap_or(0);
    for _ in 0..count {
        while u >= acc && i < last {
            i += 1;
            acc += particles[i].weight;
        }
        out.push(particles[i].state.clone());
        u += step;
    }
    out
}

/// Pushes every particle through the transition model; weights are kept.
pub fn propagate<M: GenerativeModel, R: Rng + ?Sized>(
    model: &M,
    belief: &ParticleBelief<M::State>,
    action: &M::Action,
    rng: &mut R,
) -> ParticleBelief<M::State> {
    debug_assert_ne!(belief.kind, BeliefKind::Propagated);
    let particles = belief
        .particles
        .iter()
        .map(|p| Particle {
            state: model.sample_transition(&p.state, action, rng),
            weight: p.weight,
        })
        .collect();
    ParticleBelief {
        particles,
        kind: BeliefKind::Propagated,
    }
}

/// Bayesian reweighting by the observation likelihood followed by optional
/// resampling.
pub fn update<M: GenerativeModel, R: Rng + ?Sized>(
    model: &M,
    propagated: &ParticleBelief<M::State>,
    z: &M::Observation,
    config: &FilterConfig,
    rng: &mut R,
) -> Result<ParticleBelief<M::State>, FilterError> {
    update_with_evidence(model, propagated, z, config, rng).map(|(b, _)| b)
}

/// Like [`update`], also returning the log predictive density of `z`.
pub fn update_with_evidence<M: GenerativeModel, R: Rng + ?Sized>(
    model: &M,
    propagated: &ParticleBelief<M::State>,
    z: &M::Observation,
    config: &FilterConfig,
    rng: &mut R,
) -> Result<(ParticleBelief<M::State>, f64), FilterError> {
    if propagated.is_empty() {
        return Err(FilterError::EmptyBelief);
    }
    let logw: Vec<f64> = propagated
        .particles
        .iter()
        .map(|p| {
            if p.weight > 0.0 {
                p.weight.ln() + model.observation_logpdf(z, &p.state)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = logw
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return Err(FilterError::AllZeroLikelihood);
    }
    let mut total = 0.0;
    let mut particles: Vec<Particle<M::State>> = propagated
        .particles
        .iter()
        .zip(&logw)
        .map(|(p, &lw)| {
            let w = if lw.is_nan() { 0.0 } else { (lw - max).exp() };
            total += w;
            Particle {
                state: p.state.clone(),
                weight: w,
            }
        })
        .collect();
    for p in &mut particles {
        p.weight /= total;
    }
    let log_evidence = max + total.ln();
    let mut belief = ParticleBelief {
        particles,
        kind: BeliefKind::Posterior,
    };
    let n = belief.len();
    let resample = match config.resample {
        ResampleRule::Always => true,
        ResampleRule::Never => false,
        ResampleRule::Adaptive { fraction } => belief.ess() < fraction * n as f64,
    };
    if resample {
        let states = systematic_resample(&belief.particles, n, rng);
        belief = ParticleBelief::uniform(states, BeliefKind::Posterior)?;
    }
    Ok((belief, log_evidence))
}

/// Log of the predictive density of `z` under a propagated belief.
pub fn log_predictive<M: GenerativeModel>(
    model: &M,
    z: &M::Observation,
    propagated: &ParticleBelief<M::State>,
) -> f64 {
    let terms: Vec<f64> = propagated
        .particles
        .iter()
        .filter(|p| p.weight > 0.0)
        .map(|p| p.weight.ln() + model.observation_logpdf(z, &p.state))
        .filter(|v| !v.is_nan())
        .collect();
    log_sum_exp(&terms)
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Drops unsafe particles and resamples the survivors back to the original
/// size with uniform weights.
pub fn make_safe<M: GenerativeModel, R: Rng + ?Sized>(
    model: &M,
    belief: &ParticleBelief<M::State>,
    time: usize,
    rng: &mut R,
) -> Result<ParticleBelief<M::State>, FilterError> {
    let safe: Vec<Particle<M::State>> = belief
        .particles
        .iter()
        .filter(|p| p.weight > 0.0 && model.is_safe(&p.state, time))
        .cloned()
        .collect();
    if safe.is_empty() {
        return Err(FilterError::NoSafeParticles);
    }
    let states = systematic_resample(&safe, belief.len(), rng);
    ParticleBelief::uniform(states, BeliefKind::SafetyFiltered)
}

/// Ratio of the predictive densities of `z` under the safe and the full
/// propagated beliefs.
pub fn importance_weight<M: GenerativeModel>(
    model: &M,
    z: &M::Observation,
    safe_propagated: &ParticleBelief<M::State>,
    full_propagated: &ParticleBelief<M::State>,
) -> f64 {
    let num = log_predictive(model, z, safe_propagated);
    let den = log_predictive(model, z, full_propagated);
    if num == f64::NEG_INFINITY {
        return 0.0;
    }
    (num - den).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::LineModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn belief(pairs: &[(f64, f64)]) -> ParticleBelief<f64> {
        let ps = pairs
            .iter()
            .map(|&(s, w)| Particle { state: s, weight: w })
            .collect();
        ParticleBelief::weighted(ps, BeliefKind::Posterior).unwrap()
    }

    #[test]
    fn ess_of_uniform_and_degenerate() {
        let u = belief(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]);
        assert!((u.ess() - 4.0).abs() < 1e-12);
        let d = belief(&[(0.0, 1.0), (1.0, 0.0)]);
        assert!((d.ess() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn systematic_resample_counts_follow_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = belief(&[(0.0, 0.5), (1.0, 0.25), (2.0, 0.25)]);
        let out = systematic_resample(b.particles(), 8, &mut rng);
        let c0 = out.iter().filter(|&&s| s == 0.0).count();
        let c1 = out.iter().filter(|&&s| s == 1.0).count();
        assert_eq!(c0, 4);
        assert_eq!(c1, 2);
    }

    #[test]
    fn update_matches_hand_computed_posterior() {
        let model = LineModel::default().with_observation_sigma(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let prior = belief(&[(0.0, 0.5), (2.0, 0.5)]);
        let prop = ParticleBelief {
            particles: prior.particles.clone(),
            kind: BeliefKind::Propagated,
        };
        let cfg = FilterConfig {
            resample: ResampleRule::Never,
        };
        let (post, log_ev) = update_with_evidence(&model, &prop, &0.5, &cfg, &mut rng).unwrap();
        let l0 = (-0.5f64 * 0.25).exp();
        let l1 = (-0.5f64 * 2.25).exp();
        assert!((post.particles()[0].weight - l0 / (l0 + l1)).abs() < 1e-12);
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        let ev = 0.5 * (l0 + l1) / norm;
        assert!((log_ev - ev.ln()).abs() < 1e-12);
    }

    #[test]
    fn update_survives_extreme_precision() {
        let model = LineModel::default().with_observation_sigma(1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let prop = ParticleBelief {
            particles: vec![
                Particle { state: 0.0, weight: 0.5 },
                Particle { state: 1e-9, weight: 0.5 },
            ],
            kind: BeliefKind::Propagated,
        };
        let post = update(&model, &prop, &0.0, &FilterConfig::default(), &mut rng).unwrap();
        assert!(post.particles().iter().all(|p| p.weight.is_finite()));
        let total: f64 = post.particles().iter().map(|p| p.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn make_safe_all_safe_keeps_support() {
        let model = LineModel::default().with_safe_interval(-10.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = belief(&[(0.0, 0.2), (1.0, 0.3), (2.0, 0.5)]);
        let s = make_safe(&model, &b, 0, &mut rng).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.kind(), BeliefKind::SafetyFiltered);
        assert!(s.states().all(|x| [0.0, 1.0, 2.0].contains(x)));
        assert!(s.particles().iter().all(|p| (p.weight - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn make_safe_duplicates_lone_safe_particle() {
        let model = LineModel::default().with_safe_interval(-1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = belief(&[(0.0, 0.5), (5.0, 0.5)]);
        let s = make_safe(&model, &b, 0, &mut rng).unwrap();
        assert_eq!(s.states().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        let none = belief(&[(5.0, 1.0)]);
        assert_eq!(
            make_safe(&model, &none, 0, &mut rng).unwrap_err(),
            FilterError::NoSafeParticles
        );
    }

    #[test]
    fn importance_weight_two_particle_example() {
        // Likelihood 0.8 at A and 0.2 at B, expressed as a discrete table.
        let model = crate::toy::TableModel::new(vec![0.8, 0.2]);
        let full = ParticleBelief {
            particles: vec![
                Particle { state: 0usize, weight: 0.5 },
                Particle { state: 1usize, weight: 0.5 },
            ],
            kind: BeliefKind::Propagated,
        };
        let safe = ParticleBelief {
            particles: vec![
                Particle { state: 0usize, weight: 0.5 },
                Particle { state: 0usize, weight: 0.5 },
            ],
            kind: BeliefKind::Propagated,
        };
        let w = importance_weight(&model, &true, &safe, &full);
        assert!((w - 1.6).abs() < 1e-12);
    }

    #[test]
    fn mass_where_is_exact_at_one() {
        let b = ParticleBelief::uniform(vec![0.1; 500], BeliefKind::Posterior).unwrap();
        assert_eq!(b.mass_where(|_| true), 1.0);
        let mut states = vec![0.1; 499];
        states.push(9.0);
        let b = ParticleBelief::uniform(states, BeliefKind::Posterior).unwrap();
        assert!(b.mass_where(|x| *x < 1.0) < 1.0);
    }
}
