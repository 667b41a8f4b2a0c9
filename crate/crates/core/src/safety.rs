use serde::{Deserialize, Serialize};

use crate::belief::ParticleBelief;
use crate::error::SafetyError;
use crate::model::GenerativeModel;

/// Belief-level safety payoff. Larger is safer; the constraint reads
/// `payoff >= delta`. The risk variants negate a cost so the same threshold
/// convention applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayoffOperator {
    ProbSafe,
    NegVar,
    NegCvar,
}

impl PayoffOperator {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "prob-safe" => Some(Self::ProbSafe),
            "neg-var" => Some(Self::NegVar),
            "neg-cvar" => Some(Self::NegCvar),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetySpec {
    pub operator: PayoffOperator,
    pub delta: f64,
    /// Tail level of the risk operators.
    pub alpha: f64,
    /// Also require the propagated belief to meet the threshold.
    pub constrain_propagated: bool,
}

impl SafetySpec {
    pub fn prob_safe(delta: f64) -> Result<Self, SafetyError> {
        let spec = Self {
            operator: PayoffOperator::ProbSafe,
            delta,
            alpha: 0.05,
            constrain_propagated: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SafetyError> {
        match self.operator {
            PayoffOperator::ProbSafe if !(0.0..=1.0).contains(&self.delta) => {
                Err(SafetyError::InvalidDelta(self.delta))
            }
            PayoffOperator::NegVar | PayoffOperator::NegCvar
                if !(self.alpha > 0.0 && self.alpha < 1.0) =>
            {
                Err(SafetyError::InvalidAlpha(self.alpha))
            }
            _ if !self.delta.is_finite() => Err(SafetyError::InvalidDelta(self.delta)),
            _ => Ok(()),
        }
    }

    pub fn payoff<M: GenerativeModel>(
        &self,
        model: &M,
        belief: &ParticleBelief<M::State>,
        time: usize,
    ) -> f64 {
        match self.operator {
            PayoffOperator::ProbSafe => prob_safe(model, belief, time),
            PayoffOperator::NegVar => {
                -var_cost(belief, |x| model.distance_to_safe(x, time), self.alpha)
            }
            PayoffOperator::NegCvar => {
                let d = |x: &M::State| model.distance_to_safe(x, time);
                match cvar_cost(belief, d, self.alpha) {
                    Ok(c) => -c,
                    Err(_) => -var_cost(belief, d, self.alpha),
                }
            }
        }
    }
}

/// Outcome of the safety gate on a (propagated, posterior) belief pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndicatorResult {
    pub propagated_ok: bool,
    pub posterior_ok: bool,
    /// `None` when the propagated belief is not constrained.
    pub propagated_payoff: Option<f64>,
    pub posterior_payoff: f64,
}

impl IndicatorResult {
    pub fn passed(&self) -> bool {
        self.propagated_ok && self.posterior_ok
    }
}

pub fn prob_safe<M: GenerativeModel>(
    model: &M,
    belief: &ParticleBelief<M::State>,
    time: usize,
) -> f64 {
    belief.mass_where(|x| model.is_safe(x, time))
}

pub fn check_indicator<M: GenerativeModel>(
    model: &M,
    spec: &SafetySpec,
    propagated: &ParticleBelief<M::State>,
    posterior: &ParticleBelief<M::State>,
    time: usize,
) -> IndicatorResult {
    let propagated_payoff = spec
        .constrain_propagated
        .then(|| spec.payoff(model, propagated, time));
    let posterior_payoff = spec.payoff(model, posterior, time);
    IndicatorResult {
        propagated_ok: propagated_payoff.is_none_or(|p| p >= spec.delta),
        posterior_ok: posterior_payoff >= spec.delta,
        propagated_payoff,
        posterior_payoff,
    }
}

/// Only the propagated half of the gate; lets callers skip the update when
/// it already fails.
pub fn propagated_passes<M: GenerativeModel>(
    model: &M,
    spec: &SafetySpec,
    propagated: &ParticleBelief<M::State>,
    time: usize,
) -> bool {
    !spec.constrain_propagated || spec.payoff(model, propagated, time) >= spec.delta
}

fn weighted_distances<S>(belief: &ParticleBelief<S>, distance: impl Fn(&S) -> f64) -> Vec<(f64, f64)> {
    let mut d: Vec<(f64, f64)> = belief
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|(x, w)| (distance(x), w))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0));
    d
}

const CUMULATIVE_SLACK: f64 = 1e-12;

fn var_of_sorted(d: &[(f64, f64)], alpha: f64) -> f64 {
    let total: f64 = d.iter().map(|p| p.1).sum();
    let target = (1.0 - alpha) * total - CUMULATIVE_SLACK;
    let mut acc = 0.0;
    for &(x, w) in d {
        acc += w;
        if acc >= target {
            return x;
        }
    }
    d.last().map_or(0.0, |p| p.0)
}

/// Weighted value-at-risk of the distance to the safe set: the smallest
/// distance whose cumulative weight reaches `1 - alpha`.
pub fn var_cost<S>(belief: &ParticleBelief<S>, distance: impl Fn(&S) -> f64, alpha: f64) -> f64 {
    var_of_sorted(&weighted_distances(belief, distance), alpha)
}

/// Weighted mean distance over the tail at or beyond the value-at-risk.
pub fn cvar_cost<S>(
    belief: &ParticleBelief<S>,
    distance: impl Fn(&S) -> f64,
    alpha: f64,
) -> Result<f64, SafetyError> {
    let d = weighted_distances(belief, distance);
    let v = var_of_sorted(&d, alpha);
    let (mut num, mut den) = (0.0, 0.0);
    for &(x, w) in d.iter().filter(|p| p.0 >= v) {
        num += w * x;
        den += w;
    }
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(SafetyError::EmptyTail)
    }
}

/// How a constraint cost is derived from the payoff operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    /// Complement of the per-belief payoff, summed over the constrained beliefs.
    StateComplement,
    /// Complement of the pass/fail indicator of the pair.
    IndicatorComplement,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostOperator {
    pub kind: CostKind,
    pub spec: SafetySpec,
}

pub fn cost_from_payoff(kind: CostKind, spec: SafetySpec) -> CostOperator {
    CostOperator { kind, spec }
}

impl CostOperator {
    pub fn cost<M: GenerativeModel>(
        &self,
        model: &M,
        propagated: &ParticleBelief<M::State>,
        posterior: &ParticleBelief<M::State>,
        time: usize,
    ) -> f64 {
        match self.kind {
            CostKind::IndicatorComplement => {
                let r = check_indicator(model, &self.spec, propagated, posterior, time);
                if r.passed() {
                    0.0
                } else {
                    1.0
                }
            }
            CostKind::StateComplement => {
                let single = |b: &ParticleBelief<M::State>| match self.spec.operator {
                    PayoffOperator::ProbSafe => 1.0 - prob_safe(model, b, time),
                    _ => -self.spec.payoff(model, b, time),
                };
                let post = single(posterior);
                if self.spec.constrain_propagated {
                    single(propagated) + post
                } else {
                    post
                }
            }
        }
    }
}
