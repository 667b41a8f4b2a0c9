use serde::{Deserialize, Serialize};

use crate::belief::FilterConfig;
use crate::error::PlanError;
use crate::safety::SafetySpec;

/// Exploration bonus and child-selection rule of the search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchVariant {
    /// Logarithmic bonus; an existing observation child is drawn uniformly.
    DpwUcb,
    /// Polynomial bonus; the least visited observation child is followed.
    Puct,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum AlphaSchedule {
    Constant { alpha: f64 },
    /// `1 / (offset + depth)`.
    InverseDepth { offset: f64 },
}

impl AlphaSchedule {
    pub fn at(&self, depth: usize) -> f64 {
        match *self {
            AlphaSchedule::Constant { alpha } => alpha,
            AlphaSchedule::InverseDepth { offset } => 1.0 / (offset + depth as f64),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WideningConfig {
    pub k: f64,
    pub alpha: AlphaSchedule,
}

impl WideningConfig {
    pub fn constant(k: f64, alpha: f64) -> Self {
        Self {
            k,
            alpha: AlphaSchedule::Constant { alpha },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    pub enabled: bool,
    /// Cap on rollout length; the remaining horizon applies otherwise.
    pub max_depth: Option<usize>,
    /// Myopic samples per candidate action.
    pub samples: usize,
    /// Tolerated failure rate of the myopic check.
    pub epsilon: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            max_depth: None,
            samples: 10,
            epsilon: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub variant: SearchVariant,
    pub queries: usize,
    pub horizon: usize,
    pub exploration: f64,
    /// Exponent of the visit count inside the polynomial bonus.
    pub puct_exponent: f64,
    pub action_widening: WideningConfig,
    pub observation_widening: WideningConfig,
    /// `None` disables the safety gate entirely.
    pub safety: Option<SafetySpec>,
    pub make_safe: bool,
    pub rollout: RolloutConfig,
    pub filter: FilterConfig,
    /// Time index of the root belief.
    pub time0: usize,
    pub record_laces: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            variant: SearchVariant::DpwUcb,
            queries: 1000,
            horizon: 5,
            exploration: 1.0,
            puct_exponent: 0.5,
            action_widening: WideningConfig::constant(1.0, 0.5),
            observation_widening: WideningConfig::constant(1.0, 0.5),
            safety: None,
            make_safe: true,
            rollout: RolloutConfig::default(),
            filter: FilterConfig::default(),
            time0: 0,
            record_laces: false,
        }
    }
}

impl PlannerConfig {
    /// Depth-indexed widening used with the polynomial bonus.
    pub fn puct(mut self) -> Self {
        self.variant = SearchVariant::Puct;
        self.action_widening.alpha = AlphaSchedule::InverseDepth { offset: 2.0 };
        self.observation_widening.alpha = AlphaSchedule::InverseDepth { offset: 2.0 };
        self
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if let Some(spec) = &self.safety {
            spec.validate()
                .map_err(|e| PlanError::Config(e.to_string()))?;
        }
        if self.make_safe && self.safety.is_none() {
            return Err(PlanError::Config(
                "make-safe requires an enabled safety gate".into(),
            ));
        }
        for w in [&self.action_widening, &self.observation_widening] {
            if !(w.k > 0.0) {
                return Err(PlanError::Config(format!("widening k must be positive, got {}", w.k)));
            }
            let a = w.alpha.at(0);
            if !(a > 0.0 && a < 1.0) {
                return Err(PlanError::Config(format!("widening alpha must lie in (0, 1), got {a}")));
            }
        }
        if self.rollout.enabled && self.rollout.samples == 0 && self.safety.is_some() {
            return Err(PlanError::Config("rollout needs at least one myopic sample".into()));
        }
        Ok(())
    }
}
