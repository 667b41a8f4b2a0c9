use std::fmt;
use std::str::FromStr;

use safebsp_core::{CostKind, PayoffOperator, RolloutConfig, WideningConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    Lightdark,
    Roomba,
    Slam,
    Pushbox,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    PcDpw,
    PcPuct,
    Cpft,
    Pft,
}

impl PlannerKind {
    pub fn is_constrained(self) -> bool {
        matches!(self, PlannerKind::PcDpw | PlannerKind::PcPuct)
    }
}

macro_rules! kebab_names {
    ($t:ty { $($v:ident => $s:literal),* $(,)? }) => {
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($s => Ok(<$t>::$v),)*
                    _ => Err(format!("unknown value `{s}`, expected one of: {}", [$($s),*].join(", "))),
                }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(<$t>::$v => $s,)* })
            }
        }
    };
}

kebab_names!(Problem { Lightdark => "lightdark", Roomba => "roomba", Slam => "slam", Pushbox => "pushbox" });
kebab_names!(PlannerKind { PcDpw => "pc-dpw", PcPuct => "pc-puct", Cpft => "cpft", Pft => "pft" });

/// Multiplier settings of the Lagrangian baseline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualConfig {
    pub lambda0: f64,
    pub eta: f64,
    pub budget: f64,
    pub cost: CostKind,
}

/// Everything a run needs besides the environment geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Problem,
    pub planner: PlannerKind,
    pub trials: usize,
    pub seed: u64,
    pub particles: usize,
    pub queries: usize,
    /// Autonomy loop cycles per trial.
    pub max_steps: usize,
    /// Planning horizon of each session.
    pub depth: usize,
    pub delta: f64,
    pub operator: PayoffOperator,
    pub risk_alpha: f64,
    pub constrain_propagated: bool,
    pub make_safe: bool,
    pub exploration: f64,
    pub puct_exponent: f64,
    pub action_widening: WideningConfig,
    pub observation_widening: WideningConfig,
    pub rollout: RolloutConfig,
    pub dual: DualConfig,
    pub keep_trajectories: bool,
    /// Keep the dump of the first search tree of trial 0.
    pub dump_first_tree: bool,
}

impl RunConfig {
    pub fn defaults(problem: Problem) -> Self {
        let base = Self {
            problem,
            planner: PlannerKind::PcDpw,
            trials: 70,
            seed: 0,
            particles: 500,
            queries: 1000,
            max_steps: 5,
            depth: 5,
            delta: 1.0,
            operator: PayoffOperator::ProbSafe,
            risk_alpha: 0.05,
            constrain_propagated: true,
            make_safe: true,
            exploration: 1.0,
            puct_exponent: 0.5,
            action_widening: WideningConfig::constant(2.0, 0.5),
            observation_widening: WideningConfig::constant(1.0, 0.3),
            rollout: RolloutConfig::default(),
            dual: DualConfig {
                lambda0: 0.0,
                eta: 1.0,
                budget: 0.0,
                cost: CostKind::StateComplement,
            },
            keep_trajectories: false,
            dump_first_tree: false,
        };
        match problem {
            Problem::Lightdark => Self {
                exploration: 100.0,
                dual: DualConfig {
                    eta: 0.01,
                    ..base.dual
                },
                ..base
            },
            Problem::Roomba => Self {
                max_steps: 50,
                exploration: 10_000.0,
                dual: DualConfig {
                    eta: 10_000.0,
                    ..base.dual
                },
                ..base
            },
            Problem::Slam => Self {
                trials: 50,
                max_steps: 20,
                exploration: 10.0,
                make_safe: false,
                ..base
            },
            Problem::Pushbox => Self {
                trials: 20,
                max_steps: 20,
                exploration: 100.0,
                rollout: RolloutConfig {
                    enabled: true,
                    max_depth: Some(3),
                    samples: 10,
                    epsilon: 0.0,
                },
                ..base
            },
        }
    }

    /// Defaults of the problem named in `overrides` (or `problem`) with the
    /// given JSON fields replaced.
    pub fn from_json(problem: Option<Problem>, overrides: &Value) -> Result<Self, HarnessError> {
        let named = match overrides.get("problem") {
            Some(v) => Some(
                serde_json::from_value::<Problem>(v.clone())
                    .map_err(|e| HarnessError::Config(format!("problem: {e}")))?,
            ),
            None => None,
        };
        let problem = problem
            .or(named)
            .ok_or_else(|| HarnessError::Config("problem: not given".into()))?;
        let mut merged = serde_json::to_value(Self::defaults(problem)).expect("config serializes");
        let Value::Object(fields) = overrides else {
            return Err(HarnessError::Config("run config must be a JSON object".into()));
        };
        merge(&mut merged, fields);
        merged["problem"] = serde_json::to_value(problem).expect("problem serializes");
        serde_json::from_value(merged).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |field: &str, reason: &str| Err(HarnessError::Config(format!("{field}: {reason}")));
        if self.trials == 0 {
            return bad("trials", "must be at least 1");
        }
        if self.particles == 0 {
            return bad("particles", "must be at least 1");
        }
        if self.queries == 0 {
            return bad("queries", "must be at least 1");
        }
        if self.max_steps == 0 {
            return bad("max_steps", "must be at least 1");
        }
        if self.depth == 0 {
            return bad("depth", "must be at least 1");
        }
        if self.operator == PayoffOperator::ProbSafe && !(0.0..=1.0).contains(&self.delta) {
            return bad("delta", "must lie in [0, 1]");
        }
        if !(self.exploration >= 0.0) {
            return bad("exploration", "must be non-negative");
        }
        if !(self.dual.eta >= 0.0 && self.dual.lambda0 >= 0.0) {
            return bad("dual", "eta and lambda0 must be non-negative");
        }
        Ok(())
    }
}

fn merge(base: &mut Value, overrides: &serde_json::Map<String, Value>) {
    for (k, v) in overrides {
        match (base.get_mut(k), v) {
            (Some(slot @ Value::Object(_)), Value::Object(inner)) => merge(slot, inner),
            (Some(slot), _) => *slot = v.clone(),
            (None, _) => {
                base[k.as_str()] = v.clone();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_keep_unlisted_defaults() {
        let c = RunConfig::from_json(Some(Problem::Roomba), &json!({"trials": 3, "dual": {"eta": 0.5}})).unwrap();
        assert_eq!(c.trials, 3);
        assert_eq!(c.dual.eta, 0.5);
        assert_eq!(c.max_steps, 50);
        assert_eq!(c.dual.cost, CostKind::StateComplement);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_json(Some(Problem::Slam), &json!({"trails": 3})).is_err());
        assert!(RunConfig::from_json(None, &json!({})).is_err());
    }

    #[test]
    fn zero_trials_fail_validation() {
        let mut c = RunConfig::defaults(Problem::Lightdark);
        c.trials = 0;
        assert!(c.validate().is_err());
        c.trials = 1;
        c.delta = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn names_parse_both_ways() {
        for p in ["lightdark", "roomba", "slam", "pushbox"] {
            assert_eq!(p.parse::<Problem>().unwrap().to_string(), p);
        }
        for p in ["pc-dpw", "pc-puct", "cpft", "pft"] {
            assert_eq!(p.parse::<PlannerKind>().unwrap().to_string(), p);
        }
        assert!("mcts".parse::<PlannerKind>().is_err());
    }
}
