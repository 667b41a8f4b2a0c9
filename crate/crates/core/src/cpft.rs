//! Lagrangian baseline: the search maximizes the reward minus a multiplier
//! times a constraint cost, and the multiplier follows dual ascent on the
//! root cost estimate. Without a cost operator this is plain PFT-DPW.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::ParticleBelief;
use crate::config::PlannerConfig;
use crate::error::PlanError;
use crate::expand::{expand, ExpandError};
use crate::model::GenerativeModel;
use crate::planner::{available_actions, best_root, pick_child, select, PlanResult, QueryOutcome};
use crate::rollout::{rollout, RolloutParams};
use crate::safety::CostOperator;
use crate::tree::{widen, Lace, LaceStep, LaceTail, SearchTree};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    pub eta: f64,
    /// Admissible expected cost.
    pub budget: f64,
}

impl DualState {
    pub fn new(lambda0: f64, eta: f64, budget: f64) -> Self {
        Self {
            lambda: lambda0,
            eta,
            budget,
        }
    }

    /// Projected dual ascent step.
    pub fn update(&mut self, cost_estimate: f64) {
        self.lambda = (self.lambda + self.eta * (cost_estimate - self.budget)).max(0.0);
    }
}

/// Root cost estimate: visit-weighted mean of the action cost values.
pub fn averaged_constraint_estimate<S, O: Clone>(tree: &SearchTree<S, O>) -> f64 {
    let root = tree.node(tree.root());
    let n: u64 = root.actions.iter().map(|a| a.n).sum();
    if n == 0 {
        return 0.0;
    }
    root.actions.iter().map(|a| a.qc_sum()).sum::<f64>() / n as f64
}

pub struct LagrangianPlanner<'m, M: GenerativeModel> {
    model: &'m M,
    config: PlannerConfig,
    cost: Option<CostOperator>,
    dual: DualState,
    tree: SearchTree<M::State, M::Observation>,
}

impl<'m, M: GenerativeModel> LagrangianPlanner<'m, M> {
    /// `cost = None` gives the unconstrained planner with the multiplier
    /// frozen at zero.
    pub fn new(
        model: &'m M,
        root: ParticleBelief<M::State>,
        mut config: PlannerConfig,
        cost: Option<CostOperator>,
        dual: DualState,
    ) -> Result<Self, PlanError> {
        config.safety = None;
        config.make_safe = false;
        config.validate()?;
        let root = Arc::new(root);
        let mut tree = SearchTree::new(root.clone(), root);
        if config.record_laces {
            tree.enable_lace_log();
        }
        let dual = if cost.is_some() {
            dual
        } else {
            DualState::new(0.0, 0.0, 0.0)
        };
        Ok(Self {
            model,
            config,
            cost,
            dual,
            tree,
        })
    }

    pub fn tree(&self) -> &SearchTree<M::State, M::Observation> {
        &self.tree
    }

    pub fn into_tree(self) -> SearchTree<M::State, M::Observation> {
        self.tree
    }

    pub fn dual(&self) -> DualState {
        self.dual
    }

    /// Best root action under the current multiplier.
    pub fn result(&self) -> PlanResult {
        best_root(&self.tree, self.dual.lambda)
    }

    pub fn run<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<PlanResult, PlanError> {
        for _ in 0..self.config.queries {
            if self.query(rng)? == QueryOutcome::Exhausted {
                break;
            }
        }
        Ok(self.result())
    }

    pub fn query<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<QueryOutcome, PlanError> {
        self.tree.stats.queries += 1;
        let cfg = self.config;
        let lambda = self.dual.lambda;
        let mut path: Vec<LaceStep> = Vec::new();
        let mut h = self.tree.root();
        let tail = loop {
            let depth = self.tree.node(h).depth;
            if depth >= cfg.horizon || self.tree.node(h).terminal {
                self.tree.record_leaf(h)?;
                break LaceTail::Leaf;
            }
            let node = self.tree.node(h);
            let w = &cfg.action_widening;
            if node.actions.is_empty()
                || widen(node.actions.len(), node.n + 1, w.k, w.alpha.at(depth))
            {
                let avail = available_actions(node, self.model.num_actions());
                if !avail.is_empty() {
                    let a = self.model.propose_action(&node.belief, &avail, rng);
                    self.tree.add_action(h, a)?;
                }
            }
            let Some(a) = select(self.tree.node(h), &cfg, lambda) else {
                return Ok(QueryOutcome::Exhausted);
            };
            let an = self.tree.node(h).action(a).expect("selected action exists");
            let w = &cfg.observation_widening;
            if !(an.children.is_empty()
                || widen(an.children.len(), an.n + 1, w.k, w.alpha.at(depth)))
            {
                let i = pick_child(&self.tree, an, cfg.variant, rng);
                let edge = &an.children[i];
                path.push(LaceStep {
                    node: h,
                    action: a,
                    reward: edge.reward,
                    cost: edge.cost,
                    child: edge.node,
                });
                h = edge.node;
                continue;
            }
            let time = cfg.time0 + depth;
            let exp = match expand(self.model, &mut self.tree, h, a, false, &cfg.filter, time, rng) {
                Ok(e) => e,
                Err(ExpandError::Full | ExpandError::Safe) => {
                    return Ok(QueryOutcome::Dropped)
                }
            };
            let cost = self.cost.map_or(0.0, |c| {
                c.cost(
                    self.model,
                    &exp.beliefs.safe_propagated,
                    &exp.beliefs.belief,
                    time + 1,
                )
            });
            let full = exp.beliefs.belief.clone();
            let child =
                self.tree
                    .insert_child(h, a, exp.observation, exp.reward, cost, 1.0, exp.beliefs)?;
            path.push(LaceStep {
                node: h,
                action: a,
                reward: exp.reward,
                cost,
                child,
            });
            if cfg.rollout.enabled {
                let params = RolloutParams {
                    safety: None,
                    make_safe: false,
                    filter: cfg.filter,
                    config: cfg.rollout,
                    cost: self.cost,
                };
                let ret = if self.tree.node(child).terminal {
                    Default::default()
                } else {
                    let remaining = cfg.horizon - depth - 1;
                    rollout(self.model, &params, full.clone(), full, time + 1, remaining, rng)
                };
                self.tree.node_mut(child).rollout_value = ret.value;
                break LaceTail::Rollout {
                    value: ret.value,
                    cost: ret.cost,
                };
            }
            h = child;
        };
        let (mut g, mut gc) = match tail {
            LaceTail::Leaf => (0.0, 0.0),
            LaceTail::Rollout { value, cost } => (value, cost),
        };
        for step in path.iter().rev() {
            g += step.reward;
            gc += step.cost;
            self.tree.record_visit(step.node, step.action, g, gc)?;
        }
        self.tree.log_lace(Lace { steps: path, tail });
        if self.cost.is_some() {
            let estimate = averaged_constraint_estimate(&self.tree);
            self.dual.update(estimate);
        }
        Ok(QueryOutcome::BackedUp(g))
    }
}

/// Plain PFT-DPW: no gate, no safety filtering, no cost.
pub fn pft_plan<M: GenerativeModel, R: Rng + ?Sized>(
    model: &M,
    root: ParticleBelief<M::State>,
    config: PlannerConfig,
    rng: &mut R,
) -> Result<(PlanResult, SearchTree<M::State, M::Observation>), PlanError> {
    let mut p = LagrangianPlanner::new(model, root, config, None, DualState::new(0.0, 0.0, 0.0))?;
    let r = p.run(rng)?;
    Ok((r, p.into_tree()))
}

/// Lagrangian planning; the dual state is carried across planning sessions.
pub fn cpft_plan<M: GenerativeModel, R: Rng + ?Sized>(
    model: &M,
    root: ParticleBelief<M::State>,
    config: PlannerConfig,
    cost: CostOperator,
    dual: &mut DualState,
    rng: &mut R,
) -> Result<(PlanResult, SearchTree<M::State, M::Observation>), PlanError> {
    let mut p = LagrangianPlanner::new(model, root, config, Some(cost), *dual)?;
    let r = p.run(rng)?;
    *dual = p.dual();
    Ok((r, p.into_tree()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_update_projects_onto_nonnegative() {
        let mut d = DualState::new(0.0, 0.5, 0.0);
        d.update(2.0);
        assert_eq!(d.lambda, 1.0);
        d.budget = 5.0;
        d.update(1.0);
        assert_eq!(d.lambda, 0.0);
    }
}
