//! Probabilistically constrained Monte Carlo tree search over particle
//! beliefs. Dangerous actions are pruned as soon as a sampled child fails
//! the safety gate, so the tree only ever holds safe laces.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::belief::ParticleBelief;
use crate::cleaner::clean;
use crate::config::{PlannerConfig, SearchVariant};
use crate::error::PlanError;
use crate::expand::{argmax_action, expand, ExpandError};
use crate::model::{ActionId, GenerativeModel};
use crate::rollout::{rollout, RolloutParams};
use crate::safety::check_indicator;
use crate::tree::{widen, Lace, LaceStep, LaceTail, NodeId, SearchTree, TreeStats};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RootActionStat {
    pub action: ActionId,
    pub q: f64,
    pub n: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlanResult {
    /// Best backed-up root action; `None` when no root action survived.
    pub best_action: Option<ActionId>,
    pub root_actions: Vec<RootActionStat>,
    pub queries: u64,
    pub stats: TreeStats,
}

impl PlanResult {
    pub fn infeasible(&self) -> bool {
        self.best_action.is_none()
    }

    pub fn action(&self) -> Result<ActionId, PlanError> {
        self.best_action.ok_or(PlanError::InfeasibleRoot)
    }
}

/// What a single query did to the tree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum QueryOutcome {
    /// A lace was backed up with this root return.
    BackedUp(f64),
    /// A dangerous action was pruned; nothing was backed up.
    Pruned { node: NodeId, action: ActionId },
    /// The observation could not be absorbed by the full belief.
    Dropped,
    /// The root has no admissible action left.
    Exhausted,
}

pub(crate) fn select<O>(
    tree_node: &crate::tree::BeliefNode<impl Sized, O>,
    config: &PlannerConfig,
    lambda: f64,
) -> Option<ActionId> {
    let n = tree_node.n as f64;
    let f = match config.variant {
        SearchVariant::DpwUcb => n.ln(),
        SearchVariant::Puct => n.powf(config.puct_exponent),
    };
    let k = config.exploration;
    argmax_action(&tree_node.actions, |an| {
        an.q - lambda * an.qc + k * (f.max(0.0) / an.n as f64).sqrt()
    })
}

pub(crate) fn pick_child<O, R: Rng + ?Sized>(
    tree: &SearchTree<impl Sized, O>,
    an: &crate::tree::ActionNode<O>,
    variant: SearchVariant,
    rng: &mut R,
) -> usize
where
    O: Clone,
{
    match variant {
        SearchVariant::DpwUcb => rng.random_range(0..an.children.len()),
        SearchVariant::Puct => {
            let mut best = 0;
            for (i, c) in an.children.iter().enumerate() {
                if tree.node(c.node).n < tree.node(an.children[best].node).n {
                    best = i;
                }
            }
            best
        }
    }
}

pub(crate) fn available_actions<S, O>(
    node: &crate::tree::BeliefNode<S, O>,
    count: usize,
) -> Vec<ActionId> {
    (0..count)
        .map(ActionId)
        .filter(|a| !node.has_or_pruned(*a))
        .collect()
}

pub(crate) fn best_root<S, O: Clone>(tree: &SearchTree<S, O>, lambda: f64) -> PlanResult {
    let root = tree.node(tree.root());
    let mut best: Option<(f64, ActionId)> = None;
    for an in root.actions.iter().filter(|a| a.n > 0) {
        let v = an.q - lambda * an.qc;
        if best.is_none_or(|(bv, ba)| v > bv || (v == bv && an.action < ba)) {
            best = Some((v, an.action));
        }
    }
    PlanResult {
        best_action: best.map(|b| b.1),
        root_actions: root
            .actions
            .iter()
            .map(|a| RootActionStat {
                action: a.action,
                q: a.q,
                n: a.n,
            })
            .collect(),
        queries: tree.stats.queries,
        stats: tree.stats,
    }
}

pub struct PcPlanner<'m, M: GenerativeModel> {
    model: &'m M,
    config: PlannerConfig,
    tree: SearchTree<M::State, M::Observation>,
}

impl<'m, M: GenerativeModel> PcPlanner<'m, M> {
    /// The root belief is used both as the full and as the safe belief, so
    /// callers normally pass a safety-filtered belief.
    pub fn new(
        model: &'m M,
        root: ParticleBelief<M::State>,
        config: PlannerConfig,
    ) -> Result<Self, PlanError> {
        config.validate()?;
        let root = Arc::new(root);
        let mut tree = SearchTree::new(root.clone(), root);
        if config.record_laces {
            tree.enable_lace_log();
        }
        Ok(Self {
            model,
            config,
            tree,
        })
    }

    pub fn tree(&self) -> &SearchTree<M::State, M::Observation> {
        &self.tree
    }

    pub fn into_tree(self) -> SearchTree<M::State, M::Observation> {
        self.tree
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn result(&self) -> PlanResult {
        best_root(&self.tree, 0.0)
    }

    /// Runs the configured number of queries, stopping early once the root
    /// has no admissible action.
    pub fn run<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<PlanResult, PlanError> {
        for _ in 0..self.config.queries {
            if self.query(rng)? == QueryOutcome::Exhausted {
                break;
            }
        }
        Ok(self.result())
    }

    fn rollout_params(&self) -> RolloutParams {
        RolloutParams {
            safety: self.config.safety,
            make_safe: self.config.make_safe,
            filter: self.config.filter,
            config: self.config.rollout,
            cost: None,
        }
    }

    fn widen_actions<R: Rng + ?Sized>(&mut self, h: NodeId, depth: usize, rng: &mut R) {
        let node = self.tree.node(h);
        let w = &self.config.action_widening;
        let grow = node.actions.is_empty()
            || widen(node.actions.len(), node.n + 1, w.k, w.alpha.at(depth));
        if !grow {
            return;
        }
        let avail = available_actions(node, self.model.num_actions());
        if avail.is_empty() {
            return;
        }
        let a = self.model.propose_action(&node.belief, &avail, rng);
        self.tree
            .add_action(h, a)
            .expect("proposed action is available");
    }

    fn prune(&mut self, h: NodeId, a: ActionId) -> Result<(), PlanError> {
        clean(&mut self.tree, h, a)?;
        self.tree.stats.pruned_laces += 1;
        if self.model.null_action() == Some(a) {
            self.tree.stats.pruned_null_actions += 1;
        }
        if self.tree.node(h).pruned.len() == self.model.num_actions() {
            self.tree.stats.exhausted_nodes += 1;
        }
        Ok(())
    }

    /// One descent from the root: select, widen, expand with the safety
    /// gate, then back up or prune.
    pub fn query<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<QueryOutcome, PlanError> {
        self.tree.stats.queries += 1;
        let cfg = self.config;
        let track_safe = cfg.safety.is_some() && cfg.make_safe;
        let mut path: Vec<LaceStep> = Vec::new();
        let mut h = self.tree.root();
        let tail = loop {
            let depth = self.tree.node(h).depth;
            if depth >= cfg.horizon || self.tree.node(h).terminal {
                self.tree.record_leaf(h)?;
                break LaceTail::Leaf;
            }
            self.widen_actions(h, depth, rng);
            let Some(a) = select(self.tree.node(h), &cfg, 0.0) else {
                if h == self.tree.root() {
                    return Ok(QueryOutcome::Exhausted);
                }
                self.tree.record_leaf(h)?;
                break LaceTail::Leaf;
            };
            let an = self.tree.node(h).action(a).expect("selected action exists");
            let w = &cfg.observation_widening;
            let new_child = an.children.is_empty()
                || widen(an.children.len(), an.n + 1, w.k, w.alpha.at(depth));
            if !new_child {
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
            let exp = match expand(self.model, &mut self.tree, h, a, track_safe, &cfg.filter, time, rng) {
                Ok(e) => e,
                Err(ExpandError::Full) => return Ok(QueryOutcome::Dropped),
                Err(ExpandError::Safe) => {
                    self.prune(h, a)?;
                    return Ok(QueryOutcome::Pruned { node: h, action: a });
                }
            };
            if let Some(spec) = &cfg.safety {
                let gate = check_indicator(
                    self.model,
                    spec,
                    &exp.beliefs.safe_propagated,
                    &exp.beliefs.safe_belief,
                    time + 1,
                );
                if !gate.passed() {
                    self.prune(h, a)?;
                    return Ok(QueryOutcome::Pruned { node: h, action: a });
                }
            }
            let (full, safe) = (exp.beliefs.belief.clone(), exp.beliefs.safe_belief.clone());
            let child = self.tree.insert_child(
                h,
                a,
                exp.observation,
                exp.reward,
                0.0,
                exp.weight,
                exp.beliefs,
            )?;
            path.push(LaceStep {
                node: h,
                action: a,
                reward: exp.reward,
                cost: 0.0,
                child,
            });
            if cfg.rollout.enabled {
                let remaining = cfg.horizon - depth - 1;
                let ret = if self.tree.node(child).terminal {
                    Default::default()
                } else {
                    rollout(self.model, &self.rollout_params(), full, safe, time + 1, remaining, rng)
                };
                self.tree.node_mut(child).rollout_value = ret.value;
                break LaceTail::Rollout {
                    value: ret.value,
                    cost: 0.0,
                };
            }
            h = child;
        };
        let mut g = match tail {
            LaceTail::Leaf => 0.0,
            LaceTail::Rollout { value, .. } => value,
        };
        for step in path.iter().rev() {
            g += step.reward;
            self.tree.record_visit(step.node, step.action, g, 0.0)?;
        }
        self.tree.log_lace(Lace { steps: path, tail });
        Ok(QueryOutcome::BackedUp(g))
    }
}

/// Builds a tree from `root` and returns the decision together with it.
pub fn plan<M: GenerativeModel, R: Rng + ?Sized>(
    model: &M,
    root: ParticleBelief<M::State>,
    config: PlannerConfig,
    rng: &mut R,
) -> Result<(PlanResult, SearchTree<M::State, M::Observation>), PlanError> {
    let mut planner = PcPlanner::new(model, root, config)?;
    let result = planner.run(rng)?;
    Ok((result, planner.into_tree()))
}
