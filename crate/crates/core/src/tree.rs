use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::Arc;

use serde::Serialize;

use crate::belief::ParticleBelief;
use crate::error::TreeError;
use crate::history::HistoryKey;
use crate::model::{ActionId, GenerativeModel};
use crate::safety::{check_indicator, SafetySpec};

/// Value of an action node that has not been backed up yet.
pub const Q_INIT: f64 = f64::INFINITY;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(pub usize);

#[derive(Clone, Debug)]
pub struct ChildEdge<O> {
    pub obs_id: u32,
    pub observation: O,
    pub reward: f64,
    pub cost: f64,
    /// Predictive density ratio of the safe and full parent beliefs.
    pub weight: f64,
    pub node: NodeId,
}

#[derive(Clone, Debug)]
pub struct ActionNode<O> {
    pub action: ActionId,
    pub n: u64,
    pub q: f64,
    pub qc: f64,
    pub children: Vec<ChildEdge<O>>,
}

impl<O> ActionNode<O> {
    fn new(action: ActionId) -> Self {
        Self {
            action,
            n: 0,
            q: Q_INIT,
            qc: 0.0,
            children: Vec::new(),
        }
    }

    pub fn q_sum(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.q * self.n as f64
        }
    }

    pub fn qc_sum(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.qc * self.n as f64
        }
    }

    fn record(&mut self, q: f64, c: f64) {
        self.n += 1;
        if self.n == 1 {
            self.q = q;
            self.qc = c;
        } else {
            let k = self.n as f64;
            self.q += (q - self.q) / k;
            self.qc += (c - self.qc) / k;
        }
    }

    /// Replaces the statistics after a subtree removal.
    pub(crate) fn set_sums(&mut self, n: u64, q_sum: f64, qc_sum: f64) {
        self.n = n;
        if n == 0 {
            self.q = Q_INIT;
            self.qc = 0.0;
        } else {
            self.q = q_sum / n as f64;
            self.qc = qc_sum / n as f64;
        }
    }

    /// Self-normalized importance weights of the observation children.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.children.iter().map(|c| c.weight).sum();
        self.children
            .iter()
            .map(|c| if total > 0.0 { c.weight / total } else { 0.0 })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct BeliefNode<S, O> {
    pub key: HistoryKey,
    pub parent: Option<(NodeId, ActionId)>,
    pub depth: usize,
    /// Belief conditioned on the full particle set.
    pub belief: Arc<ParticleBelief<S>>,
    /// Belief grown from safety-filtered ancestors; the one the gate checks.
    pub safe_belief: Arc<ParticleBelief<S>>,
    /// Propagated counterpart of `safe_belief`; absent at the root.
    pub safe_propagated: Option<Arc<ParticleBelief<S>>>,
    pub(crate) filtered: Option<Arc<ParticleBelief<S>>>,
    pub n: u64,
    pub s: f64,
    pub s_cost: f64,
    pub actions: Vec<ActionNode<O>>,
    pub pruned: Vec<ActionId>,
    pub rollout_value: f64,
    pub terminal: bool,
}

impl<S, O> BeliefNode<S, O> {
    pub fn value(&self) -> Option<f64> {
        (self.n > 0).then(|| self.s / self.n as f64)
    }

    pub fn action(&self, a: ActionId) -> Option<&ActionNode<O>> {
        self.actions.iter().find(|x| x.action == a)
    }

    pub fn action_mut(&mut self, a: ActionId) -> Option<&mut ActionNode<O>> {
        self.actions.iter_mut().find(|x| x.action == a)
    }

    pub fn has_or_pruned(&self, a: ActionId) -> bool {
        self.action(a).is_some() || self.pruned.contains(&a)
    }
}

/// Beliefs attached to a freshly created child.
pub struct ChildBeliefs<S> {
    pub belief: Arc<ParticleBelief<S>>,
    pub safe_belief: Arc<ParticleBelief<S>>,
    pub safe_propagated: Arc<ParticleBelief<S>>,
    pub terminal: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TreeStats {
    pub queries: u64,
    pub pruned_laces: u64,
    pub pruned_actions: u64,
    pub pruned_null_actions: u64,
    /// Nodes left without any admissible action after pruning.
    pub exhausted_nodes: u64,
    pub nodes_created: u64,
    pub nodes_deleted: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaceStep {
    pub node: NodeId,
    pub action: ActionId,
    pub reward: f64,
    pub cost: f64,
    pub child: NodeId,
}

/// How a backed-up descent ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LaceTail {
    /// The last node was visited and counted with a zero return.
    Leaf,
    /// The last node was created and valued by a rollout without being counted.
    Rollout { value: f64, cost: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lace {
    pub steps: Vec<LaceStep>,
    pub tail: LaceTail,
}

/// Arena of belief nodes keyed by history.
#[derive(Debug)]
pub struct SearchTree<S, O> {
    nodes: Vec<Option<BeliefNode<S, O>>>,
    index: HashMap<HistoryKey, NodeId>,
    pub stats: TreeStats,
    laces: Option<Vec<Lace>>,
    prunes: Vec<(NodeId, ActionId)>,
}

impl<S, O: Clone> SearchTree<S, O> {
    pub fn new(belief: Arc<ParticleBelief<S>>, safe_belief: Arc<ParticleBelief<S>>) -> Self {
        let root = BeliefNode {
            key: HistoryKey::root(),
            parent: None,
            depth: 0,
            belief,
            safe_belief,
            safe_propagated: None,
            filtered: None,
            n: 0,
            s: 0.0,
            s_cost: 0.0,
            actions: Vec::new(),
            pruned: Vec::new(),
            rollout_value: 0.0,
            terminal: false,
        };
        let mut index = HashMap::new();
        index.insert(HistoryKey::root(), NodeId(0));
        Self {
            nodes: vec![Some(root)],
            index,
            stats: TreeStats {
                nodes_created: 1,
                ..TreeStats::default()
            },
            laces: None,
            prunes: Vec::new(),
        }
    }

    /// Keeps every backed-up lace so statistics can be rebuilt from scratch.
    pub fn enable_lace_log(&mut self) {
        self.laces.get_or_insert_with(Vec::new);
    }

    pub fn laces(&self) -> Option<&[Lace]> {
        self.laces.as_deref()
    }

    pub fn prune_log(&self) -> &[(NodeId, ActionId)] {
        &self.prunes
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        matches!(self.nodes.get(id.0), Some(Some(_)))
    }

    pub fn get(&self, id: NodeId) -> Result<&BeliefNode<S, O>, TreeError> {
        self.nodes
            .get(id.0)
            .and_then(|n| n.as_ref())
            .ok_or(TreeError::UnknownNode(id.0))
    }

    pub fn get_mut(&mut self, id: NodeId) -> Result<&mut BeliefNode<S, O>, TreeError> {
        self.nodes
            .get_mut(id.0)
            .and_then(|n| n.as_mut())
            .ok_or(TreeError::UnknownNode(id.0))
    }

    /// Panicking accessor for ids known to be live.
    pub fn node(&self, id: NodeId) -> &BeliefNode<S, O> {
        self.get(id).expect("live node id")
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut BeliefNode<S, O> {
        self.get_mut(id).expect("live node id")
    }

    pub fn lookup(&self, key: &HistoryKey) -> Option<NodeId> {
        self.index.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_some())
            .map(|(i, _)| NodeId(i))
    }

    pub fn add_action(&mut self, h: NodeId, a: ActionId) -> Result<(), TreeError> {
        let node = self.get_mut(h)?;
        if node.has_or_pruned(a) {
            return Err(TreeError::ActionExists { node: h.0, action: a });
        }
        node.actions.push(ActionNode::new(a));
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn insert_child(
        &mut self,
        h: NodeId,
        a: ActionId,
        observation: O,
        reward: f64,
        cost: f64,
        weight: f64,
        beliefs: ChildBeliefs<S>,
    ) -> Result<NodeId, TreeError> {
        let id = NodeId(self.nodes.len());
        let parent = self.get(h)?;
        let depth = parent.depth + 1;
        let an = parent
            .action(a)
            .ok_or(TreeError::UnknownAction { node: h.0, action: a })?;
        let obs_id = an.children.len() as u32;
        let key = parent.key.child(a.0 as u32, obs_id);
        if self.index.contains_key(&key) {
            return Err(TreeError::DuplicateKey(key));
        }
        self.index.insert(key.clone(), id);
        self.nodes.push(Some(BeliefNode {
            key,
            parent: Some((h, a)),
            depth,
            belief: beliefs.belief,
            safe_belief: beliefs.safe_belief,
            safe_propagated: Some(beliefs.safe_propagated),
            filtered: None,
            n: 0,
            s: 0.0,
            s_cost: 0.0,
            actions: Vec::new(),
            pruned: Vec::new(),
            rollout_value: 0.0,
            terminal: beliefs.terminal,
        }));
        self.node_mut(h)
            .action_mut(a)
            .expect("checked above")
            .children
            .push(ChildEdge {
                obs_id,
                observation,
                reward,
                cost,
                weight,
                node: id,
            });
        self.stats.nodes_created += 1;
        Ok(id)
    }

    /// Backs up one return through `(h, a)`: `q` and `c` are the reward and
    /// cost returns from `h` onwards.
    pub fn record_visit(&mut self, h: NodeId, a: ActionId, q: f64, c: f64) -> Result<(), TreeError> {
        let node = self.get_mut(h)?;
        node.action_mut(a)
            .ok_or(TreeError::UnknownAction { node: h.0, action: a })?
            .record(q, c);
        node.n += 1;
        node.s += q;
        node.s_cost += c;
        Ok(())
    }

    /// Counts a visit to a node that ends the descent with zero return.
    pub fn record_leaf(&mut self, h: NodeId) -> Result<(), TreeError> {
        self.get_mut(h)?.n += 1;
        Ok(())
    }

    pub fn log_lace(&mut self, lace: Lace) {
        if let Some(log) = &mut self.laces {
            log.push(lace);
        }
    }

    /// Detaches the action node and deletes its subtree, returning it.
    pub(crate) fn remove_action(&mut self, h: NodeId, a: ActionId) -> Result<ActionNode<O>, TreeError> {
        let node = self.get_mut(h)?;
        let pos = node
            .actions
            .iter()
            .position(|x| x.action == a)
            .ok_or(TreeError::UnknownAction { node: h.0, action: a })?;
        let removed = node.actions.remove(pos);
        node.pruned.push(a);
        self.prunes.push((h, a));
        let mut stack: Vec<NodeId> = removed.children.iter().map(|c| c.node).collect();
        while let Some(id) = stack.pop() {
            if let Some(n) = self.nodes[id.0].take() {
                self.index.remove(&n.key);
                self.stats.nodes_deleted += 1;
                for an in &n.actions {
                    stack.extend(an.children.iter().map(|c| c.node));
                }
            }
        }
        Ok(removed)
    }

    pub fn edge_to(&self, child: NodeId) -> Option<&ChildEdge<O>> {
        let (p, a) = self.get(child).ok()?.parent?;
        self.get(p)
            .ok()?
            .action(a)?
            .children
            .iter()
            .find(|c| c.node == child)
    }

    /// `(action, Q, n)` of the root actions.
    pub fn root_action_values(&self) -> Vec<(ActionId, f64, u64)> {
        self.node(self.root())
            .actions
            .iter()
            .map(|a| (a.action, a.q, a.n))
            .collect()
    }

    pub fn filtered_cache(&self, h: NodeId) -> Option<Arc<ParticleBelief<S>>> {
        self.get(h).ok()?.filtered.clone()
    }

    pub fn set_filtered_cache(&mut self, h: NodeId, b: Arc<ParticleBelief<S>>) {
        if let Ok(n) = self.get_mut(h) {
            n.filtered = Some(b);
        }
    }

    /// Non-root nodes whose stored (propagated, posterior) safe pair fails
    /// the gate.
    pub fn audit_violations<M>(&self, model: &M, spec: &SafetySpec, time0: usize) -> Vec<NodeId>
    where
        M: GenerativeModel<State = S>,
    {
        let mut bad = Vec::new();
        for id in self.node_ids() {
            let n = self.node(id);
            let Some(prop) = &n.safe_propagated else {
                continue;
            };
            let r = check_indicator(model, spec, prop, &n.safe_belief, time0 + n.depth);
            if !r.passed() {
                bad.push(id);
            }
        }
        bad
    }

    pub fn audit_safety<M>(&self, model: &M, spec: &SafetySpec, time0: usize) -> bool
    where
        M: GenerativeModel<State = S>,
    {
        self.audit_violations(model, spec, time0).is_empty()
    }

    /// Line-delimited dump: one line per belief node and per action node.
    pub fn dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut ids: Vec<NodeId> = self.node_ids().collect();
        ids.sort_by(|a, b| self.node(*a).key.cmp(&self.node(*b).key));
        for id in ids {
            let n = self.node(id);
            writeln!(w, "node\t{}\t{}\t{}", n.key, n.n, n.s)?;
            for a in &n.actions {
                writeln!(w, "action\t{}\t{}\t{}\t{}", n.key, a.action.0, a.n, a.q)?;
            }
        }
        Ok(())
    }
}

/// Double progressive widening test: admit a new child when the count after
/// insertion stays within `k * visits^alpha`, `visits` including the current
/// one. With `k = 1` the count after `n` visits is `floor(n^alpha)`.
pub fn widen(children: usize, visits: u64, k: f64, alpha: f64) -> bool {
    (children + 1) as f64 <= k * (visits as f64).powf(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::BeliefKind;

    fn b() -> Arc<ParticleBelief<f64>> {
        Arc::new(ParticleBelief::uniform(vec![0.0], BeliefKind::Posterior).unwrap())
    }

    fn cb() -> ChildBeliefs<f64> {
        ChildBeliefs {
            belief: b(),
            safe_belief: b(),
            safe_propagated: b(),
            terminal: false,
        }
    }

    #[test]
    fn widening_first_children() {
        assert!(widen(0, 1, 1.0, 0.5));
        assert!(!widen(1, 2, 1.0, 0.5));
        assert!(!widen(1, 3, 1.0, 0.5));
        assert!(widen(1, 4, 1.0, 0.5));
        assert!(widen(2, 9, 1.0, 0.5));
    }

    #[test]
    fn insert_and_lookup() {
        let mut t: SearchTree<f64, f64> = SearchTree::new(b(), b());
        let r = t.root();
        t.add_action(r, ActionId(2)).unwrap();
        let c = t.insert_child(r, ActionId(2), 0.3, 1.0, 0.0, 1.0, cb()).unwrap();
        let key = HistoryKey::root().child(2, 0);
        assert_eq!(t.lookup(&key), Some(c));
        assert_eq!(t.node(c).depth, 1);
        assert_eq!(t.edge_to(c).unwrap().reward, 1.0);
        assert!(matches!(
            t.add_action(r, ActionId(2)),
            Err(TreeError::ActionExists { .. })
        ));
    }

    #[test]
    fn unvisited_action_uses_sentinel() {
        let mut t: SearchTree<f64, f64> = SearchTree::new(b(), b());
        let r = t.root();
        t.add_action(r, ActionId(0)).unwrap();
        assert_eq!(t.node(r).action(ActionId(0)).unwrap().q, Q_INIT);
        t.record_visit(r, ActionId(0), 4.0, 0.0).unwrap();
        t.record_visit(r, ActionId(0), 2.0, 0.0).unwrap();
        let a = t.node(r).action(ActionId(0)).unwrap();
        assert_eq!((a.n, a.q), (2, 3.0));
        assert_eq!(t.node(r).value(), Some(3.0));
    }

    #[test]
    fn removing_action_deletes_subtree() {
        let mut t: SearchTree<f64, f64> = SearchTree::new(b(), b());
        let r = t.root();
        t.add_action(r, ActionId(0)).unwrap();
        let c = t.insert_child(r, ActionId(0), 0.0, 0.0, 0.0, 1.0, cb()).unwrap();
        t.add_action(c, ActionId(1)).unwrap();
        let g = t.insert_child(c, ActionId(1), 0.0, 0.0, 0.0, 1.0, cb()).unwrap();
        t.remove_action(r, ActionId(0)).unwrap();
        assert!(!t.contains(c) && !t.contains(g));
        assert_eq!(t.len(), 1);
        assert!(t.node(r).pruned.contains(&ActionId(0)));
        assert!(t.add_action(r, ActionId(0)).is_err());
    }
}
