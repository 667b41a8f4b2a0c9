//! Removal of a dangerous action subtree with incremental repair of the
//! ancestor statistics, plus a from-scratch rebuild used as an oracle.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::TreeError;
use crate::model::ActionId;
use crate::tree::{LaceTail, NodeId, SearchTree};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CleanReport {
    pub nodes_deleted: u64,
    /// Belief nodes whose statistics were adjusted.
    pub nodes_repaired: u64,
    /// Visits withdrawn from every ancestor.
    pub visits_removed: u64,
}

/// Deletes action `a` below `h` and its subtree, then withdraws the laces
/// that went through it from every ancestor.
///
/// Each ancestor loses exactly the removed visit count; the value sums lose
/// the removed returns, which grow by the edge reward times that count at
/// every level on the way up.
pub fn clean<S, O: Clone>(
    tree: &mut SearchTree<S, O>,
    h: NodeId,
    a: ActionId,
) -> Result<CleanReport, TreeError> {
    let deleted_before = tree.stats.nodes_deleted;
    let removed = tree.remove_action(h, a)?;
    tree.stats.pruned_actions += 1;
    let mut report = CleanReport {
        nodes_deleted: tree.stats.nodes_deleted - deleted_before,
        ..CleanReport::default()
    };
    let dn = removed.n;
    if dn == 0 {
        return Ok(report);
    }
    report.visits_removed = dn;
    let mut ds = removed.q_sum();
    let mut dc = removed.qc_sum();
    let mut cur = h;
    loop {
        let node = tree.get_mut(cur)?;
        node.n -= dn;
        node.s -= ds;
        node.s_cost -= dc;
        if node.n == 0 {
            node.s = 0.0;
            node.s_cost = 0.0;
        }
        report.nodes_repaired += 1;
        let Some((p, pa)) = node.parent else {
            break;
        };
        let (r, c) = {
            let edge = tree.edge_to(cur).ok_or(TreeError::UnknownNode(cur.0))?;
            (edge.reward, edge.cost)
        };
        ds += dn as f64 * r;
        dc += dn as f64 * c;
        let an = tree
            .get_mut(p)?
            .action_mut(pa)
            .ok_or(TreeError::UnknownAction { node: p.0, action: pa })?;
        let n = an.n - dn;
        let (qs, qcs) = (an.q_sum() - ds, an.qc_sum() - dc);
        an.set_sums(n, qs, qcs);
        cur = p;
    }
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RebuiltStats {
    /// `(n, S)` per belief node.
    pub nodes: HashMap<NodeId, (u64, f64)>,
    /// `(n, Q sum)` per action node.
    pub actions: HashMap<(NodeId, ActionId), (u64, f64)>,
}

/// Replays every logged lace that avoids all pruned actions.
pub fn rebuild<S, O: Clone>(tree: &SearchTree<S, O>) -> Option<RebuiltStats> {
    let laces = tree.laces()?;
    let pruned: std::collections::HashSet<(NodeId, ActionId)> =
        tree.prune_log().iter().copied().collect();
    let mut out = RebuiltStats::default();
    for lace in laces {
        if lace
            .steps
            .iter()
            .any(|s| pruned.contains(&(s.node, s.action)))
        {
            continue;
        }
        let mut g = match lace.tail {
            LaceTail::Leaf => {
                let last = lace.steps.last().map_or(tree.root(), |s| s.child);
                out.nodes.entry(last).or_default().0 += 1;
                0.0
            }
            LaceTail::Rollout { value, .. } => value,
        };
        for s in lace.steps.iter().rev() {
            g += s.reward;
            let node = out.nodes.entry(s.node).or_default();
            node.0 += 1;
            node.1 += g;
            let act = out.actions.entry((s.node, s.action)).or_default();
            act.0 += 1;
            act.1 += g;
        }
    }
    Some(out)
}

/// Largest discrepancy between the live statistics and a rebuild, or the
/// first structural mismatch.
pub fn oracle_discrepancy<S, O: Clone>(tree: &SearchTree<S, O>) -> Result<f64, String> {
    let rebuilt = rebuild(tree).ok_or("lace log is disabled")?;
    let mut worst: f64 = 0.0;
    for id in tree.node_ids() {
        let node = tree.node(id);
        let (n, s) = rebuilt.nodes.get(&id).copied().unwrap_or((0, 0.0));
        if n != node.n {
            return Err(format!("node {} visits {} vs rebuilt {}", node.key, node.n, n));
        }
        worst = worst.max((s - node.s).abs());
        for an in &node.actions {
            let (n, qs) = rebuilt
                .actions
                .get(&(id, an.action))
                .copied()
                .unwrap_or((0, 0.0));
            if n != an.n {
                return Err(format!(
                    "action {:?} at {} visits {} vs rebuilt {}",
                    an.action, node.key, an.n, n
                ));
            }
            if n > 0 {
                worst = worst.max((qs / n as f64 - an.q).abs());
            }
        }
    }
    for id in rebuilt.nodes.keys() {
        if !tree.contains(*id) {
            return Err(format!("rebuilt statistics reference deleted node {}", id.0));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::belief::{BeliefKind, ParticleBelief};
    use crate::tree::{ChildBeliefs, Lace, LaceStep};

    fn cb() -> ChildBeliefs<f64> {
        let b = Arc::new(ParticleBelief::uniform(vec![0.0], BeliefKind::Posterior).unwrap());
        ChildBeliefs {
            belief: b.clone(),
            safe_belief: b.clone(),
            safe_propagated: b,
            terminal: false,
        }
    }

    fn root() -> SearchTree<f64, u8> {
        let b = Arc::new(ParticleBelief::uniform(vec![0.0], BeliefKind::Posterior).unwrap());
        let mut t = SearchTree::new(b.clone(), b);
        t.enable_lace_log();
        t
    }

    fn back_up(t: &mut SearchTree<f64, u8>, steps: &[(NodeId, ActionId, NodeId)], tail: LaceTail) {
        let mut g = match tail {
            LaceTail::Leaf => {
                t.record_leaf(steps.last().unwrap().2).unwrap();
                0.0
            }
            LaceTail::Rollout { value, .. } => value,
        };
        let mut lace = Vec::new();
        for &(h, a, c) in steps.iter().rev() {
            let r = t.edge_to(c).unwrap().reward;
            g += r;
            t.record_visit(h, a, g, 0.0).unwrap();
            lace.push(LaceStep {
                node: h,
                action: a,
                reward: r,
                cost: 0.0,
                child: c,
            });
        }
        lace.reverse();
        t.log_lace(Lace { steps: lace, tail });
    }

    #[test]
    fn pruning_a_grandchild_action_matches_hand_values() {
        let mut t = root();
        let r = t.root();
        let (a0, a1) = (ActionId(0), ActionId(1));
        t.add_action(r, a0).unwrap();
        let c = t.insert_child(r, a0, 0, 1.0, 0.0, 1.0, cb()).unwrap();
        back_up(&mut t, &[(r, a0, c)], LaceTail::Leaf);
        t.add_action(c, a1).unwrap();
        let g = t.insert_child(c, a1, 0, 10.0, 0.0, 1.0, cb()).unwrap();
        back_up(&mut t, &[(r, a0, c), (c, a1, g)], LaceTail::Leaf);
        back_up(&mut t, &[(r, a0, c), (c, a1, g)], LaceTail::Leaf);
        // Root action saw returns 1, 11, 11.
        assert_eq!(t.node(r).action(a0).unwrap().q, 23.0 / 3.0);
        let rep = clean(&mut t, c, a1).unwrap();
        assert_eq!(rep.nodes_deleted, 1);
        assert_eq!(rep.visits_removed, 2);
        let an = t.node(r).action(a0).unwrap();
        assert_eq!((an.n, an.q), (1, 1.0));
        assert_eq!((t.node(c).n, t.node(c).s), (1, 0.0));
        assert_eq!((t.node(r).n, t.node(r).s), (1, 1.0));
        assert!(oracle_discrepancy(&t).unwrap() < 1e-12);
    }

    #[test]
    fn pruning_unvisited_action_only_removes_it() {
        let mut t = root();
        let r = t.root();
        t.add_action(r, ActionId(0)).unwrap();
        t.add_action(r, ActionId(1)).unwrap();
        let c = t.insert_child(r, ActionId(0), 0, 2.0, 0.0, 1.0, cb()).unwrap();
        back_up(&mut t, &[(r, ActionId(0), c)], LaceTail::Rollout { value: 3.0, cost: 0.0 });
        let rep = clean(&mut t, r, ActionId(1)).unwrap();
        assert_eq!(rep.nodes_repaired, 0);
        assert_eq!(t.node(r).n, 1);
        assert_eq!(t.node(r).s, 5.0);
    }

    #[test]
    fn rollout_laces_count_the_creating_visit() {
        let mut t = root();
        let r = t.root();
        let a = ActionId(0);
        t.add_action(r, a).unwrap();
        let c = t.insert_child(r, a, 0, 1.0, 0.0, 1.0, cb()).unwrap();
        back_up(&mut t, &[(r, a, c)], LaceTail::Rollout { value: 5.0, cost: 0.0 });
        t.add_action(c, ActionId(3)).unwrap();
        let g = t.insert_child(c, ActionId(3), 0, 2.0, 0.0, 1.0, cb()).unwrap();
        back_up(&mut t, &[(r, a, c), (c, ActionId(3), g)], LaceTail::Rollout { value: 7.0, cost: 0.0 });
        assert_eq!(t.node(c).n, 1);
        assert_eq!(t.node(r).action(a).unwrap().n, 2);
        clean(&mut t, c, ActionId(3)).unwrap();
        let an = t.node(r).action(a).unwrap();
        assert_eq!((an.n, an.q), (1, 6.0));
        assert_eq!(t.node(c).n, 0);
        assert!(oracle_discrepancy(&t).unwrap() < 1e-12);
    }
}
