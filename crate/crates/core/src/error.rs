use thiserror::Error;

use crate::history::HistoryKey;
use crate::model::ActionId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("every particle has zero likelihood for the observation")]
    AllZeroLikelihood,
    #[error("no particle of the belief lies in the safe set")]
    NoSafeParticles,
    #[error("belief has no particles")]
    EmptyBelief,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("history {0} is already present in the tree")]
    DuplicateKey(HistoryKey),
    #[error("node {0} is not in the tree")]
    UnknownNode(usize),
    #[error("action {action:?} is not a child of node {node}")]
    UnknownAction { node: usize, action: ActionId },
    #[error("action {action:?} was already added or pruned at node {node}")]
    ActionExists { node: usize, action: ActionId },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SafetyError {
    #[error("risk tail carries no probability mass")]
    EmptyTail,
    #[error("threshold {0} is outside [0, 1]")]
    InvalidDelta(f64),
    #[error("risk level {0} is outside (0, 1)")]
    InvalidAlpha(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("every root action was pruned; no safe action exists")]
    InfeasibleRoot,
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("invalid planner configuration: {0}")]
    Config(String),
}
