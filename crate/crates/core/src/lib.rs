//! Anytime safe belief-space planning with particle beliefs.
//!
//! The planners search over beliefs represented by weighted particle sets
//! and accept a [`GenerativeModel`] describing the problem. The
//! probabilistically constrained planner ([`planner::PcPlanner`]) keeps only
//! laces whose beliefs satisfy a safety threshold, pruning a whole action
//! subtree the moment a sampled child violates it. The Lagrangian baseline
//! lives in [`cpft`].

pub mod belief;
pub mod cleaner;
pub mod config;
pub mod cpft;
pub mod error;
mod expand;
pub mod geometry;
pub mod history;
pub mod model;
pub mod planner;
pub mod rollout;
pub mod safety;
pub mod toy;
pub mod tree;

pub use belief::{BeliefKind, FilterConfig, Particle, ParticleBelief, ResampleRule};
pub use config::{AlphaSchedule, PlannerConfig, RolloutConfig, SearchVariant, WideningConfig};
pub use error::{FilterError, PlanError, SafetyError, TreeError};
pub use history::HistoryKey;
pub use model::{ActionId, GenerativeModel};
pub use planner::{plan, PcPlanner, PlanResult, QueryOutcome};
pub use safety::{CostKind, CostOperator, PayoffOperator, SafetySpec};
pub use tree::{NodeId, SearchTree};
