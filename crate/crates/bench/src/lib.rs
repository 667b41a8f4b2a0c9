//! Closed-loop trials of the safe planners on the benchmark problems, with
//! CSV and JSON reporting.

pub mod config;
pub mod report;
pub mod trial;

use safebsp_core::PlanError;
use safebsp_envs::{
    ConfigError, LightDark, LightDarkConfig, PushBox, PushBoxConfig, Roomba, RoombaConfig, Slam, SlamConfig,
};
use serde::de::DeserializeOwned;
use serde_json::Value;
use thiserror::Error;

pub use config::{DualConfig, PlannerKind, Problem, RunConfig};
pub use report::{emit, Format, RunOutput, RunSummary};
pub use trial::{run_trial, run_trials, TrialRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] ConfigError),
    #[error("planning failed: {0}")]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::Env(_))
            || matches!(self, HarnessError::Plan(PlanError::Config(_)))
    }
}

fn env_config<T: DeserializeOwned + Default>(value: Option<&Value>) -> Result<T, HarnessError> {
    match value {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| HarnessError::Env(ConfigError::Parse(e))),
    }
}

/// Runs `cfg` on its problem; `env` overrides environment constants.
pub fn run(cfg: &RunConfig, env: Option<&Value>) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let trials = match cfg.problem {
        Problem::Lightdark => {
            let model = LightDark::new(env_config::<LightDarkConfig>(env)?)?;
            run_trials(cfg, |_| Ok(model.clone()))?
        }
        Problem::Roomba => {
            let model = Roomba::new(env_config::<RoombaConfig>(env)?)?;
            run_trials(cfg, |_| Ok(model.clone()))?
        }
        Problem::Slam => {
            let c = env_config::<SlamConfig>(env)?;
            Slam::new(c.clone(), &mut trial::trial_rng(cfg.seed, 2))?;
            run_trials(cfg, |rng| Ok(Slam::new(c.clone(), rng)?))?
        }
        Problem::Pushbox => {
            let mut c = env_config::<PushBoxConfig>(env)?;
            // Planners without a chance constraint see safety only through
            // the reward.
            c.soft_safety_term = !cfg.planner.is_constrained();
            let model = PushBox::new(c)?;
            run_trials(cfg, |_| Ok(model.clone()))?
        }
    };
    Ok(RunOutput {
        config: cfg.clone(),
        summary: RunSummary::from_records(&trials),
        trials,
    })
}
