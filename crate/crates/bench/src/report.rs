use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::trial::TrialRecord;
use crate::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trials: usize,
    pub collisions: usize,
    /// Fraction of trials whose ground-truth trajectory stayed safe.
    pub p_safe_hat: f64,
    pub mean_cumulative_reward: f64,
    pub mean_terminal_goal_distance: f64,
    pub goal_reach_rate: f64,
    pub infeasible_aborts: usize,
    pub null_fallbacks: usize,
    /// Trials in which some search node ended with every action pruned.
    pub trials_with_exhausted_nodes: usize,
    pub pruned_null_actions: u64,
}

impl RunSummary {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let n = records.len();
        let mean = |f: &dyn Fn(&TrialRecord) -> f64| {
            if n == 0 {
                0.0
            } else {
                records.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let collisions = records.iter().filter(|r| r.collided).count();
        Self {
            trials: n,
            collisions,
            p_safe_hat: if n == 0 { 0.0 } else { 1.0 - collisions as f64 / n as f64 },
            mean_cumulative_reward: mean(&|r| r.cumulative_reward),
            mean_terminal_goal_distance: mean(&|r| r.terminal_goal_distance),
            goal_reach_rate: mean(&|r| r.reached_goal as u8 as f64),
            infeasible_aborts: records.iter().filter(|r| r.infeasible_abort).count(),
            null_fallbacks: records.iter().map(|r| r.null_fallbacks).sum(),
            trials_with_exhausted_nodes: records.iter().filter(|r| r.exhausted_nodes > 0).count(),
            pruned_null_actions: records.iter().map(|r| r.pruned_null_actions).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub config: RunConfig,
    pub trials: Vec<TrialRecord>,
    pub summary: RunSummary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format `{s}`, expected csv or json")),
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    trial: usize,
    seed: u64,
    steps: usize,
    collided: bool,
    cumulative_reward: f64,
    infeasible_abort: bool,
    reached_goal: bool,
    terminal_goal_distance: f64,
    null_fallbacks: usize,
    exhausted_nodes: u64,
    pruned_null_actions: u64,
}

pub fn write_csv<W: Write>(records: &[TrialRecord], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(CsvRow {
            trial: r.trial,
            seed: r.seed,
            steps: r.steps,
            collided: r.collided,
            cumulative_reward: r.cumulative_reward,
            infeasible_abort: r.infeasible_abort,
            reached_goal: r.reached_goal,
            terminal_goal_distance: r.terminal_goal_distance,
            null_fallbacks: r.null_fallbacks,
            exhausted_nodes: r.exhausted_nodes,
            pruned_null_actions: r.pruned_null_actions,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(output: &RunOutput, mut w: W) -> Result<(), HarnessError> {
    serde_json::to_writer_pretty(&mut w, output)?;
    writeln!(w)?;
    Ok(())
}

pub fn emit<W: Write>(output: &RunOutput, format: Format, w: W) -> Result<(), HarnessError> {
    match format {
        Format::Csv => write_csv(&output.trials, w),
        Format::Json => write_json(output, w),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(trial: usize, collided: bool) -> TrialRecord {
        TrialRecord {
            trial,
            seed: 11,
            steps: 3,
            collided,
            cumulative_reward: -1.5,
            infeasible_abort: false,
            reached_goal: !collided,
            terminal_goal_distance: 0.25,
            null_fallbacks: 0,
            exhausted_nodes: 0,
            pruned_null_actions: 0,
            filter_failures: 0,
            initial_state: Vec::new(),
            trajectory: Vec::new(),
            tree_dump: None,
        }
    }

    #[test]
    fn sixteen_of_seventy() {
        let recs: Vec<_> = (0..70).map(|i| record(i, i < 16)).collect();
        let s = RunSummary::from_records(&recs);
        assert_eq!(s.collisions, 16);
        assert!((s.p_safe_hat - 54.0 / 70.0).abs() < 1e-15);
        assert_eq!(s.p_safe_hat + s.collisions as f64 / s.trials as f64, 1.0);
    }

    #[test]
    fn one_trial_gives_header_and_row() {
        let mut buf = Vec::new();
        write_csv(&[record(0, false)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("trial,seed,steps,collided,cumulative_reward,infeasible_abort"));
    }
}
