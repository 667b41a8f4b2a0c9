use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use safebsp_bench::{emit, Format, HarnessError, PlannerKind, Problem, RunConfig};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "safebsp", version, about = "Closed-loop trials of safe belief-space planners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl From<Switch> for bool {
    fn from(s: Switch) -> bool {
        matches!(s, Switch::On)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded trials and write one record per trial.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    problem: Option<Problem>,
    #[arg(long)]
    planner: Option<PlannerKind>,
    #[arg(long)]
    trials: Option<usize>,
    /// Tree queries per planning session.
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    constrain_propagated: Option<Switch>,
    #[arg(long, value_enum)]
    make_safe: Option<Switch>,
    /// Planning horizon.
    #[arg(long)]
    depth: Option<usize>,
    /// Autonomy loop cycles per trial.
    #[arg(long)]
    steps: Option<usize>,
    /// Writes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// JSON file overriding environment constants.
    #[arg(long)]
    env_config: Option<PathBuf>,
    /// JSON file overriding run settings; flags win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Include per-step trajectories in JSON output.
    #[arg(long)]
    trajectories: bool,
    /// Write the first search tree of trial 0 to this file.
    #[arg(long)]
    dump_tree: Option<PathBuf>,
}

fn read_json(path: &PathBuf) -> Result<Value, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn build_config(args: &RunArgs) -> Result<RunConfig, HarnessError> {
    let file = match &args.config {
        Some(p) => read_json(p)?,
        None => Value::Object(Default::default()),
    };
    let mut cfg = RunConfig::from_json(args.problem, &file)?;
    if let Some(v) = args.planner {
        cfg.planner = v;
    }
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.queries {
        cfg.queries = v;
    }
    if let Some(v) = args.particles {
        cfg.particles = v;
    }
    if let Some(v) = args.delta {
        cfg.delta = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.constrain_propagated {
        cfg.constrain_propagated = v.into();
    }
    if let Some(v) = args.make_safe {
        cfg.make_safe = v.into();
    }
    if let Some(v) = args.depth {
        cfg.depth = v;
    }
    if let Some(v) = args.steps {
        cfg.max_steps = v;
    }
    cfg.keep_trajectories |= args.trajectories;
    cfg.dump_first_tree |= args.dump_tree.is_some();
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<bool, HarnessError> {
    let cfg = build_config(&args)?;
    let env = args.env_config.as_ref().map(read_json).transpose()?;
    let output = safebsp_bench::run(&cfg, env.as_ref())?;
    if let Some(path) = &args.dump_tree {
        let text = output.trials.first().and_then(|t| t.tree_dump.clone()).unwrap_or_default();
        std::fs::write(path, text)?;
    }
    match &args.out {
        Some(path) => emit(&output, args.format, BufWriter::new(File::create(path)?))?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            emit(&output, args.format, &mut lock)?;
            lock.flush()?;
        }
    }
    let s = &output.summary;
    eprintln!(
        "{} {} trials={} collisions={} p_safe={:.4} reward={:.3} goal_rate={:.3}",
        cfg.problem, cfg.planner, s.trials, s.collisions, s.p_safe_hat, s.mean_cumulative_reward, s.goal_reach_rate
    );
    Ok(s.infeasible_aborts == s.trials)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("every trial aborted with an infeasible root");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
