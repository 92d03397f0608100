//! Command-line front end: `topology`, `simulate`, `optimize`, `replay`.

mod commands;
mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::evolver::GaConfig;
use crate::readout::DEFAULT_RIDGE_LAMBDA;
use crate::ssa::NetworkParams;
use crate::tasks::Task;
use crate::topology::TopologySpec;

pub use commands::{
    read_manifest, replay, run_optimize, run_simulate, run_topology, BestGenome, Manifest,
    Metrics, OptimizeConfig, SimulateConfig, SweepRow, TaskKind, MANIFEST_FILE,
};
pub use config::ConfigFile;

pub const DEFAULT_TOTAL_TIME: u32 = 50;
pub const DEFAULT_STEP_SIZE: u32 = 2;
pub const DEFAULT_SEED: u64 = 1;

/// Missing or contradictory arguments; the binary exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Debug, Parser)]
#[command(name = "chemres", version, about = "Chemically-inspired reservoir computing")]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "CHEMRES_OUT", default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a cycle-with-chords topology and write DOT + JSON.
    Topology(TopologyArgs),
    /// One simulate + readout pass for explicit genomes.
    Simulate(SimulateArgs),
    /// Two-level genetic search, optionally sweeping step sizes or taus.
    Optimize(OptimizeArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct TopologyArgs {
    #[arg(long)]
    pub nodes: usize,
    #[arg(long)]
    pub chord_length: usize,
    #[arg(long)]
    pub chord_step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Short,
    Long,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `key = value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub chord_length: Option<usize>,
    #[arg(long)]
    pub chord_step: Option<usize>,
    #[arg(long)]
    pub inflow_amount: Option<f64>,
    #[arg(long)]
    pub outflow_rate: Option<f64>,
    #[arg(long)]
    pub input_scaling: Option<f64>,
    #[arg(long)]
    pub reaction_scaling: Option<f64>,
    /// One rate per edge (cycle edges first, then chords), or a single
    /// value applied to every edge.
    #[arg(long, value_delimiter = ',')]
    pub reaction_rates: Vec<f64>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long)]
    pub tau: Option<u32>,
    #[arg(long)]
    pub step_size: Option<u32>,
    #[arg(long)]
    pub total_time: Option<u32>,
    #[arg(long)]
    pub ridge_lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Comma-separated list; long task only.
    #[arg(long, value_delimiter = ',')]
    pub tau: Vec<u32>,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub step_size: Vec<u32>,
    #[arg(long)]
    pub total_time: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Generation cap for both levels.
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub outer_generations: Option<usize>,
    #[arg(long)]
    pub inner_generations: Option<usize>,
    /// Outer wall-clock budget.
    #[arg(long)]
    pub budget_seconds: Option<f64>,
    /// Wall-clock budget of each inner search.
    #[arg(long)]
    pub inner_budget_seconds: Option<f64>,
    /// Drop the wall-clock cutoffs so the run is reproducible bit for bit.
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long)]
    pub ridge_lambda: Option<f64>,
    /// Cap on concurrent fitness evaluations.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn resolve_task(kind: Option<TaskArg>, tau: Option<u32>) -> Result<Task> {
    match kind.unwrap_or(TaskArg::Short) {
        TaskArg::Short => Ok(Task::Short),
        TaskArg::Long => match tau {
            Some(t) => Ok(Task::long(t)?),
            None => usage("--tau is required for --task long"),
        },
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    match v {
        Some(v) => Ok(v),
        None => usage(format!("missing required argument --{flag}")),
    }
}

impl SimulateArgs {
    pub fn resolve(self) -> Result<SimulateConfig> {
        let f = ConfigFile::load(self.config.as_deref())?;
        let spec = TopologySpec::new(
            required(f.pick(self.nodes, "nodes")?, "nodes")?,
            required(f.pick(self.chord_length, "chord-length")?, "chord-length")?,
            required(f.pick(self.chord_step, "chord-step")?, "chord-step")?,
        );
        spec.validate()?;
        let inflow_amount = required(f.pick(self.inflow_amount, "inflow-amount")?, "inflow-amount")?;
        let outflow_rate = required(f.pick(self.outflow_rate, "outflow-rate")?, "outflow-rate")?;
        let rates = f.pick_list(self.reaction_rates, "reaction-rates")?;
        let edges = spec.edge_count();
        let reaction_rates = match rates.len() {
            0 => return usage("missing required argument --reaction-rates"),
            1 => vec![rates[0]; edges],
            n if n == edges => rates,
            n => return usage(format!("--reaction-rates has {n} values, topology has {edges} edges")),
        };
        let params = NetworkParams {
            reaction_rates,
            outflow_rate,
            input_rate_scaling: f.pick(self.input_scaling, "input-scaling")?.unwrap_or(1.0),
            reaction_rate_scaling: f.pick(self.reaction_scaling, "reaction-scaling")?.unwrap_or(1.0),
        };
        let kind = f
            .pick(self.task.map(task_str), "task")?
            .map(parse_task)
            .transpose()?;
        let task = resolve_task(kind, f.pick(self.tau, "tau")?)?;
        Ok(SimulateConfig {
            topology: spec,
            inflow_amount,
            params,
            task,
            step_size: f.pick(self.step_size, "step-size")?.unwrap_or(DEFAULT_STEP_SIZE),
            total_time: f.pick(self.total_time, "total-time")?.unwrap_or(DEFAULT_TOTAL_TIME),
            ridge_lambda: f.pick(self.ridge_lambda, "ridge-lambda")?.unwrap_or(DEFAULT_RIDGE_LAMBDA),
            master_seed: f.pick(self.seed, "seed")?.unwrap_or(DEFAULT_SEED),
        })
    }
}

fn task_str(t: TaskArg) -> String {
    match t {
        TaskArg::Short => "short".into(),
        TaskArg::Long => "long".into(),
    }
}

fn parse_task(s: String) -> Result<TaskArg> {
    match s.as_str() {
        "short" => Ok(TaskArg::Short),
        "long" => Ok(TaskArg::Long),
        other => usage(format!("unknown task `{other}` (expected short or long)")),
    }
}

impl OptimizeArgs {
    pub fn resolve(self) -> Result<OptimizeConfig> {
        let f = ConfigFile::load(self.config.as_deref())?;
        let task = f
            .pick(self.task.map(task_str), "task")?
            .map(parse_task)
            .transpose()?
            .unwrap_or(TaskArg::Short);
        let taus = f.pick_list(self.tau, "tau")?;
        let mut step_sizes = f.pick_list(self.step_size, "step-size")?;
        if step_sizes.is_empty() {
            step_sizes.push(DEFAULT_STEP_SIZE);
        }
        let task = match task {
            TaskArg::Short => {
                if !taus.is_empty() {
                    return usage("--tau only applies to --task long");
                }
                TaskKind::Short
            }
            TaskArg::Long => {
                if taus.is_empty() {
                    return usage("--tau is required for --task long");
                }
                TaskKind::Long
            }
        };
        let defaults = GaConfig::default();
        let both = f.pick(self.generations, "generations")?;
        let deterministic = f.flag(self.deterministic, "deterministic")?;
        let mut ga = GaConfig {
            outer_generations: f
                .pick(self.outer_generations, "outer-generations")?
                .or(both)
                .unwrap_or(defaults.outer_generations),
            inner_generations: f
                .pick(self.inner_generations, "inner-generations")?
                .or(both)
                .unwrap_or(defaults.inner_generations),
            outer_budget_seconds: f
                .pick(self.budget_seconds, "budget-seconds")?
                .or(defaults.outer_budget_seconds),
            inner_budget_seconds: f
                .pick(self.inner_budget_seconds, "inner-budget-seconds")?
                .or(defaults.inner_budget_seconds),
            master_seed: f.pick(self.seed, "seed")?.unwrap_or(DEFAULT_SEED),
            ..defaults
        };
        if deterministic {
            ga = ga.deterministic();
        }
        let config = OptimizeConfig {
            task,
            taus,
            step_sizes,
            total_time: f.pick(self.total_time, "total-time")?.unwrap_or(DEFAULT_TOTAL_TIME),
            ridge_lambda: f.pick(self.ridge_lambda, "ridge-lambda")?.unwrap_or(DEFAULT_RIDGE_LAMBDA),
            ga,
        };
        config.ga.validate()?;
        config.runs()?;
        Ok(config)
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(0) => usage("--jobs must be at least 1"),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(f),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let out: &Path = &cli.out;
    match cli.command {
        Command::Topology(a) => {
            let t = run_topology(TopologySpec::new(a.nodes, a.chord_length, a.chord_step), out)?;
            eprintln!(
                "wrote {} cycle edges and {} chords to {}",
                t.cycle_edges.len(),
                t.chord_edges.len(),
                out.display()
            );
        }
        Command::Simulate(a) => {
            let config = a.resolve()?;
            let m = run_simulate(&config, out)?;
            eprintln!(
                "train NRMSE {:.4}, test NRMSE {:.4} ({} events)",
                m.train_nrmse,
                m.test_nrmse,
                m.events.total()
            );
        }
        Command::Optimize(a) => {
            let jobs = a.jobs;
            let config = a.resolve()?;
            with_jobs(jobs, || run_optimize(&config, out))?;
        }
        Command::Replay(a) => {
            let manifest = read_manifest(&a.manifest)?;
            if manifest_dir_is(&a.manifest, out) {
                bail!("refusing to replay into the directory holding the manifest; pass --out");
            }
            with_jobs(a.jobs, || replay(&manifest, out))?;
        }
    }
    Ok(())
}

fn manifest_dir_is(manifest: &Path, out: &Path) -> bool {
    let dir = manifest.parent().unwrap_or(Path::new("."));
    match (dir.canonicalize(), out.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}
