use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::evolver::{
    run_outer_ga, run_pipeline, write_inner_logs, write_outer_log, GaConfig, OuterResult,
    ParamsGenome, PipelineObjective, TopologyGenome,
};
use crate::readout::ReadoutModel;
use crate::seeding::{derive_seed, Purpose};
use crate::ssa::{EventStats, NetworkParams};
use crate::tasks::Task;
use crate::topology::{build_topology, export_dot, Topology, TopologySpec};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub topology: TopologySpec,
    pub inflow_amount: f64,
    pub params: NetworkParams,
    pub task: Task,
    pub step_size: u32,
    pub total_time: u32,
    pub ridge_lambda: f64,
    pub master_seed: u64,
}

impl SimulateConfig {
    pub fn signal_seed(&self) -> u64 {
        derive_seed(self.master_seed, Purpose::Signal, &[])
    }

    pub fn ssa_seed(&self) -> u64 {
        derive_seed(self.master_seed, Purpose::Ssa, &[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Short,
    Long,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub task: TaskKind,
    /// Long task only; one full optimisation per tau.
    pub taus: Vec<u32>,
    /// One full optimisation per step size.
    pub step_sizes: Vec<u32>,
    pub total_time: u32,
    pub ridge_lambda: f64,
    pub ga: GaConfig,
}

impl OptimizeConfig {
    /// `(label, task, step_size)` for every configuration in the sweep.
    pub fn runs(&self) -> Result<Vec<(String, Task, u32)>> {
        let mut out = Vec::new();
        for &step in &self.step_sizes {
            match self.task {
                TaskKind::Short => out.push((format!("short_step{step}"), Task::Short, step)),
                TaskKind::Long => {
                    for &tau in &self.taus {
                        out.push((format!("long_tau{tau}_step{step}"), Task::long(tau)?, step));
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Manifest {
    Topology {
        spec: TopologySpec,
    },
    Simulate {
        config: SimulateConfig,
        signal_seed: u64,
        ssa_seed: u64,
    },
    Optimize {
        config: OptimizeConfig,
    },
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn with_csv(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> csv::Result<()>) -> Result<()> {
    let mut w = create(dir, name)?;
    f(&mut w).with_context(|| format!("writing {name}"))?;
    w.flush()?;
    Ok(())
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

pub fn run_topology(spec: TopologySpec, out: &Path) -> Result<Topology> {
    let topology = build_topology(spec)?;
    prepare(out)?;
    write_text(out, "topology.dot", &export_dot(&topology))?;
    write_json(out, "topology.json", &topology)?;
    write_json(out, MANIFEST_FILE, &Manifest::Topology { spec })?;
    Ok(topology)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub train_nrmse: f64,
    pub test_nrmse: f64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub washout: usize,
    pub features: usize,
    pub events: EventStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    #[serde(flatten)]
    pub model: ReadoutModel,
    pub train_nrmse: f64,
    pub test_nrmse: f64,
}

pub fn run_simulate(config: &SimulateConfig, out: &Path) -> Result<Metrics> {
    let objective = PipelineObjective {
        task: config.task,
        step_size: config.step_size,
        total_time: config.total_time,
        ridge_lambda: config.ridge_lambda,
        signal_seed: config.signal_seed(),
    };
    let run = run_pipeline(
        &objective,
        config.topology,
        config.inflow_amount,
        &config.params,
        config.ssa_seed(),
    )?;
    prepare(out)?;
    write_json(
        out,
        MANIFEST_FILE,
        &Manifest::Simulate {
            config: config.clone(),
            signal_seed: config.signal_seed(),
            ssa_seed: config.ssa_seed(),
        },
    )?;
    with_csv(out, "signal.csv", |w| run.signal.write_csv(w))?;
    with_csv(out, "trajectory.csv", |w| run.trajectory.write_csv(w))?;
    with_csv(out, "targets.csv", |w| run.targets.write_csv(w))?;
    with_csv(out, "dataset.csv", |w| run.dataset.write_csv(w))?;
    with_csv(out, "predictions.csv", |w| run.predictions.write_csv(w))?;
    write_json(
        out,
        "model.json",
        &ModelExport {
            model: run.report.model.clone(),
            train_nrmse: run.report.train_nrmse,
            test_nrmse: run.report.test_nrmse,
        },
    )?;
    let metrics = Metrics {
        train_nrmse: run.report.train_nrmse,
        test_nrmse: run.report.test_nrmse,
        train_rows: run.report.train_rows,
        test_rows: run.report.test_rows,
        washout: run.dataset.washout,
        features: run.dataset.features.ncols(),
        events: run.trajectory.stats.clone(),
    };
    write_json(out, "metrics.json", &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestGenome {
    pub label: String,
    pub task: Task,
    pub step_size: u32,
    /// `inf` is written as `null`.
    pub nrmse: Option<f64>,
    pub topology: TopologyGenome,
    pub params: ParamsGenome,
    pub outer_origin: (usize, usize),
    pub outer_generation_min: Vec<Option<f64>>,
    pub stopped_by_budget: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    pub task: Task,
    pub step_size: u32,
    pub result: OuterResult,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn fmt_nrmse(x: f64) -> String {
    finite(x).map_or_else(|| "inf".to_string(), |v| v.to_string())
}

fn write_optimization(dir: &Path, row: &SweepRow) -> Result<()> {
    prepare(dir)?;
    let r = &row.result;
    with_csv(dir, "outer_log.csv", |w| write_outer_log(&r.log, w))?;
    with_csv(dir, "inner_log.csv", |w| write_inner_logs(&r.inner_runs, w))?;
    with_csv(dir, "outer_generation_min.csv", |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["generation", "min_nrmse"])?;
        for (g, m) in r.generation_min.iter().enumerate() {
            wr.write_record([g.to_string(), fmt_nrmse(*m)])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    let best_inner = r
        .inner_runs
        .iter()
        .find(|run| (run.outer_generation, run.outer_index) == r.best_origin);
    with_csv(dir, "best_inner_generation_min.csv", |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["generation", "min_nrmse"])?;
        for (g, m) in best_inner
            .map(|b| b.result.generation_min.as_slice())
            .unwrap_or(&[])
            .iter()
            .enumerate()
        {
            wr.write_record([g.to_string(), fmt_nrmse(*m)])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    write_json(
        dir,
        "best.json",
        &BestGenome {
            label: row.label.clone(),
            task: row.task,
            step_size: row.step_size,
            nrmse: finite(r.best_fitness),
            topology: r.best_topology,
            params: r.best_params.clone(),
            outer_origin: r.best_origin,
            outer_generation_min: r.generation_min.iter().map(|&m| finite(m)).collect(),
            stopped_by_budget: r.stopped_by_budget,
        },
    )?;
    Ok(())
}

/// Runs the two-level search for every configuration of the sweep and
/// writes per-configuration logs plus `summary.csv`.
pub fn run_optimize(config: &OptimizeConfig, out: &Path) -> Result<Vec<SweepRow>> {
    config.ga.validate()?;
    let runs = config.runs()?;
    prepare(out)?;
    write_json(
        out,
        MANIFEST_FILE,
        &Manifest::Optimize {
            config: config.clone(),
        },
    )?;
    let mut rows = Vec::new();
    for (label, task, step_size) in runs {
        let objective = PipelineObjective::new(
            task,
            step_size,
            config.total_time,
            config.ridge_lambda,
            config.ga.master_seed,
        );
        let result = run_outer_ga(&objective, &config.ga);
        let row = SweepRow {
            label: label.clone(),
            task,
            step_size,
            result,
        };
        write_optimization(&out.join(&label), &row)?;
        eprintln!("{label}: best test NRMSE {}", fmt_nrmse(row.result.best_fitness));
        rows.push(row);
    }
    with_csv(out, "summary.csv", |w| {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "label",
            "task",
            "tau",
            "step_size",
            "nrmse",
            "num_nodes",
            "inflow_amount",
            "chord_length",
            "chord_step",
            "outer_generations",
        ])?;
        for row in &rows {
            let tau = match row.task {
                Task::Short => String::new(),
                Task::Long { tau } => tau.to_string(),
            };
            let kind = match row.task {
                Task::Short => "short",
                Task::Long { .. } => "long",
            };
            let g = row.result.best_topology.genes();
            wr.write_record([
                row.label.clone(),
                kind.to_string(),
                tau,
                row.step_size.to_string(),
                fmt_nrmse(row.result.best_fitness),
                g[0].to_string(),
                g[1].to_string(),
                g[2].to_string(),
                g[3].to_string(),
                (row.result.generation_min.len() - 1).to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    })?;
    Ok(rows)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn replay(manifest: &Manifest, out: &Path) -> Result<()> {
    match manifest {
        Manifest::Topology { spec } => run_topology(*spec, out).map(|_| ()),
        Manifest::Simulate { config, .. } => run_simulate(config, out).map(|_| ()),
        Manifest::Optimize { config } => run_optimize(config, out).map(|_| ()),
    }
}
