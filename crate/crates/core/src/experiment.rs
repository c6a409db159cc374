//! On-disk experiment configuration and parameter sweeps.
//!
//! A config is a TOML file with top-level run settings and one section per
//! component:
//!
//! ```toml
//! seed = 0
//! sim_duration = 10800.0
//! instances = 1
//!
//! [workload]
//! arrival_rate = 0.64
//!
//! [controller]
//! kind = "context-aware"
//! slo_target = 20.0
//!
//! [sweep]
//! frequency_cap_mhz = [1680, 1185, 900, 810, 660]
//! ```
//!
//! Every field has a default, so an empty file is a valid config.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerConfig, ControllerKind};
use crate::engine::{run_simulation, SimConfig, SimulationResult, WorkloadSource};
use crate::error::{Error, Result};
use crate::instance::InstanceConfig;
use crate::metrics::SystemMetrics;
use crate::router::{RouterConfig, RoutingPolicy};
use crate::workload::WorkloadSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Workload seed; takes precedence over `workload.seed`.
    pub seed: u64,
    /// Simulated window in seconds. Arrivals are generated over
    /// `workload.duration`, which may be shorter to let the system drain.
    pub sim_duration: f64,
    pub record_interval: f64,
    pub instances: usize,
    pub frequency_cap_mhz: Option<u32>,
    /// Replay this trace instead of generating `workload`.
    pub trace: Option<PathBuf>,
    pub workload: WorkloadSpec,
    pub instance: InstanceConfig,
    pub controller: ControllerConfig,
    pub router: RouterConfig,
    pub sweep: SweepAxes,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        ExperimentConfig {
            seed: sim.seed,
            sim_duration: sim.sim_duration,
            record_interval: sim.record_interval,
            instances: sim.instances,
            frequency_cap_mhz: None,
            trace: None,
            workload: WorkloadSpec::default(),
            instance: sim.instance,
            controller: sim.controller,
            router: sim.router,
            sweep: SweepAxes::default(),
        }
    }
}

/// Values to sweep. An absent axis keeps the base config's value; a present
/// axis must list at least one value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub controller: Option<Vec<ControllerKind>>,
    pub policy: Option<Vec<RoutingPolicy>>,
    pub frequency_cap_mhz: Option<Vec<u32>>,
    pub arrival_rate: Option<Vec<f64>>,
    pub slo_target: Option<Vec<f64>>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.controller.is_none()
            && self.policy.is_none()
            && self.frequency_cap_mhz.is_none()
            && self.arrival_rate.is_none()
            && self.slo_target.is_none()
    }

    fn validate(&self) -> Result<()> {
        fn check<T>(axis: &Option<Vec<T>>, name: &str) -> Result<()> {
            match axis {
                Some(v) if v.is_empty() => Err(Error::config(format!("sweep.{name}"), "axis must list at least one value")),
                _ => Ok(()),
            }
        }
        check(&self.controller, "controller")?;
        check(&self.policy, "policy")?;
        check(&self.frequency_cap_mhz, "frequency_cap_mhz")?;
        check(&self.arrival_rate, "arrival_rate")?;
        check(&self.slo_target, "slo_target")
    }

    /// Cross product of the axes in declaration order, the last axis varying
    /// fastest.
    pub fn cells(&self) -> Vec<SweepCell> {
        fn axis<T: Copy>(v: &Option<Vec<T>>) -> Vec<Option<T>> {
            match v {
                Some(v) => v.iter().copied().map(Some).collect(),
                None => vec![None],
            }
        }
        let mut cells = Vec::new();
        for controller in axis(&self.controller) {
            for policy in axis(&self.policy) {
                for frequency_cap_mhz in axis(&self.frequency_cap_mhz) {
                    for arrival_rate in axis(&self.arrival_rate) {
                        for slo_target in axis(&self.slo_target) {
                            cells.push(SweepCell {
                                index: cells.len(),
                                controller,
                                policy,
                                frequency_cap_mhz,
                                arrival_rate,
                                slo_target,
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

/// One point of a sweep; `None` fields keep the base value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub index: usize,
    pub controller: Option<ControllerKind>,
    pub policy: Option<RoutingPolicy>,
    pub frequency_cap_mhz: Option<u32>,
    pub arrival_rate: Option<f64>,
    pub slo_target: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        // Relative trace paths are relative to the config file.
        if let (Some(trace), Some(dir)) = (&config.trace, path.parent()) {
            if trace.is_relative() {
                config.trace = Some(dir.join(trace));
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Checks every invariant of the base run and of each sweep cell, and
    /// that a referenced trace file exists.
    pub fn validate(&self) -> Result<()> {
        self.validate_base()?;
        for cell in self.sweep.cells() {
            self.cell_config(&cell).validate()?;
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate) but leaves individual sweep cells
    /// unchecked, so a bad cell fails on its own row.
    pub fn validate_base(&self) -> Result<()> {
        if let Some(trace) = &self.trace {
            if !trace.is_file() {
                return Err(Error::config("trace", format!("file not found: {}", trace.display())));
            }
            if self.sweep.arrival_rate.is_some() {
                return Err(Error::config("sweep.arrival_rate", "cannot sweep the arrival rate of a replayed trace"));
            }
        }
        self.sweep.validate()?;
        self.sim_config().validate()
    }

    pub fn sim_config(&self) -> SimConfig {
        let workload = match &self.trace {
            Some(path) => WorkloadSource::Trace(path.clone()),
            None => WorkloadSource::Generate(WorkloadSpec {
                seed: self.seed,
                ..self.workload.clone()
            }),
        };
        SimConfig {
            workload,
            instances: self.instances,
            instance: self.instance.clone(),
            controller: self.controller.clone(),
            router: self.router.clone(),
            frequency_cap_mhz: self.frequency_cap_mhz,
            sim_duration: self.sim_duration,
            seed: self.seed,
            record_interval: self.record_interval,
        }
    }

    pub fn cell_config(&self, cell: &SweepCell) -> SimConfig {
        let mut exp = self.clone();
        if let Some(kind) = cell.controller {
            exp.controller.kind = kind;
        }
        if let Some(policy) = cell.policy {
            exp.router.policy = policy;
        }
        if let Some(cap) = cell.frequency_cap_mhz {
            exp.frequency_cap_mhz = Some(cap);
        }
        if let Some(rate) = cell.arrival_rate {
            exp.workload.arrival_rate = rate;
        }
        if let Some(tau) = cell.slo_target {
            exp.controller.slo_target = tau;
        }
        exp.sim_config()
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Outcome of one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub outcome: std::result::Result<CellSummary, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSummary {
    pub arrived: usize,
    pub completed: usize,
    pub final_pending_depth: usize,
    pub system: SystemMetrics,
}

impl CellSummary {
    pub fn of(result: &SimulationResult) -> Self {
        CellSummary {
            arrived: result.arrived(),
            completed: result.completed(),
            final_pending_depth: result.final_pending_depth(),
            system: result.system,
        }
    }
}

/// Runs every cell of the sweep on up to `jobs` threads. Rows come back in
/// cell order regardless of scheduling; a failing cell records its error and
/// the sweep continues.
pub fn run_sweep(config: &ExperimentConfig, jobs: usize) -> Result<Vec<SweepRow>> {
    if config.sweep.is_empty() {
        return Err(Error::config("sweep", "no sweep axes given"));
    }
    config.sweep.validate()?;
    let cells = config.sweep.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Logic(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        cells
            .par_iter()
            .map(|cell| SweepRow {
                cell: *cell,
                outcome: run_simulation(&config.cell_config(cell))
                    .map(|r| CellSummary::of(&r))
                    .map_err(|e| e.to_string()),
            })
            .collect()
    }))
}

/// Flat CSV form of a [`SweepRow`].
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct SweepRecord {
    pub cell: usize,
    pub controller: Option<ControllerKind>,
    pub policy: Option<RoutingPolicy>,
    pub frequency_cap_mhz: Option<u32>,
    pub arrival_rate: Option<f64>,
    pub slo_target: Option<f64>,
    pub arrived: Option<usize>,
    pub completed: Option<usize>,
    pub final_pending_depth: Option<usize>,
    pub slo_attainment: Option<f64>,
    pub p5_throughput: Option<f64>,
    pub job_throughput: Option<f64>,
    pub average_power: Option<f64>,
    pub energy: Option<f64>,
    pub thrash_fraction: Option<f64>,
    pub error: Option<String>,
}

impl From<&SweepRow> for SweepRecord {
    fn from(row: &SweepRow) -> Self {
        let c = row.cell;
        let mut rec = SweepRecord {
            cell: c.index,
            controller: c.controller,
            policy: c.policy,
            frequency_cap_mhz: c.frequency_cap_mhz,
            arrival_rate: c.arrival_rate,
            slo_target: c.slo_target,
            ..Default::default()
        };
        match &row.outcome {
            Ok(s) => {
                rec.arrived = Some(s.arrived);
                rec.completed = Some(s.completed);
                rec.final_pending_depth = Some(s.final_pending_depth);
                rec.slo_attainment = s.system.slo_attainment;
                rec.p5_throughput = s.system.p5_throughput;
                rec.job_throughput = Some(s.system.job_throughput);
                rec.average_power = Some(s.system.average_power);
                rec.energy = Some(s.system.energy);
                rec.thrash_fraction = Some(s.system.thrash_fraction);
            }
            Err(e) => rec.error = Some(e.clone()),
        }
        rec
    }
}

pub fn write_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    for row in rows {
        w.serialize(SweepRecord::from(row))
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
