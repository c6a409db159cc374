use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ctxsim_core::{
    export_report, generate_workload, run_simulation, run_sweep, save_trace, write_sweep, ControllerKind, Error,
    ExperimentConfig, RoutingPolicy, SystemMetrics, WorkloadSource, WorkloadStats,
};

const EXIT_VALIDATION: u8 = 2;
const EXIT_PARTIAL_SWEEP: u8 = 3;

/// Simulator for power management of agentic LLM serving.
#[derive(Parser)]
#[command(name = "ctxsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic workload trace.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Output trace file (JSON lines).
        #[arg(long, default_value = "trace.jsonl")]
        out: PathBuf,
    },
    /// Run one simulation and write its report.
    Run {
        #[command(flatten)]
        common: Common,
        /// Report directory.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Run every cell of the config's sweep axes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Output directory for the sweep table.
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
        /// Maximum simulations run in parallel.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Check a config without running it.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Routing policy across instances.
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    #[arg(long, value_enum)]
    controller: Option<ControllerArg>,
    /// Frequency pinned by the fixed controller.
    #[arg(long)]
    level_mhz: Option<u32>,
    /// Remove frequency levels above this value.
    #[arg(long)]
    cap_mhz: Option<u32>,
    /// Per-agent throughput target (tokens/s).
    #[arg(long)]
    slo: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Controller epoch length in seconds.
    #[arg(long)]
    epoch: Option<f64>,
    #[arg(long)]
    instances: Option<usize>,
    /// Agent arrivals per second.
    #[arg(long)]
    rate: Option<f64>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Keep the frequency policy but admit agents without limit.
    #[arg(long)]
    no_thrash_avoidance: bool,
    /// Disable the SLO boost.
    #[arg(long)]
    no_boost: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Off,
    Fixed,
    ContextAware,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    ContextAware,
    RoundRobin,
    LeastLoaded,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path).map_err(Failure::from)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(p) = self.policy {
            c.router.policy = match p {
                PolicyArg::ContextAware => RoutingPolicy::ContextAware,
                PolicyArg::RoundRobin => RoutingPolicy::RoundRobin,
                PolicyArg::LeastLoaded => RoutingPolicy::LeastLoaded,
            };
        }
        if let Some(k) = self.controller {
            c.controller.kind = match k {
                ControllerArg::Off => ControllerKind::Off,
                ControllerArg::Fixed => ControllerKind::Fixed,
                ControllerArg::ContextAware => ControllerKind::ContextAware,
            };
        }
        if let Some(mhz) = self.level_mhz {
            c.controller.level_mhz = Some(mhz);
        }
        if let Some(mhz) = self.cap_mhz {
            c.frequency_cap_mhz = Some(mhz);
        }
        if let Some(v) = self.slo {
            c.controller.slo_target = v;
        }
        if let Some(v) = self.alpha {
            c.controller.alpha = v;
        }
        if let Some(v) = self.beta {
            c.controller.beta = v;
        }
        if let Some(v) = self.gamma {
            c.controller.gamma = v;
        }
        if let Some(v) = self.epoch {
            c.controller.epoch_length = v;
        }
        if let Some(v) = self.instances {
            c.instances = v;
        }
        if let Some(v) = self.rate {
            c.workload.arrival_rate = v;
        }
        if let Some(v) = self.duration {
            c.sim_duration = v;
            c.workload.duration = v;
        }
        if self.no_thrash_avoidance {
            c.controller.thrash_avoidance = false;
        }
        if self.no_boost {
            c.controller.boost = false;
        }
        Ok(c)
    }
}

/// An error paired with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config { .. } | Error::Parse { .. } | Error::Validation(_) => EXIT_VALIDATION,
            _ => 1,
        };
        Failure { code, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen { common, out } => cmd_gen(&common, &out),
        Command::Run { common, out } => cmd_run(&common, &out),
        Command::Sweep { common, out, jobs } => cmd_sweep(&common, &out, jobs),
        Command::Validate { common } => cmd_validate(&common),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn validated(common: &Common) -> Result<ExperimentConfig, Failure> {
    let config = common.load()?;
    config.validate()?;
    Ok(config)
}

fn echo_config(config: &ExperimentConfig, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("config.toml");
    fs::write(&path, config.to_toml()).with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen(common: &Common, out: &Path) -> Result<u8, Failure> {
    let config = validated(common)?;
    let sim = config.sim_config();
    let WorkloadSource::Generate(spec) = &sim.workload else {
        return Err(Failure {
            code: EXIT_VALIDATION,
            error: anyhow::anyhow!("gen needs a generated workload, but the config replays a trace"),
        });
    };
    let agents = generate_workload(spec)?;
    save_trace(&agents, out)?;
    let s = WorkloadStats::of(&agents);
    println!(
        "wrote {} agents to {}: mean turns {:.1}, median {}, max {}, mean final context {:.0} tokens",
        s.agents,
        out.display(),
        s.mean_turns,
        s.median_turns,
        s.max_turns,
        s.mean_final_context
    );
    Ok(0)
}

fn fmt_opt(v: Option<f64>, precision: usize) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.precision$}"))
}

fn summary_line(m: &SystemMetrics) -> String {
    format!(
        "slo_attainment={} p5_throughput={} job_throughput={:.4} average_power={:.1} energy={:.0} thrash_fraction={:.4}",
        fmt_opt(m.slo_attainment, 4),
        fmt_opt(m.p5_throughput, 2),
        m.job_throughput,
        m.average_power,
        m.energy,
        m.thrash_fraction
    )
}

fn cmd_run(common: &Common, out: &Path) -> Result<u8, Failure> {
    let config = validated(common)?;
    let result = run_simulation(&config.sim_config())?;
    echo_config(&config, out)?;
    export_report(&result, out)?;
    println!(
        "arrived={} completed={} {}",
        result.arrived(),
        result.completed(),
        summary_line(&result.system)
    );
    Ok(0)
}

fn cmd_sweep(common: &Common, out: &Path, jobs: usize) -> Result<u8, Failure> {
    let config = common.load()?;
    config.validate_base()?;
    let rows = run_sweep(&config, jobs)?;
    echo_config(&config, out)?;
    let path = out.join("sweep.csv");
    write_sweep(&rows, &path)?;
    let mut failed = 0;
    for row in &rows {
        match &row.outcome {
            Ok(s) => println!("cell {}: {}", row.cell.index, summary_line(&s.system)),
            Err(e) => {
                failed += 1;
                println!("cell {}: failed: {e}", row.cell.index);
            }
        }
    }
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(if failed > 0 { EXIT_PARTIAL_SWEEP } else { 0 })
}

fn cmd_validate(common: &Common) -> Result<u8, Failure> {
    validated(common)?;
    println!("config is valid");
    Ok(0)
}
