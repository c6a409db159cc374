//! Discrete-event simulator and control plane for power management of
//! agentic LLM serving.
//!
//! Agents issue multi-turn LLM requests separated by tool calls, and their
//! context stays resident on a serving instance between turns. Each instance
//! picks a frequency level from its context usage, boosts to the top level
//! when an agent falls below its throughput target, and gates admissions to
//! stay out of the memory-thrashing regime. A global router consolidates
//! agents onto few instances so the rest can idle.

pub mod controller;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod instance;
pub mod metrics;
pub mod report;
pub mod router;
pub mod workload;

pub use controller::{
    admission_pass, control_epoch, running_throughput, select_frequency_level, slo_boost_check, Controller,
    ControllerConfig, ControllerDecision, ControllerKind, EpochObservation,
};
pub use engine::{
    integrate_power, run_simulation, simulate, DecisionRecord, PowerSegment, Sample, Segment, SimConfig,
    SimulationResult, TurnLog, WorkloadSource,
};
pub use error::{Error, Result};
pub use experiment::{run_sweep, write_sweep, CellSummary, ExperimentConfig, SweepAxes, SweepCell, SweepRow};
pub use instance::{
    service_time, AgentIx, AgentRuntimeState, FrequencyLevel, FrequencyTable, InstanceConfig, InstanceIx,
    InstanceState, Interference, LevelIx, ThrashMode,
};
pub use metrics::{percentile_throughput, regime_classify, slo_attainment, AgentMetrics, RegimeSpan, SystemMetrics};
pub use report::{export_report, read_summary, ReportFiles};
pub use router::{assign_agent, maybe_reassign, migrate_context, RouterConfig, RouterState, RoutingPolicy};
pub use workload::{
    generate_workload, load_trace, save_trace, AgentId, AgentTrace, ArrivalProcess, TurnRecord, WorkloadSpec,
    WorkloadStats,
};
