//! Scenario builders shared by the benchmarks.

use ctxsim_core::{AgentTrace, SimConfig, WorkloadSource, WorkloadSpec};

/// One instance under the default calibration for `duration` seconds.
pub fn single_instance(duration: f64) -> SimConfig {
    SimConfig {
        workload: WorkloadSource::Generate(WorkloadSpec {
            duration,
            ..WorkloadSpec::default()
        }),
        sim_duration: duration,
        ..SimConfig::default()
    }
}

/// `instances` instances sharing `rate` agents per second.
pub fn cluster(instances: usize, rate: f64, duration: f64) -> SimConfig {
    SimConfig {
        workload: WorkloadSource::Generate(WorkloadSpec {
            arrival_rate: rate,
            duration,
            ..WorkloadSpec::default()
        }),
        instances,
        sim_duration: duration,
        ..SimConfig::default()
    }
}

pub fn agents(config: &SimConfig) -> Vec<AgentTrace> {
    config.load_agents().expect("bench scenario is valid")
}
