//! Global router: consolidation-first placement of new agents and
//! periodic ratio-triggered reassignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{AgentRuntimeState, InstanceIx, InstanceState, Residency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingPolicy {
    ContextAware,
    RoundRobin,
    LeastLoaded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterConfig {
    pub policy: RoutingPolicy,
    /// Instances below this fraction of capacity are filled lowest-index first.
    pub consolidation_threshold: f64,
    /// Requests an agent issues between reassignment checks.
    pub reassign_interval: u32,
    /// Reassign when the current instance's usage is at least this multiple
    /// of the least-loaded instance's.
    pub imbalance_ratio: f64,
    /// Seconds added before a migrated agent's next request may start.
    pub migration_delay: f64,
    /// Reset the step counter only when a reassignment happens, instead of
    /// after every executed check.
    pub reset_counter_only_on_reassign: bool,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            policy: RoutingPolicy::ContextAware,
            consolidation_threshold: 0.5,
            reassign_interval: 8,
            imbalance_ratio: 2.0,
            migration_delay: 0.0,
            reset_counter_only_on_reassign: false,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.consolidation_threshold > 0.0 && self.consolidation_threshold < 1.0) {
            return Err(Error::config("consolidation_threshold", "must be in (0, 1)"));
        }
        if self.reassign_interval < 1 {
            return Err(Error::config("reassign_interval", "must be >= 1"));
        }
        if !(self.imbalance_ratio.is_finite() && self.imbalance_ratio > 1.0) {
            return Err(Error::config("imbalance_ratio", "must be > 1"));
        }
        if !(self.migration_delay.is_finite() && self.migration_delay >= 0.0) {
            return Err(Error::config("migration_delay", "must be >= 0"));
        }
        Ok(())
    }
}

/// Lowest index among the minimum-usage instances.
pub fn least_loaded(usages: &[u64]) -> Option<InstanceIx> {
    usages
        .iter()
        .enumerate()
        .min_by_key(|&(i, &u)| (u, i))
        .map(|(i, _)| InstanceIx(i))
}

/// Consolidation-first placement: the lowest-index instance below
/// `consolidation_threshold * capacity`, else the least-loaded one.
pub fn assign_agent(usages: &[u64], capacity: u64, config: &RouterConfig) -> Result<InstanceIx> {
    let light = config.consolidation_threshold * capacity as f64;
    if let Some(i) = usages.iter().position(|&u| (u as f64) < light) {
        return Ok(InstanceIx(i));
    }
    least_loaded(usages).ok_or_else(|| Error::config("instances", "no serving instances registered"))
}

/// Counts one issued request and, every `reassign_interval` requests,
/// checks whether the agent should move to the least-loaded instance.
/// Updates the agent's placement and counter; returns the new instance
/// when a move is due.
pub fn maybe_reassign(agent: &mut AgentRuntimeState, usages: &[u64], config: &RouterConfig) -> Option<InstanceIx> {
    agent.steps_since_assignment += 1;
    if agent.steps_since_assignment < config.reassign_interval {
        return None;
    }
    let current = agent.instance;
    let target = least_loaded(usages)?;
    let moved = target != current
        && usages[current.0] as f64 >= config.imbalance_ratio * usages[target.0] as f64;
    if moved {
        agent.instance = target;
    }
    if moved || !config.reset_counter_only_on_reassign {
        agent.steps_since_assignment = 0;
    }
    moved.then_some(target)
}

/// Moves an agent's context from one instance to another. It leaves
/// `from` entirely and joins `to`'s pending queue carrying its full context.
pub fn migrate_context(agent: &mut AgentRuntimeState, from: &mut InstanceState, to: &mut InstanceState) -> Result<Residency> {
    if from.id == to.id {
        return Err(Error::Logic(format!(
            "agent {} cannot migrate to its own instance {}",
            agent.ix.0, from.id
        )));
    }
    let was = from.remove_agent(agent.ix)?;
    to.enqueue_pending(agent.ix)?;
    agent.instance = to.id;
    Ok(was)
}

/// Router bookkeeping owned by the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterState {
    config: RouterConfig,
    num_instances: usize,
    rr_cursor: usize,
}

impl RouterState {
    pub fn new(config: RouterConfig, num_instances: usize) -> Result<Self> {
        config.validate()?;
        if num_instances == 0 {
            return Err(Error::config("instances", "must be >= 1"));
        }
        Ok(RouterState {
            config,
            num_instances,
            rr_cursor: 0,
        })
    }

    pub fn config(&self) -> &RouterConfig {
        &self.config
    }

    /// Next instance in cyclic order.
    pub fn route_round_robin(&mut self) -> InstanceIx {
        let i = self.rr_cursor;
        self.rr_cursor = (self.rr_cursor + 1) % self.num_instances;
        InstanceIx(i)
    }

    /// Places a newly arrived agent per the configured policy and resets
    /// its step counter.
    pub fn route_new_agent(&mut self, agent: &mut AgentRuntimeState, usages: &[u64], capacity: u64) -> Result<InstanceIx> {
        let target = match self.config.policy {
            RoutingPolicy::ContextAware => assign_agent(usages, capacity, &self.config)?,
            RoutingPolicy::RoundRobin => self.route_round_robin(),
            RoutingPolicy::LeastLoaded => {
                least_loaded(usages).ok_or_else(|| Error::config("instances", "no serving instances registered"))?
            }
        };
        agent.instance = target;
        agent.steps_since_assignment = 0;
        Ok(target)
    }

    /// Reassignment hook for a request issue; only the context-aware
    /// policy reassigns.
    pub fn on_request(&self, agent: &mut AgentRuntimeState, usages: &[u64]) -> Option<InstanceIx> {
        match self.config.policy {
            RoutingPolicy::ContextAware => maybe_reassign(agent, usages, &self.config),
            _ => None,
        }
    }
}
