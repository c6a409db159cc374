//! Per-instance control loop: context-aware frequency selection, SLO
//! boosting, and two-threshold admission control.
//!
//! Every function here is a pure decision over a snapshot; the engine owns
//! the state and applies the returned [`ControllerDecision`] at the epoch
//! boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{AgentIx, AgentRuntimeState, FrequencyTable, LevelIx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    /// Top frequency, unbounded admission.
    Off,
    /// Pinned frequency, unbounded admission.
    Fixed,
    ContextAware,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    /// Frequency used by the `fixed` controller.
    pub level_mhz: Option<u32>,
    /// Usage fraction at or above which the top level is forced.
    pub alpha: f64,
    /// Admission hard cap as a fraction of capacity.
    pub beta: f64,
    /// Admission resume threshold; must be below `beta`.
    pub gamma: f64,
    /// Per-agent decode throughput target, tokens/s.
    pub slo_target: f64,
    /// Seconds between control decisions.
    pub epoch_length: f64,
    pub boost: bool,
    pub thrash_avoidance: bool,
    /// Accepted for completeness; no decision reads it.
    pub power_budget: Option<f64>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            kind: ControllerKind::ContextAware,
            level_mhz: None,
            alpha: 0.75,
            beta: 0.95,
            gamma: 0.90,
            slo_target: 20.0,
            epoch_length: 1.0,
            boost: true,
            thrash_avoidance: true,
            power_budget: None,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("alpha", "must be in (0, 1]"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::config("beta", "must be in (0, 1)"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("gamma", "must be in (0, 1)"));
        }
        if self.gamma >= self.beta {
            return Err(Error::config("gamma", "invariant gamma < beta violated"));
        }
        if !(self.slo_target.is_finite() && self.slo_target > 0.0) {
            return Err(Error::config("slo_target", "must be > 0"));
        }
        if !(self.epoch_length.is_finite() && self.epoch_length > 0.0) {
            return Err(Error::config("epoch_length", "must be > 0"));
        }
        if self.kind == ControllerKind::Fixed && self.level_mhz.is_none() {
            return Err(Error::config("level_mhz", "required by the fixed controller"));
        }
        Ok(())
    }
}

/// Context-aware level: the top level once usage reaches `alpha * capacity`,
/// otherwise the safe region `[0, alpha * capacity)` is split linearly over
/// the remaining levels. Returns a zero-based index.
pub fn select_frequency_level(usage: u64, capacity: u64, num_levels: usize, alpha: f64) -> LevelIx {
    let top = num_levels.saturating_sub(1);
    let threshold = alpha * capacity as f64;
    let u = usage as f64;
    if u >= threshold {
        return LevelIx(top);
    }
    // Dividing the scaled numerator keeps the floor exact for integer usage.
    let step = (u * top as f64 / threshold).floor() as usize;
    LevelIx(step.min(top))
}

/// Decode tokens per second of LLM time over the agent's completed steps,
/// or `None` before the first step completes.
pub fn running_throughput(agent: &AgentRuntimeState) -> Option<f64> {
    throughput_of(agent.decode_tokens_total, agent.llm_time_total)
}

pub(crate) fn throughput_of(decode_tokens: u64, llm_time: f64) -> Option<f64> {
    (llm_time > 0.0).then(|| decode_tokens as f64 / llm_time)
}

/// Minimum over the agents that have data; `None` if none do.
pub fn min_throughput<I: IntoIterator<Item = Option<f64>>>(throughputs: I) -> Option<f64> {
    throughputs.into_iter().flatten().reduce(f64::min)
}

/// True iff some agent with data runs below `tau`.
pub fn slo_boost_check<I: IntoIterator<Item = Option<f64>>>(throughputs: I, tau: f64) -> bool {
    min_throughput(throughputs).is_some_and(|m| m < tau)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionOutcome {
    pub admitted: Vec<AgentIx>,
    pub usage_after: u64,
    /// Usage is above the hard cap; new arrivals stay pending.
    pub deferred: bool,
}

/// Admits pending agents in queue order while usage stays below
/// `gamma * capacity`, charging each agent's resumed context.
pub fn admission_pass(usage: u64, pending: &[(AgentIx, u64)], beta: f64, gamma: f64, capacity: u64) -> AdmissionOutcome {
    let resume = gamma * capacity as f64;
    let mut usage = usage;
    let mut admitted = Vec::new();
    for &(agent, context) in pending {
        if usage as f64 >= resume {
            break;
        }
        admitted.push(agent);
        usage += context;
    }
    AdmissionOutcome {
        admitted,
        usage_after: usage,
        deferred: usage as f64 > beta * capacity as f64,
    }
}

/// What the controller sees at an epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochObservation {
    pub usage: u64,
    pub capacity: u64,
    /// Running throughput of every ongoing and pending agent.
    pub throughputs: Vec<Option<f64>>,
    /// Pending queue in arrival order with each agent's resumed context.
    pub pending: Vec<(AgentIx, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerDecision {
    pub frequency_level: LevelIx,
    /// Level the context-aware policy picked before any boost.
    pub context_level: LevelIx,
    pub admitted: Vec<AgentIx>,
    pub deferred: bool,
    pub boosted: bool,
    pub min_throughput: Option<f64>,
}

/// One iteration of the context-aware control loop: pick the level from
/// usage, boost to the top level on an SLO miss, then run admission.
pub fn control_epoch(obs: &EpochObservation, num_levels: usize, config: &ControllerConfig) -> ControllerDecision {
    let top = LevelIx(num_levels - 1);
    let context_level = select_frequency_level(obs.usage, obs.capacity, num_levels, config.alpha);
    let min_tp = min_throughput(obs.throughputs.iter().copied());
    let boosted = config.boost && min_tp.is_some_and(|m| m < config.slo_target);
    let frequency_level = if boosted { top } else { context_level };

    let (admitted, deferred) = if config.thrash_avoidance {
        let out = admission_pass(obs.usage, &obs.pending, config.beta, config.gamma, obs.capacity);
        (out.admitted, out.deferred)
    } else {
        (obs.pending.iter().map(|&(a, _)| a).collect(), false)
    };

    ControllerDecision {
        frequency_level,
        context_level,
        admitted,
        deferred,
        boosted,
        min_throughput: min_tp,
    }
}

/// A controller bound to a concrete frequency table.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    config: ControllerConfig,
    num_levels: usize,
    pinned: Option<LevelIx>,
}

impl Controller {
    pub fn new(config: &ControllerConfig, table: &FrequencyTable) -> Result<Self> {
        config.validate()?;
        let pinned = match config.kind {
            ControllerKind::Off => Some(table.top()),
            ControllerKind::Fixed => {
                let mhz = config.level_mhz.expect("validated");
                // Under a frequency cap the pin falls back to the highest allowed level.
                let ix = table
                    .index_of_mhz(mhz)
                    .or_else(|| (mhz > table.level(table.top()).nominal_mhz).then(|| table.top()))
                    .ok_or_else(|| Error::config("level_mhz", format!("{mhz} MHz is not a level of the frequency table")))?;
                Some(ix)
            }
            ControllerKind::ContextAware => None,
        };
        Ok(Controller {
            config: config.clone(),
            num_levels: table.len(),
            pinned,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    /// Level in force before the first epoch.
    pub fn initial_level(&self) -> LevelIx {
        self.pinned.unwrap_or(LevelIx(self.num_levels - 1))
    }

    /// Whether agents are admitted the moment they reach an instance rather
    /// than at the next epoch.
    pub fn admits_immediately(&self) -> bool {
        self.pinned.is_some() || !self.config.thrash_avoidance
    }

    pub fn decide(&self, obs: &EpochObservation) -> ControllerDecision {
        match self.pinned {
            Some(level) => ControllerDecision {
                frequency_level: level,
                context_level: level,
                admitted: obs.pending.iter().map(|&(a, _)| a).collect(),
                deferred: false,
                boosted: false,
                min_throughput: min_throughput(obs.throughputs.iter().copied()),
            },
            None => control_epoch(obs, self.num_levels, &self.config),
        }
    }
}
