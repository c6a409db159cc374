//! Single serving instance: DVFS operating points, service-time model,
//! context-cache accounting and power draw.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::TurnRecord;

/// Dense index of an agent inside one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentIx(pub usize);

/// Zero-based instance index. Lower indices are filled first by the
/// consolidating router.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceIx(pub usize);

impl fmt::Display for InstanceIx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Zero-based index into a [`FrequencyTable`]; 0 is the lowest frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LevelIx(pub usize);

/// One DVFS operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyLevel {
    pub nominal_mhz: u32,
    /// Prefill tokens/s for a single request at this level.
    pub prefill_rate: f64,
    /// Decode tokens/s for a single request at this level.
    pub decode_rate: f64,
    /// Watts while any request executes.
    pub active_power: f64,
    /// Watts while nothing executes.
    pub idle_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrequencyTable {
    levels: Vec<FrequencyLevel>,
}

impl FrequencyTable {
    pub fn new(levels: Vec<FrequencyLevel>) -> Self {
        FrequencyTable { levels }
    }

    /// Builds a table whose token rates scale as `(mhz / top_mhz)^exponent`
    /// and whose active power is linear in frequency between
    /// `min_active_power` (lowest level) and `max_active_power` (highest).
    #[allow(clippy::too_many_arguments)]
    pub fn scaled(
        mhz: &[u32],
        top_prefill_rate: f64,
        top_decode_rate: f64,
        exponent: f64,
        min_active_power: f64,
        max_active_power: f64,
        idle_power: f64,
    ) -> Self {
        let lo = *mhz.first().expect("at least one level") as f64;
        let hi = *mhz.last().expect("at least one level") as f64;
        let levels = mhz
            .iter()
            .map(|&f| {
                let f = f as f64;
                let speed = (f / hi).powf(exponent);
                let frac = if hi > lo { (f - lo) / (hi - lo) } else { 1.0 };
                FrequencyLevel {
                    nominal_mhz: f as u32,
                    prefill_rate: top_prefill_rate * speed,
                    decode_rate: top_decode_rate * speed,
                    active_power: min_active_power + frac * (max_active_power - min_active_power),
                    idle_power,
                }
            })
            .collect();
        FrequencyTable { levels }
    }

    pub fn levels(&self) -> &[FrequencyLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn top(&self) -> LevelIx {
        LevelIx(self.levels.len() - 1)
    }

    pub fn level(&self, ix: LevelIx) -> &FrequencyLevel {
        &self.levels[ix.0]
    }

    pub fn index_of_mhz(&self, mhz: u32) -> Option<LevelIx> {
        self.levels.iter().position(|l| l.nominal_mhz == mhz).map(LevelIx)
    }

    /// Drops every level above `max_mhz`.
    pub fn capped(&self, max_mhz: u32) -> Result<FrequencyTable> {
        let levels: Vec<_> = self.levels.iter().filter(|l| l.nominal_mhz <= max_mhz).cloned().collect();
        if levels.is_empty() {
            return Err(Error::config(
                "frequency_cap_mhz",
                format!("{max_mhz} MHz is below the lowest level"),
            ));
        }
        Ok(FrequencyTable { levels })
    }

    pub fn max_active_power(&self) -> f64 {
        self.levels.iter().map(|l| l.active_power).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn validate(&self, min_activation_jump: f64) -> Result<()> {
        // A capped table may legitimately hold a single level.
        if self.levels.is_empty() {
            return Err(Error::config("frequency_table", "needs at least one level"));
        }
        for (i, l) in self.levels.iter().enumerate() {
            let field = |name: &str| format!("frequency_table[{i}].{name}");
            if !(l.prefill_rate.is_finite() && l.prefill_rate > 0.0) {
                return Err(Error::config(field("prefill_rate"), "must be > 0"));
            }
            if !(l.decode_rate.is_finite() && l.decode_rate > 0.0) {
                return Err(Error::config(field("decode_rate"), "must be > 0"));
            }
            if !(l.idle_power.is_finite() && l.idle_power >= 0.0) {
                return Err(Error::config(field("idle_power"), "must be >= 0"));
            }
            if l.active_power.is_nan() || l.active_power < l.idle_power + min_activation_jump {
                return Err(Error::config(
                    field("active_power"),
                    format!("must be >= idle_power + {min_activation_jump} W"),
                ));
            }
        }
        for (i, w) in self.levels.windows(2).enumerate() {
            let field = |name: &str| format!("frequency_table[{}].{name}", i + 1);
            if w[1].nominal_mhz <= w[0].nominal_mhz {
                return Err(Error::config(field("nominal_mhz"), "levels must be strictly increasing in frequency"));
            }
            if w[1].prefill_rate < w[0].prefill_rate {
                return Err(Error::config(field("prefill_rate"), "must be non-decreasing across levels"));
            }
            if w[1].decode_rate < w[0].decode_rate {
                return Err(Error::config(field("decode_rate"), "must be non-decreasing across levels"));
            }
            if w[1].active_power < w[0].active_power {
                return Err(Error::config(field("active_power"), "must be non-decreasing across levels"));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_LEVELS_MHZ: [u32; 7] = [660, 810, 900, 1185, 1350, 1515, 1680];

impl Default for FrequencyTable {
    fn default() -> Self {
        FrequencyTable::scaled(&DEFAULT_LEVELS_MHZ, 12_000.0, 120.0, 1.0, 240.0, 400.0, 50.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThrashMode {
    Recompute,
    Offload,
}

/// Per-request slowdown as a function of how many requests execute
/// concurrently on the instance (the request itself included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Interference {
    None,
    /// `1 + slope * (n - 1)`.
    Linear { slope: f64 },
    /// `max(1, n / knee)`: requests run at full speed until the batch
    /// reaches `knee`, after which they share a fixed aggregate rate.
    Saturating { knee: f64 },
}

impl Interference {
    pub fn factor(&self, concurrent: usize) -> f64 {
        match *self {
            Interference::None => 1.0,
            Interference::Linear { slope } => 1.0 + slope * concurrent.saturating_sub(1) as f64,
            Interference::Saturating { knee } => (concurrent as f64 / knee).max(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceConfig {
    /// Maximum resident context tokens before the instance thrashes.
    pub capacity_tokens: u64,
    pub frequency_table: FrequencyTable,
    pub thrash_mode: ThrashMode,
    /// Multiplier on LLM time while usage exceeds capacity.
    pub thrash_latency_factor: f64,
    pub batch_interference: Interference,
    /// Most requests that may execute at once; the rest wait FIFO.
    pub max_batch: Option<usize>,
    /// Minimum gap between any level's active power and idle power.
    pub min_activation_jump: f64,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            capacity_tokens: 2_800_000,
            frequency_table: FrequencyTable::default(),
            thrash_mode: ThrashMode::Recompute,
            thrash_latency_factor: 3.0,
            batch_interference: Interference::Saturating { knee: 40.0 },
            max_batch: Some(192),
            min_activation_jump: 100.0,
        }
    }
}

impl InstanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity_tokens == 0 {
            return Err(Error::config("capacity_tokens", "must be > 0"));
        }
        if !(self.thrash_latency_factor.is_finite() && self.thrash_latency_factor >= 1.0) {
            return Err(Error::config("thrash_latency_factor", "must be >= 1"));
        }
        match self.batch_interference {
            Interference::None => {}
            Interference::Linear { slope } => {
                if !(slope.is_finite() && slope >= 0.0) {
                    return Err(Error::config("batch_interference.slope", "must be >= 0"));
                }
            }
            Interference::Saturating { knee } => {
                if !(knee.is_finite() && knee >= 1.0) {
                    return Err(Error::config("batch_interference.knee", "must be >= 1"));
                }
            }
        }
        if self.max_batch == Some(0) {
            return Err(Error::config("max_batch", "must be >= 1"));
        }
        if self.frequency_table.len() < 2 {
            return Err(Error::config("frequency_table", "needs at least two levels"));
        }
        self.frequency_table.validate(self.min_activation_jump)
    }

    /// Seconds of LLM time for one request with nothing slowing it down.
    pub fn base_time(&self, turn: &TurnRecord, level: &FrequencyLevel) -> f64 {
        turn.prefill_tokens as f64 / level.prefill_rate + turn.decode_tokens as f64 / level.decode_rate
    }

    /// Combined slowdown multiplier from batching and thrashing.
    pub fn slowdown(&self, concurrent: usize, thrashing: bool) -> f64 {
        let thrash = if thrashing { self.thrash_latency_factor } else { 1.0 };
        self.batch_interference.factor(concurrent) * thrash
    }
}

/// LLM time of `turn` at `level` with `concurrent` requests executing.
pub fn service_time(
    turn: &TurnRecord,
    level: &FrequencyLevel,
    concurrent: usize,
    thrashing: bool,
    config: &InstanceConfig,
) -> Result<f64> {
    if !(level.prefill_rate > 0.0 && level.decode_rate > 0.0) {
        return Err(Error::config("frequency_table", "token rates must be > 0"));
    }
    Ok(config.base_time(turn, level) * config.slowdown(concurrent, thrashing))
}

/// Progress of one agent, as tracked by the instance hosting it.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRuntimeState {
    pub ix: AgentIx,
    pub context_tokens: u64,
    pub completed_steps: usize,
    pub decode_tokens_total: u64,
    pub llm_time_total: f64,
    /// Requests issued since the last assignment or reassignment check.
    pub steps_since_assignment: u32,
    pub instance: InstanceIx,
}

impl AgentRuntimeState {
    pub fn new(ix: AgentIx, instance: InstanceIx) -> Self {
        AgentRuntimeState {
            ix,
            context_tokens: 0,
            completed_steps: 0,
            decode_tokens_total: 0,
            llm_time_total: 0.0,
            steps_since_assignment: 0,
            instance,
        }
    }

    /// Applies a completed turn that took `latency` seconds end to end.
    pub fn grow_context(&mut self, turn: &TurnRecord, latency: f64) {
        self.context_tokens += turn.context_growth();
        self.completed_steps += 1;
        self.decode_tokens_total += turn.decode_tokens;
        self.llm_time_total += latency;
    }
}

/// Where an agent sat on an instance before being removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Residency {
    Ongoing,
    Pending,
}

/// Live state of one serving instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceState {
    pub id: InstanceIx,
    pub current_level: LevelIx,
    capacity: u64,
    ongoing: BTreeMap<AgentIx, u64>,
    pending: VecDeque<AgentIx>,
    context_usage: u64,
    running: usize,
}

impl InstanceState {
    pub fn new(id: InstanceIx, capacity: u64, level: LevelIx) -> Self {
        InstanceState {
            id,
            current_level: level,
            capacity,
            ongoing: BTreeMap::new(),
            pending: VecDeque::new(),
            context_usage: 0,
            running: 0,
        }
    }

    pub fn context_usage(&self) -> u64 {
        self.context_usage
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn thrashing(&self) -> bool {
        self.context_usage > self.capacity
    }

    pub fn busy(&self) -> bool {
        self.running > 0
    }

    pub fn running(&self) -> usize {
        self.running
    }

    pub fn set_running(&mut self, n: usize) {
        self.running = n;
    }

    pub fn ongoing(&self) -> impl Iterator<Item = (AgentIx, u64)> + '_ {
        self.ongoing.iter().map(|(&a, &c)| (a, c))
    }

    pub fn ongoing_len(&self) -> usize {
        self.ongoing.len()
    }

    pub fn is_ongoing(&self, agent: AgentIx) -> bool {
        self.ongoing.contains_key(&agent)
    }

    pub fn pending(&self) -> &VecDeque<AgentIx> {
        &self.pending
    }

    pub fn enqueue_pending(&mut self, agent: AgentIx) -> Result<()> {
        if self.ongoing.contains_key(&agent) || self.pending.contains(&agent) {
            return Err(Error::Logic(format!(
                "agent {} already resident on instance {}",
                agent.0, self.id
            )));
        }
        self.pending.push_back(agent);
        Ok(())
    }

    /// Moves `agent` into the ongoing set, charging its current context.
    pub fn admit(&mut self, agent: &AgentRuntimeState) -> Result<()> {
        if self.ongoing.contains_key(&agent.ix) {
            return Err(Error::Logic(format!(
                "agent {} is already ongoing on instance {}",
                agent.ix.0, self.id
            )));
        }
        if let Some(pos) = self.pending.iter().position(|&a| a == agent.ix) {
            self.pending.remove(pos);
        }
        self.ongoing.insert(agent.ix, agent.context_tokens);
        self.context_usage += agent.context_tokens;
        Ok(())
    }

    /// Re-syncs the usage charge for an ongoing agent whose context grew.
    pub fn record_growth(&mut self, agent: &AgentRuntimeState) -> Result<()> {
        let slot = self.ongoing.get_mut(&agent.ix).ok_or_else(|| {
            Error::Logic(format!("agent {} is not ongoing on instance {}", agent.ix.0, self.id))
        })?;
        self.context_usage = self.context_usage - *slot + agent.context_tokens;
        *slot = agent.context_tokens;
        Ok(())
    }

    /// Releases a finished agent's context. Returns the tokens released.
    pub fn complete_agent(&mut self, agent: AgentIx) -> Result<u64> {
        let released = self.ongoing.remove(&agent).ok_or_else(|| {
            Error::Logic(format!("agent {} is not ongoing on instance {}", agent.0, self.id))
        })?;
        self.context_usage -= released;
        Ok(released)
    }

    /// Removes an agent wherever it sits (used when migrating).
    pub fn remove_agent(&mut self, agent: AgentIx) -> Result<Residency> {
        if let Some(c) = self.ongoing.remove(&agent) {
            self.context_usage -= c;
            return Ok(Residency::Ongoing);
        }
        if let Some(pos) = self.pending.iter().position(|&a| a == agent) {
            self.pending.remove(pos);
            return Ok(Residency::Pending);
        }
        Err(Error::Logic(format!("agent {} is not on instance {}", agent.0, self.id)))
    }

    /// Instantaneous draw: the level's active power while busy, idle otherwise.
    pub fn power_draw(&self, level: &FrequencyLevel) -> f64 {
        if self.busy() {
            level.active_power
        } else {
            level.idle_power
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_config() -> InstanceConfig {
        InstanceConfig {
            batch_interference: Interference::None,
            ..InstanceConfig::default()
        }
    }

    fn level(prefill: f64, decode: f64) -> FrequencyLevel {
        FrequencyLevel {
            nominal_mhz: 1000,
            prefill_rate: prefill,
            decode_rate: decode,
            active_power: 300.0,
            idle_power: 50.0,
        }
    }

    fn agent(ix: usize, ctx: u64) -> AgentRuntimeState {
        AgentRuntimeState {
            context_tokens: ctx,
            ..AgentRuntimeState::new(AgentIx(ix), InstanceIx(0))
        }
    }

    #[test]
    fn service_time_arithmetic() {
        let cfg = flat_config();
        let turn = TurnRecord::new(1000, 100, 0.0);
        let l = level(10_000.0, 1000.0);
        let t = service_time(&turn, &l, 1, false, &cfg).unwrap();
        assert!((t - 0.2).abs() < 1e-12);
        let t = service_time(&turn, &l, 1, true, &cfg).unwrap();
        assert!((t - 0.6).abs() < 1e-12);
        let tiny = service_time(&TurnRecord::new(1, 1, 0.0), &l, 0, false, &cfg).unwrap();
        assert!(tiny > 0.0);
        assert!(service_time(&turn, &level(0.0, 1.0), 1, false, &cfg).is_err());
    }

    #[test]
    fn service_time_decreases_with_level() {
        let cfg = InstanceConfig::default();
        let turn = TurnRecord::new(500, 120, 0.0);
        let table = &cfg.frequency_table;
        let times: Vec<f64> = table
            .levels()
            .iter()
            .map(|l| service_time(&turn, l, 4, false, &cfg).unwrap())
            .collect();
        assert!(times.windows(2).all(|w| w[1] < w[0]), "{times:?}");
    }

    #[test]
    fn admit_and_complete_track_usage() {
        let mut s = InstanceState::new(InstanceIx(0), 100_000, LevelIx(0));
        s.admit(&agent(0, 0)).unwrap();
        assert_eq!(s.context_usage(), 0);
        assert!(s.admit(&agent(0, 0)).is_err());

        let mut s = InstanceState::new(InstanceIx(0), 100_000, LevelIx(0));
        s.admit(&agent(1, 40_000)).unwrap();
        s.enqueue_pending(AgentIx(2)).unwrap();
        s.admit(&agent(2, 10_000)).unwrap();
        assert_eq!(s.context_usage(), 50_000);
        assert!(s.pending().is_empty());

        let mut s = InstanceState::new(InstanceIx(0), 100_000, LevelIx(0));
        s.admit(&agent(0, 30_000)).unwrap();
        s.admit(&agent(1, 20_000)).unwrap();
        s.complete_agent(AgentIx(0)).unwrap();
        assert_eq!(s.context_usage(), 20_000);
        s.complete_agent(AgentIx(1)).unwrap();
        assert_eq!(s.context_usage(), 0);
        assert!(!s.thrashing());
        assert!(s.complete_agent(AgentIx(9)).is_err());
    }

    #[test]
    fn completion_clears_thrashing() {
        let mut s = InstanceState::new(InstanceIx(0), 100_000, LevelIx(0));
        s.admit(&agent(0, 30_000)).unwrap();
        s.admit(&agent(1, 80_000)).unwrap();
        assert_eq!(s.context_usage(), 110_000);
        assert!(s.thrashing());
        s.complete_agent(AgentIx(0)).unwrap();
        assert_eq!(s.context_usage(), 80_000);
        assert!(!s.thrashing());
    }

    #[test]
    fn grow_context_closed_form() {
        let mut a = agent(0, 0);
        a.grow_context(&TurnRecord::new(100, 50, 0.0), 1.0);
        assert_eq!(a.context_tokens, 150);
        a.grow_context(&TurnRecord::new(25, 25, 0.0), 0.5);
        assert_eq!(a.context_tokens, 200);
        assert_eq!(a.completed_steps, 2);
        assert_eq!(a.decode_tokens_total, 75);
        assert!((a.llm_time_total - 1.5).abs() < 1e-12);
    }

    #[test]
    fn default_power_points() {
        let cfg = InstanceConfig::default();
        let table = &cfg.frequency_table;
        let mut s = InstanceState::new(InstanceIx(0), 1, LevelIx(0));
        assert_eq!(s.power_draw(table.level(LevelIx(0))), 50.0);
        assert_eq!(s.power_draw(table.level(table.top())), 50.0);
        s.set_running(1);
        assert!(s.power_draw(table.level(LevelIx(0))) >= 150.0);
        assert_eq!(s.power_draw(table.level(table.top())), 400.0);
        assert_eq!(table.max_active_power(), 400.0);
    }

    #[test]
    fn table_validation() {
        let cfg = InstanceConfig::default();
        cfg.validate().unwrap();

        let mut levels = cfg.frequency_table.levels().to_vec();
        levels[3].active_power = levels[2].active_power - 1.0;
        let err = FrequencyTable::new(levels).validate(100.0).unwrap_err();
        assert!(err.to_string().contains("active_power"), "{err}");

        let mut levels = cfg.frequency_table.levels().to_vec();
        levels.swap(0, 1);
        assert!(FrequencyTable::new(levels).validate(100.0).is_err());

        let mut levels = cfg.frequency_table.levels().to_vec();
        levels[0].active_power = 120.0;
        assert!(FrequencyTable::new(levels).validate(100.0).is_err());
    }

    #[test]
    fn capped_table() {
        let t = FrequencyTable::default();
        let c = t.capped(900).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.level(c.top()).nominal_mhz, 900);
        assert!(t.capped(100).is_err());
    }
}
