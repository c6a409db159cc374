//! Agent traces, synthetic workload generation, and the line-delimited trace
//! file format.
//!
//! An agent is an ordered list of turns. Each turn appends `prefill_tokens`
//! to the agent's context, produces `decode_tokens`, and is followed by
//! `tool_time` seconds spent outside the LLM before the next turn is issued.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque agent identifier, unique within a workload.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId(s.to_owned())
    }
}

/// One LLM request of an agent plus the tool gap that follows it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(u64, u64, f64)", into = "(u64, u64, f64)")]
pub struct TurnRecord {
    pub prefill_tokens: u64,
    pub decode_tokens: u64,
    /// Seconds between this turn's completion and the next turn's issue.
    /// Ignored for the final turn.
    pub tool_time: f64,
}

impl TurnRecord {
    pub fn new(prefill_tokens: u64, decode_tokens: u64, tool_time: f64) -> Self {
        TurnRecord {
            prefill_tokens,
            decode_tokens,
            tool_time,
        }
    }

    /// Tokens this turn adds to the agent's context once it completes.
    pub fn context_growth(&self) -> u64 {
        self.prefill_tokens + self.decode_tokens
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.prefill_tokens < 1 {
            return Err("prefill_tokens must be >= 1".into());
        }
        if self.decode_tokens < 1 {
            return Err("decode_tokens must be >= 1".into());
        }
        if !(self.tool_time.is_finite() && self.tool_time >= 0.0) {
            return Err(format!("tool_time must be finite and >= 0, got {}", self.tool_time));
        }
        Ok(())
    }
}

impl From<(u64, u64, f64)> for TurnRecord {
    fn from((p, d, t): (u64, u64, f64)) -> Self {
        TurnRecord::new(p, d, t)
    }
}

impl From<TurnRecord> for (u64, u64, f64) {
    fn from(t: TurnRecord) -> Self {
        (t.prefill_tokens, t.decode_tokens, t.tool_time)
    }
}

/// Offline description of one agent job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub agent_id: AgentId,
    pub arrival_time: f64,
    pub turns: Vec<TurnRecord>,
}

impl AgentTrace {
    /// Context size seen by turn `step` (0-based): every earlier turn's
    /// prefill and decode tokens plus this turn's prefill.
    pub fn context_at_step(&self, step: usize) -> u64 {
        let prior: u64 = self.turns[..step].iter().map(TurnRecord::context_growth).sum();
        prior + self.turns[step].prefill_tokens
    }

    /// Context held after the last turn completes.
    pub fn final_context(&self) -> u64 {
        self.turns.iter().map(TurnRecord::context_growth).sum()
    }

    pub fn total_decode_tokens(&self) -> u64 {
        self.turns.iter().map(|t| t.decode_tokens).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_time.is_finite() && self.arrival_time >= 0.0) {
            return Err(Error::Validation(format!(
                "agent {}: arrival_time must be finite and >= 0",
                self.agent_id
            )));
        }
        if self.turns.is_empty() {
            return Err(Error::Validation(format!("agent {} has no turns", self.agent_id)));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            turn.validate()
                .map_err(|m| Error::Validation(format!("agent {} turn {}: {}", self.agent_id, i, m)))?;
        }
        Ok(())
    }
}

/// Checks every agent and the uniqueness of agent IDs.
pub fn validate_agents(agents: &[AgentTrace]) -> Result<()> {
    let mut seen = HashSet::with_capacity(agents.len());
    for agent in agents {
        agent.validate()?;
        if !seen.insert(&agent.agent_id) {
            return Err(Error::Validation(format!("duplicate agent_id {:?}", agent.agent_id.0)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalProcess {
    Poisson,
    FixedInterval,
    /// Reuse the agents of a recorded trace verbatim.
    Replay { trace: PathBuf },
}

/// Heavy-tailed turn count: a log-normal whose arithmetic mean is `mean`,
/// rounded to the nearest integer and clamped to `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnCountDist {
    pub mean: f64,
    pub sigma: f64,
    pub min: u32,
    pub max: u32,
}

impl TurnCountDist {
    fn mu(&self) -> f64 {
        self.mean.ln() - 0.5 * self.sigma * self.sigma
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        let z: f64 = rng.sample(StandardNormal);
        let x = (self.mu() + self.sigma * z).exp().round();
        // `as` saturates, so huge draws land on u32::MAX before clamping.
        (x as u32).clamp(self.min, self.max)
    }

    fn validate(&self, field: &str) -> Result<()> {
        if !(self.mean.is_finite() && self.mean > 0.0) {
            return Err(Error::config(format!("{field}.mean"), "must be > 0"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::config(format!("{field}.sigma"), "must be >= 0"));
        }
        if self.min < 1 {
            return Err(Error::config(format!("{field}.min"), "must be >= 1"));
        }
        if self.max < self.min {
            return Err(Error::config(format!("{field}.max"), "must be >= min"));
        }
        Ok(())
    }
}

impl Default for TurnCountDist {
    fn default() -> Self {
        TurnCountDist {
            mean: 37.0,
            sigma: 2.03,
            min: 1,
            max: 2518,
        }
    }
}

/// Per-turn token count distribution. Samples are rounded and floored at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenDist {
    Constant { value: u64 },
    /// Log-normal with arithmetic mean `mean` and log-space std-dev `sigma`.
    LogNormal { mean: f64, sigma: f64 },
}

impl TokenDist {
    fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        match *self {
            TokenDist::Constant { value } => value.max(1),
            TokenDist::LogNormal { mean, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                let x = (mean.ln() - 0.5 * sigma * sigma + sigma * z).exp().round();
                (x as u64).max(1)
            }
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        match *self {
            TokenDist::Constant { value } if value < 1 => {
                Err(Error::config(format!("{field}.value"), "must be >= 1"))
            }
            TokenDist::LogNormal { mean, .. } if !(mean.is_finite() && mean > 0.0) => {
                Err(Error::config(format!("{field}.mean"), "must be > 0"))
            }
            TokenDist::LogNormal { sigma, .. } if !(sigma.is_finite() && sigma >= 0.0) => {
                Err(Error::config(format!("{field}.sigma"), "must be >= 0"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToolTimeDist {
    Constant { seconds: f64 },
    Exponential { mean: f64 },
}

impl ToolTimeDist {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            ToolTimeDist::Constant { seconds } => seconds,
            ToolTimeDist::Exponential { mean } => {
                let e: f64 = rng.sample(Exp1);
                e * mean
            }
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        let v = match *self {
            ToolTimeDist::Constant { seconds } => seconds,
            ToolTimeDist::Exponential { mean } => mean,
        };
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(Error::config(field, "must be finite and >= 0"))
        }
    }
}

/// Parameters of a synthetic workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    /// Agent jobs per second.
    pub arrival_rate: f64,
    pub arrival_process: ArrivalProcess,
    pub turn_count: TurnCountDist,
    pub prefill: TokenDist,
    /// Extra prefill tokens added per turn index (tool observations tend to
    /// get longer as a task progresses).
    pub prefill_growth: f64,
    pub decode: TokenDist,
    pub tool_time: ToolTimeDist,
    /// Per-agent token budget. Agents whose turns would exceed it have every
    /// turn's token counts scaled down uniformly.
    pub context_limit: Option<u64>,
    /// Arrivals are generated in `[0, duration)`.
    pub duration: f64,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            arrival_rate: 0.64,
            arrival_process: ArrivalProcess::Poisson,
            turn_count: TurnCountDist::default(),
            prefill: TokenDist::LogNormal {
                mean: 1500.0,
                sigma: 0.8,
            },
            prefill_growth: 0.0,
            decode: TokenDist::LogNormal {
                mean: 560.0,
                sigma: 0.5,
            },
            tool_time: ToolTimeDist::Exponential { mean: 2.0 },
            context_limit: Some(32_768),
            duration: 10_800.0,
            seed: 0,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return Err(Error::config("arrival_rate", "must be > 0"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::config("duration", "must be > 0"));
        }
        if !(self.prefill_growth.is_finite() && self.prefill_growth >= 0.0) {
            return Err(Error::config("prefill_growth", "must be >= 0"));
        }
        if self.context_limit == Some(0) {
            return Err(Error::config("context_limit", "must be > 0"));
        }
        self.turn_count.validate("turn_count")?;
        self.prefill.validate("prefill")?;
        self.decode.validate("decode")?;
        self.tool_time.validate("tool_time")?;
        Ok(())
    }
}

/// Generates the agents described by `spec`, sorted by arrival time.
///
/// Inter-arrival gaps are drawn as unit exponentials and divided by the
/// rate, so for a fixed seed the agents' turn lists do not depend on
/// `arrival_rate`; only their arrival times stretch or shrink.
pub fn generate_workload(spec: &WorkloadSpec) -> Result<Vec<AgentTrace>> {
    spec.validate()?;
    if let ArrivalProcess::Replay { trace } = &spec.arrival_process {
        let mut agents = load_trace(trace)?;
        agents.retain(|a| a.arrival_time < spec.duration);
        agents.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time));
        return Ok(agents);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut agents = Vec::new();
    let mut t = 0.0_f64;
    for k in 0u64.. {
        let arrival = match spec.arrival_process {
            ArrivalProcess::Poisson => {
                let gap: f64 = rng.sample(Exp1);
                t += gap / spec.arrival_rate;
                t
            }
            ArrivalProcess::FixedInterval => k as f64 / spec.arrival_rate,
            ArrivalProcess::Replay { .. } => unreachable!(),
        };
        if arrival >= spec.duration {
            break;
        }
        let turns = generate_turns(spec, &mut rng);
        agents.push(AgentTrace {
            agent_id: AgentId(format!("agent-{k:06}")),
            arrival_time: arrival,
            turns,
        });
    }
    Ok(agents)
}

fn generate_turns<R: Rng>(spec: &WorkloadSpec, rng: &mut R) -> Vec<TurnRecord> {
    let n = spec.turn_count.sample(rng) as usize;
    let mut turns: Vec<TurnRecord> = (0..n)
        .map(|i| {
            let growth = (spec.prefill_growth * i as f64).round() as u64;
            let prefill = spec.prefill.sample(rng) + growth;
            let decode = spec.decode.sample(rng);
            let tool = spec.tool_time.sample(rng);
            TurnRecord::new(prefill, decode, tool)
        })
        .collect();

    if let Some(limit) = spec.context_limit {
        let total: u64 = turns.iter().map(TurnRecord::context_growth).sum();
        if total > limit {
            let scale = limit as f64 / total as f64;
            for turn in &mut turns {
                turn.prefill_tokens = ((turn.prefill_tokens as f64 * scale) as u64).max(1);
                turn.decode_tokens = ((turn.decode_tokens as f64 * scale) as u64).max(1);
            }
        }
    }
    turns
}

/// Summary statistics printed by the `gen` command.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadStats {
    pub agents: usize,
    pub mean_turns: f64,
    pub median_turns: u32,
    pub max_turns: u32,
    pub mean_final_context: f64,
}

impl WorkloadStats {
    pub fn of(agents: &[AgentTrace]) -> Self {
        let mut counts: Vec<u32> = agents.iter().map(|a| a.turns.len() as u32).collect();
        counts.sort_unstable();
        let n = counts.len();
        let mean = |xs: &mut dyn Iterator<Item = f64>| if n == 0 { 0.0 } else { xs.sum::<f64>() / n as f64 };
        WorkloadStats {
            agents: n,
            mean_turns: mean(&mut counts.iter().map(|&c| c as f64)),
            median_turns: if n == 0 { 0 } else { counts[(n - 1) / 2] },
            max_turns: counts.last().copied().unwrap_or(0),
            mean_final_context: mean(&mut agents.iter().map(|a| a.final_context() as f64)),
        }
    }
}

/// Reads a trace file: one JSON object per line with `agent_id`,
/// `arrival_time` and `turns` (an array of `[prefill, decode, tool_time]`).
/// Blank lines are skipped and unknown fields ignored.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<AgentTrace>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trace(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<AgentTrace>> {
    let mut agents = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<trace>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let agent: AgentTrace = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        agents.push(agent);
    }
    validate_agents(&agents)?;
    Ok(agents)
}

pub fn save_trace(agents: &[AgentTrace], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    validate_agents(agents)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_trace(agents, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trace<W: Write>(agents: &[AgentTrace], w: &mut W) -> std::io::Result<()> {
    for agent in agents {
        serde_json::to_writer(&mut *w, agent)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
