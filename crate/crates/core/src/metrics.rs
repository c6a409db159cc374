//! Evaluation metrics over a finished run.

use serde::{Deserialize, Serialize};

use crate::engine::Segment;
use crate::workload::AgentId;

/// Lifecycle summary of one arrived agent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub agent_id: AgentId,
    /// Instance hosting the agent at the end of the run.
    pub instance: usize,
    pub arrival_time: f64,
    pub finish_time: Option<f64>,
    pub completed: bool,
    /// Turns in the agent's trace.
    pub turn_count: usize,
    pub completed_turns: usize,
    pub max_context_tokens: u64,
    pub total_llm_time: f64,
    pub total_decode_tokens: u64,
    /// Decode tokens per second of LLM time; `None` before any turn finishes.
    pub throughput: Option<f64>,
}

impl AgentMetrics {
    pub fn throughput_of(decode_tokens: u64, llm_time: f64) -> Option<f64> {
        (llm_time > 0.0).then(|| decode_tokens as f64 / llm_time)
    }
}

fn completed_throughputs(agents: &[AgentMetrics]) -> Vec<f64> {
    agents.iter().filter(|a| a.completed).filter_map(|a| a.throughput).collect()
}

/// Fraction of completed agents whose throughput reaches `tau`. `None` when
/// no agent completed.
pub fn slo_attainment(agents: &[AgentMetrics], tau: f64) -> Option<f64> {
    let done = completed_throughputs(agents);
    if done.is_empty() {
        return None;
    }
    let met = done.iter().filter(|&&x| x >= tau).count();
    Some(met as f64 / done.len() as f64)
}

/// Nearest-rank percentile of completed agents' throughput: the value at
/// 1-based rank `ceil(p * n)` of the ascending sort.
pub fn percentile_throughput(agents: &[AgentMetrics], p: f64) -> Option<f64> {
    let mut done = completed_throughputs(agents);
    if done.is_empty() || !(p > 0.0 && p < 1.0) {
        return None;
    }
    done.sort_by(f64::total_cmp);
    let rank = ((p * done.len() as f64).ceil() as usize).clamp(1, done.len());
    Some(done[rank - 1])
}

/// A maximal stretch of one instance's time spent in a single regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpan {
    pub start: f64,
    pub end: f64,
    pub thrashing: bool,
}

/// Splits each instance's timeline into thrashing (usage above capacity) and
/// non-thrashing spans.
pub fn regime_classify(segments: &[Vec<Segment>], capacity: u64) -> Vec<Vec<RegimeSpan>> {
    segments
        .iter()
        .map(|segs| {
            let mut spans: Vec<RegimeSpan> = Vec::new();
            for s in segs {
                let thrashing = s.usage > capacity;
                match spans.last_mut() {
                    Some(last) if last.thrashing == thrashing && last.end == s.start => last.end = s.end,
                    _ => spans.push(RegimeSpan {
                        start: s.start,
                        end: s.end,
                        thrashing,
                    }),
                }
            }
            spans
        })
        .collect()
}

/// Thrashing share of total instance-time.
pub fn thrash_fraction(regimes: &[Vec<RegimeSpan>], window: f64) -> f64 {
    if regimes.is_empty() {
        return 0.0;
    }
    let thrashing: f64 = regimes
        .iter()
        .flatten()
        .filter(|s| s.thrashing)
        .fold(0.0, |acc, s| acc + (s.end - s.start));
    thrashing / (window * regimes.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SystemMetrics {
    pub slo_attainment: Option<f64>,
    pub p5_throughput: Option<f64>,
    /// Completed agents per second.
    pub job_throughput: f64,
    pub average_power: f64,
    pub energy: f64,
    pub thrash_fraction: f64,
}

impl SystemMetrics {
    pub fn compute(
        agents: &[AgentMetrics],
        segments: &[Vec<Segment>],
        window: f64,
        capacity: u64,
        tau: f64,
        average_power: f64,
    ) -> Self {
        let completed = agents.iter().filter(|a| a.completed).count();
        SystemMetrics {
            slo_attainment: slo_attainment(agents, tau),
            p5_throughput: percentile_throughput(agents, 0.05),
            job_throughput: completed as f64 / window,
            average_power,
            energy: average_power * window,
            thrash_fraction: thrash_fraction(&regime_classify(segments, capacity), window),
        }
    }
}
