//! Deterministic discrete-event simulation of one or more serving instances.
//!
//! Requests execute as a fluid: each running request holds the fraction of
//! its work still to do and progresses at
//! `1 / (base_time(level) * interference(n) * thrash_factor)`. Whenever any
//! of those inputs change on an instance (a level switch, a request starting
//! or finishing, usage crossing capacity) the instance is synced to the
//! current time and its next completion is re-timed. Each instance keeps a
//! single outstanding completion event guarded by a version counter.

mod power;
mod queue;

use std::collections::VecDeque;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use power::{integrate_power, PowerSegment};
pub use queue::{Event, EventKind, EventQueue};

use crate::controller::{running_throughput, Controller, ControllerConfig, EpochObservation};
use crate::error::{Error, Result};
use crate::instance::{AgentIx, AgentRuntimeState, FrequencyTable, InstanceConfig, InstanceIx, InstanceState};
use crate::metrics::{AgentMetrics, SystemMetrics};
use crate::router::{migrate_context, RouterConfig, RouterState};
use crate::workload::{generate_workload, load_trace, validate_agents, AgentId, AgentTrace, WorkloadSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadSource {
    Generate(WorkloadSpec),
    Trace(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub workload: WorkloadSource,
    pub instances: usize,
    pub instance: InstanceConfig,
    pub controller: ControllerConfig,
    pub router: RouterConfig,
    /// Levels above this frequency are removed from the table.
    pub frequency_cap_mhz: Option<u32>,
    pub sim_duration: f64,
    /// Seed for workload generation; overrides the workload spec's seed.
    pub seed: u64,
    /// Seconds between time-series samples.
    pub record_interval: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            workload: WorkloadSource::Generate(WorkloadSpec::default()),
            instances: 1,
            instance: InstanceConfig::default(),
            controller: ControllerConfig::default(),
            router: RouterConfig::default(),
            frequency_cap_mhz: None,
            sim_duration: 10_800.0,
            seed: 0,
            record_interval: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 {
            return Err(Error::config("instances", "must be >= 1"));
        }
        if !(self.sim_duration.is_finite() && self.sim_duration > 0.0) {
            return Err(Error::config("sim_duration", "must be > 0"));
        }
        if !(self.record_interval.is_finite() && self.record_interval > 0.0) {
            return Err(Error::config("record_interval", "must be > 0"));
        }
        self.instance.validate()?;
        self.controller.validate()?;
        self.router.validate()?;
        if let WorkloadSource::Generate(spec) = &self.workload {
            spec.validate()?;
        }
        let table = self.effective_table()?;
        Controller::new(&self.controller, &table)?;
        Ok(())
    }

    /// Frequency table after applying the cap.
    pub fn effective_table(&self) -> Result<FrequencyTable> {
        match self.frequency_cap_mhz {
            Some(cap) => self.instance.frequency_table.capped(cap),
            None => Ok(self.instance.frequency_table.clone()),
        }
    }

    /// Resolves the workload to concrete agents.
    pub fn load_agents(&self) -> Result<Vec<AgentTrace>> {
        match &self.workload {
            WorkloadSource::Generate(spec) => generate_workload(&WorkloadSpec {
                seed: self.seed,
                ..spec.clone()
            }),
            WorkloadSource::Trace(path) => {
                let mut agents = load_trace(path)?;
                agents.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time));
                Ok(agents)
            }
        }
    }
}

/// Piecewise-constant state of one instance over `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub level: usize,
    pub level_mhz: u32,
    pub usage: u64,
    /// Agents waiting for admission.
    pub pending: usize,
    /// Admitted requests waiting for a batch slot.
    pub queued: usize,
    pub running: usize,
    pub watts: f64,
}

impl Segment {
    fn same_state(&self, other: &Segment) -> bool {
        self.level == other.level
            && self.usage == other.usage
            && self.pending == other.pending
            && self.queued == other.queued
            && self.running == other.running
            && self.watts == other.watts
    }

    pub fn power(&self) -> PowerSegment {
        PowerSegment {
            start: self.start,
            end: self.end,
            watts: self.watts,
        }
    }

    pub fn pending_depth(&self) -> usize {
        self.pending + self.queued
    }
}

/// Instance state captured at a sampling tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub instance: usize,
    pub usage: u64,
    pub level: usize,
    pub level_mhz: u32,
    pub watts: f64,
    pub pending: usize,
    pub queued: usize,
    pub running: usize,
    pub ongoing: usize,
    pub thrashing: bool,
}

/// One controller decision as applied at an epoch boundary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub time: f64,
    pub instance: usize,
    /// Usage observed before admissions.
    pub usage: u64,
    pub context_level: usize,
    pub level: usize,
    pub level_mhz: u32,
    pub boosted: bool,
    pub min_throughput: Option<f64>,
    pub admitted: usize,
    pub deferred: bool,
    pub pending_after: usize,
}

/// One executed request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnLog {
    pub agent: AgentIx,
    pub turn: usize,
    pub instance: usize,
    pub issued_at: f64,
    pub started_at: f64,
    pub completed_at: f64,
    pub prefill_tokens: u64,
    pub decode_tokens: u64,
}

impl TurnLog {
    /// End-to-end LLM latency, queueing included.
    pub fn latency(&self) -> f64 {
        self.completed_at - self.issued_at
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub window: f64,
    pub capacity_tokens: u64,
    pub slo_target: f64,
    pub level_mhz: Vec<u32>,
    pub agent_ids: Vec<AgentId>,
    /// Arrived agents, in arrival order.
    pub agents: Vec<AgentMetrics>,
    pub turns: Vec<TurnLog>,
    /// Per-instance exact state timeline tiling `[0, window]`.
    pub segments: Vec<Vec<Segment>>,
    pub samples: Vec<Sample>,
    pub decisions: Vec<DecisionRecord>,
    pub system: SystemMetrics,
}

impl SimulationResult {
    pub fn power_series(&self) -> Vec<Vec<PowerSegment>> {
        self.segments.iter().map(|s| s.iter().map(Segment::power).collect()).collect()
    }

    /// Pending depth (admission queue plus batch queue) per instance at the
    /// end of the window.
    pub fn final_pending_depth(&self) -> usize {
        self.segments.iter().filter_map(|s| s.last()).map(Segment::pending_depth).sum()
    }

    pub fn arrived(&self) -> usize {
        self.agents.len()
    }

    pub fn completed(&self) -> usize {
        self.agents.iter().filter(|a| a.completed).count()
    }
}

/// Generates or loads the workload and runs it.
pub fn run_simulation(config: &SimConfig) -> Result<SimulationResult> {
    config.validate()?;
    let agents = config.load_agents()?;
    simulate(config, &agents)
}

/// Runs the given agents under `config`.
pub fn simulate(config: &SimConfig, traces: &[AgentTrace]) -> Result<SimulationResult> {
    config.validate()?;
    validate_agents(traces)?;
    if traces.windows(2).any(|w| w[1].arrival_time < w[0].arrival_time) {
        return Err(Error::Validation("agents must be sorted by arrival_time".into()));
    }
    let mut engine = Engine::new(config, traces)?;
    engine.run()?;
    engine.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Request {
    Idle,
    Issued { issued_at: f64, ready: bool },
    Queued { issued_at: f64 },
    Running { issued_at: f64, started_at: f64 },
}

#[derive(Debug)]
struct AgentSlot {
    rt: AgentRuntimeState,
    arrived: bool,
    next_turn: usize,
    request: Request,
    finish: Option<f64>,
    max_context: u64,
}

#[derive(Debug, Clone, Copy)]
struct Running {
    agent: AgentIx,
    /// Fraction of the request's work left, in [0, 1].
    remaining: f64,
    /// Seconds the whole request takes at the current level, unslowed.
    base: f64,
}

#[derive(Debug)]
struct InstanceRt {
    state: InstanceState,
    running: Vec<Running>,
    waiting: VecDeque<AgentIx>,
    slowdown: f64,
    last_sync: f64,
    version: u64,
    timeline: Vec<Segment>,
}

struct Engine<'a> {
    config: &'a SimConfig,
    inst_cfg: InstanceConfig,
    table: FrequencyTable,
    controller: Controller,
    router: RouterState,
    traces: &'a [AgentTrace],
    agents: Vec<AgentSlot>,
    instances: Vec<InstanceRt>,
    queue: EventQueue,
    now: f64,
    max_batch: usize,
    turns: Vec<TurnLog>,
    samples: Vec<Sample>,
    decisions: Vec<DecisionRecord>,
}

impl<'a> Engine<'a> {
    fn new(config: &'a SimConfig, traces: &'a [AgentTrace]) -> Result<Self> {
        let table = config.effective_table()?;
        let controller = Controller::new(&config.controller, &table)?;
        let router = RouterState::new(config.router.clone(), config.instances)?;
        let inst_cfg = InstanceConfig {
            frequency_table: table.clone(),
            ..config.instance.clone()
        };
        let level = controller.initial_level();
        let instances = (0..config.instances)
            .map(|i| {
                let state = InstanceState::new(InstanceIx(i), inst_cfg.capacity_tokens, level);
                let watts = state.power_draw(table.level(level));
                InstanceRt {
                    state,
                    running: Vec::new(),
                    waiting: VecDeque::new(),
                    slowdown: 1.0,
                    last_sync: 0.0,
                    version: 0,
                    timeline: vec![Segment {
                        start: 0.0,
                        end: 0.0,
                        level: level.0,
                        level_mhz: table.level(level).nominal_mhz,
                        usage: 0,
                        pending: 0,
                        queued: 0,
                        running: 0,
                        watts,
                    }],
                }
            })
            .collect();
        let agents = (0..traces.len())
            .map(|i| AgentSlot {
                rt: AgentRuntimeState::new(AgentIx(i), InstanceIx(0)),
                arrived: false,
                next_turn: 0,
                request: Request::Idle,
                finish: None,
                max_context: 0,
            })
            .collect();

        let mut queue = EventQueue::default();
        for (i, t) in traces.iter().enumerate() {
            if t.arrival_time <= config.sim_duration {
                queue.push(t.arrival_time, EventKind::AgentArrival { agent: AgentIx(i) });
            }
        }
        queue.push(0.0, EventKind::EpochTick);
        queue.push(0.0, EventKind::SampleTick);

        Ok(Engine {
            max_batch: inst_cfg.max_batch.unwrap_or(usize::MAX),
            config,
            inst_cfg,
            table,
            controller,
            router,
            traces,
            agents,
            instances,
            queue,
            now: 0.0,
            turns: Vec::new(),
            samples: Vec::new(),
            decisions: Vec::new(),
        })
    }

    fn run(&mut self) -> Result<()> {
        let end = self.config.sim_duration;
        while let Some(ev) = self.queue.pop() {
            if ev.time > end {
                break;
            }
            self.now = ev.time;
            match ev.kind {
                EventKind::EpochTick => self.on_epoch()?,
                EventKind::TurnComplete { instance, version } => self.on_complete(instance, version)?,
                EventKind::ToolDone { agent } => self.issue_request(agent)?,
                EventKind::TurnIssue { agent } => self.on_ready(agent)?,
                EventKind::AgentArrival { agent } => self.on_arrival(agent)?,
                EventKind::SampleTick => self.on_sample(),
            }
        }
        Ok(())
    }

    fn usages(&self) -> Vec<u64> {
        self.instances.iter().map(|i| i.state.context_usage()).collect()
    }

    /// Advances every running request on `i` to `now` at the rates set by
    /// the last `settle`.
    fn sync(&mut self, i: InstanceIx) {
        let inst = &mut self.instances[i.0];
        let dt = self.now - inst.last_sync;
        if dt > 0.0 {
            for r in &mut inst.running {
                r.remaining -= dt / (r.base * inst.slowdown);
            }
        }
        inst.last_sync = self.now;
    }

    /// Recomputes rates after a state change, schedules the next
    /// completion and extends the timeline.
    fn settle(&mut self, i: InstanceIx) {
        let inst = &mut self.instances[i.0];
        debug_assert_eq!(inst.last_sync, self.now, "settle without sync");
        inst.state.set_running(inst.running.len());
        inst.slowdown = self.inst_cfg.slowdown(inst.running.len(), inst.state.thrashing());
        let level = self.table.level(inst.state.current_level);
        for r in &mut inst.running {
            let slot = &self.agents[r.agent.0];
            let turn = &self.traces[r.agent.0].turns[slot.next_turn];
            r.base = self.inst_cfg.base_time(turn, level);
        }
        inst.version += 1;
        if let Some(dt) = inst
            .running
            .iter()
            .map(|r| r.remaining.max(0.0) * r.base * inst.slowdown)
            .reduce(f64::min)
        {
            self.queue.push(self.now + dt, EventKind::TurnComplete { instance: i, version: inst.version });
        }

        let seg = Segment {
            start: self.now,
            end: self.now,
            level: inst.state.current_level.0,
            level_mhz: level.nominal_mhz,
            usage: inst.state.context_usage(),
            pending: inst.state.pending().len(),
            queued: inst.waiting.len(),
            running: inst.running.len(),
            watts: inst.state.power_draw(level),
        };
        let tl = &mut inst.timeline;
        let last = tl.last_mut().expect("timeline starts non-empty");
        if last.same_state(&seg) {
            return;
        }
        if last.start == self.now {
            tl.pop();
            if tl.last().is_some_and(|p| p.same_state(&seg)) {
                return;
            }
        }
        if let Some(prev) = tl.last_mut() {
            prev.end = self.now;
        }
        tl.push(seg);
    }

    /// Starts the agent's outstanding request if it is admitted and ready,
    /// or queues it behind a full batch.
    fn try_start(&mut self, a: AgentIx) {
        let slot = &self.agents[a.0];
        let i = slot.rt.instance;
        let Request::Issued { issued_at, ready: true } = slot.request else {
            return;
        };
        let inst = &mut self.instances[i.0];
        if !inst.state.is_ongoing(a) {
            return;
        }
        if inst.running.len() < self.max_batch {
            inst.running.push(Running {
                agent: a,
                remaining: 1.0,
                base: 0.0,
            });
            self.agents[a.0].request = Request::Running {
                issued_at,
                started_at: self.now,
            };
        } else {
            inst.waiting.push_back(a);
            self.agents[a.0].request = Request::Queued { issued_at };
        }
    }

    fn admit(&mut self, i: InstanceIx, a: AgentIx) -> Result<()> {
        self.instances[i.0].state.admit(&self.agents[a.0].rt)?;
        self.try_start(a);
        Ok(())
    }

    fn admit_all_pending(&mut self, i: InstanceIx) -> Result<()> {
        let pending: Vec<AgentIx> = self.instances[i.0].state.pending().iter().copied().collect();
        for a in pending {
            self.admit(i, a)?;
        }
        Ok(())
    }

    fn on_arrival(&mut self, a: AgentIx) -> Result<()> {
        let usages = self.usages();
        let capacity = self.inst_cfg.capacity_tokens;
        let i = self.router.route_new_agent(&mut self.agents[a.0].rt, &usages, capacity)?;
        self.agents[a.0].arrived = true;
        self.sync(i);
        self.instances[i.0].state.enqueue_pending(a)?;
        self.settle(i);
        self.issue_request(a)
    }

    /// Issues the agent's next request: runs the reassignment check, then
    /// starts the request if possible.
    fn issue_request(&mut self, a: AgentIx) -> Result<()> {
        let usages = self.usages();
        let from = self.agents[a.0].rt.instance;
        let mut slot_rt = self.agents[a.0].rt.clone();
        let target = self.router.on_request(&mut slot_rt, &usages);
        // migrate_context sets the placement itself.
        slot_rt.instance = from;
        self.sync(from);

        let mut ready = true;
        let i = match target {
            Some(to) => {
                self.sync(to);
                let (src, dst) = pair_mut(&mut self.instances, from.0, to.0);
                migrate_context(&mut slot_rt, &mut src.state, &mut dst.state)?;
                let delay = self.router.config().migration_delay;
                if delay > 0.0 {
                    ready = false;
                    self.queue.push(self.now + delay, EventKind::TurnIssue { agent: a });
                }
                to
            }
            None => from,
        };
        self.agents[a.0].rt = slot_rt;
        self.agents[a.0].request = Request::Issued {
            issued_at: self.now,
            ready,
        };

        if self.controller.admits_immediately() {
            self.admit_all_pending(i)?;
        }
        self.try_start(a);
        if i != from {
            self.settle(from);
        }
        self.settle(i);
        Ok(())
    }

    fn on_ready(&mut self, a: AgentIx) -> Result<()> {
        let i = self.agents[a.0].rt.instance;
        self.sync(i);
        if let Request::Issued { issued_at, .. } = self.agents[a.0].request {
            self.agents[a.0].request = Request::Issued { issued_at, ready: true };
            self.try_start(a);
        }
        self.settle(i);
        Ok(())
    }

    fn on_complete(&mut self, i: InstanceIx, version: u64) -> Result<()> {
        if self.instances[i.0].version != version {
            return Ok(());
        }
        self.sync(i);
        let inst = &mut self.instances[i.0];
        let slowdown = inst.slowdown;
        let argmin = inst
            .running
            .iter()
            .enumerate()
            .min_by(|(_, x), (_, y)| (x.remaining * x.base).total_cmp(&(y.remaining * y.base)))
            .map(|(k, _)| k);
        let mut done = Vec::new();
        let mut k = 0;
        inst.running.retain(|r| {
            let finished = Some(k) == argmin || r.remaining * r.base * slowdown <= 1e-9;
            k += 1;
            if finished {
                done.push(r.agent);
            }
            !finished
        });

        for a in done {
            self.finish_turn(i, a)?;
        }
        while self.instances[i.0].running.len() < self.max_batch {
            let Some(next) = self.instances[i.0].waiting.pop_front() else {
                break;
            };
            if let Request::Queued { issued_at } = self.agents[next.0].request {
                self.agents[next.0].request = Request::Issued { issued_at, ready: true };
                self.try_start(next);
            }
        }
        self.settle(i);
        Ok(())
    }

    fn finish_turn(&mut self, i: InstanceIx, a: AgentIx) -> Result<()> {
        let trace = &self.traces[a.0];
        let slot = &mut self.agents[a.0];
        let Request::Running { issued_at, started_at } = slot.request else {
            return Err(Error::Logic(format!("agent {} completed a turn it was not running", a.0)));
        };
        let turn = trace.turns[slot.next_turn];
        let latency = self.now - issued_at;
        slot.rt.grow_context(&turn, latency);
        slot.max_context = slot.max_context.max(slot.rt.context_tokens);
        self.turns.push(TurnLog {
            agent: a,
            turn: slot.next_turn,
            instance: i.0,
            issued_at,
            started_at,
            completed_at: self.now,
            prefill_tokens: turn.prefill_tokens,
            decode_tokens: turn.decode_tokens,
        });
        slot.next_turn += 1;
        slot.request = Request::Idle;
        self.instances[i.0].state.record_growth(&slot.rt)?;

        if slot.next_turn == trace.turns.len() {
            self.instances[i.0].state.complete_agent(a)?;
            slot.finish = Some(self.now);
        } else {
            self.queue.push(self.now + turn.tool_time, EventKind::ToolDone { agent: a });
        }
        Ok(())
    }

    fn on_epoch(&mut self) -> Result<()> {
        for k in 0..self.instances.len() {
            let i = InstanceIx(k);
            let state = &self.instances[k].state;
            let throughputs = state
                .ongoing()
                .map(|(a, _)| a)
                .chain(state.pending().iter().copied())
                .map(|a| running_throughput(&self.agents[a.0].rt))
                .collect();
            let obs = EpochObservation {
                usage: state.context_usage(),
                capacity: state.capacity(),
                throughputs,
                pending: state
                    .pending()
                    .iter()
                    .map(|&a| (a, self.agents[a.0].rt.context_tokens))
                    .collect(),
            };
            let decision = self.controller.decide(&obs);

            self.sync(i);
            self.instances[k].state.current_level = decision.frequency_level;
            for &a in &decision.admitted {
                self.admit(i, a)?;
            }
            self.settle(i);

            let level = decision.frequency_level;
            self.decisions.push(DecisionRecord {
                time: self.now,
                instance: k,
                usage: obs.usage,
                context_level: decision.context_level.0,
                level: level.0,
                level_mhz: self.table.level(level).nominal_mhz,
                boosted: decision.boosted,
                min_throughput: decision.min_throughput,
                admitted: decision.admitted.len(),
                deferred: decision.deferred,
                pending_after: self.instances[k].state.pending().len(),
            });
        }
        let next = self.now + self.config.controller.epoch_length;
        if next < self.config.sim_duration {
            self.queue.push(next, EventKind::EpochTick);
        }
        Ok(())
    }

    fn on_sample(&mut self) {
        for (k, inst) in self.instances.iter().enumerate() {
            let s = &inst.state;
            let level = self.table.level(s.current_level);
            self.samples.push(Sample {
                time: self.now,
                instance: k,
                usage: s.context_usage(),
                level: s.current_level.0,
                level_mhz: level.nominal_mhz,
                watts: s.power_draw(level),
                pending: s.pending().len(),
                queued: inst.waiting.len(),
                running: inst.running.len(),
                ongoing: s.ongoing_len(),
                thrashing: s.thrashing(),
            });
        }
        let next = self.now + self.config.record_interval;
        if next <= self.config.sim_duration {
            self.queue.push(next, EventKind::SampleTick);
        }
    }

    fn finish(mut self) -> Result<SimulationResult> {
        let window = self.config.sim_duration;
        for inst in &mut self.instances {
            let last = inst.timeline.last_mut().expect("non-empty");
            last.end = window;
            // A change exactly at the window end leaves a zero-length tail.
            if inst.timeline.len() > 1 && inst.timeline.last().is_some_and(|s| s.start == window) {
                inst.timeline.pop();
                inst.timeline.last_mut().expect("non-empty").end = window;
            }
        }

        let agents: Vec<AgentMetrics> = self
            .agents
            .iter()
            .zip(self.traces)
            .filter(|(slot, _)| slot.arrived)
            .map(|(slot, trace)| {
                AgentMetrics {
                    agent_id: trace.agent_id.clone(),
                    instance: slot.rt.instance.0,
                    arrival_time: trace.arrival_time,
                    finish_time: slot.finish,
                    completed: slot.finish.is_some(),
                    turn_count: trace.turns.len(),
                    completed_turns: slot.rt.completed_steps,
                    max_context_tokens: slot.max_context,
                    total_llm_time: slot.rt.llm_time_total,
                    total_decode_tokens: slot.rt.decode_tokens_total,
                    throughput: AgentMetrics::throughput_of(slot.rt.decode_tokens_total, slot.rt.llm_time_total),
                }
            })
            .collect();
        let segments: Vec<Vec<Segment>> = self.instances.into_iter().map(|i| i.timeline).collect();
        let power: Vec<Vec<PowerSegment>> = segments.iter().map(|s| s.iter().map(Segment::power).collect()).collect();
        let average_power = integrate_power(&power, window)?;
        let system = SystemMetrics::compute(
            &agents,
            &segments,
            window,
            self.inst_cfg.capacity_tokens,
            self.config.controller.slo_target,
            average_power,
        );

        Ok(SimulationResult {
            window,
            capacity_tokens: self.inst_cfg.capacity_tokens,
            slo_target: self.config.controller.slo_target,
            level_mhz: self.table.levels().iter().map(|l| l.nominal_mhz).collect(),
            agent_ids: self.traces.iter().map(|t| t.agent_id.clone()).collect(),
            agents,
            turns: self.turns,
            segments,
            samples: self.samples,
            decisions: self.decisions,
            system,
        })
    }
}

fn pair_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}
