use std::collections::BTreeMap;

use ctxsim_core::metrics::percentile_throughput;
use ctxsim_core::{
    admission_pass, control_epoch, integrate_power, migrate_context, select_frequency_level, service_time,
    simulate, slo_attainment, AgentId, AgentIx, AgentMetrics, AgentRuntimeState, AgentTrace, ControllerConfig,
    ControllerKind, EpochObservation, FrequencyTable, InstanceConfig, InstanceIx, InstanceState, LevelIx,
    RoutingPolicy, SimConfig, SimulationResult, TurnRecord,
};
use proptest::prelude::*;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

proptest! {
    #[test]
    fn level_is_monotone_in_usage(
        capacity in 1u64..10_000_000,
        levels in 2usize..17,
        alpha in 0.05f64..1.0,
        a in 0.0f64..1.5,
        b in 0.0f64..1.5,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let u = |x: f64| (x * capacity as f64) as u64;
        let l1 = select_frequency_level(u(lo), capacity, levels, alpha);
        let l2 = select_frequency_level(u(hi), capacity, levels, alpha);
        prop_assert!(l1 <= l2);
        prop_assert!(l2.0 < levels);
    }

    #[test]
    fn boost_forces_top_level(
        usage in 0u64..3_000_000,
        levels in 2usize..10,
        throughputs in prop::collection::vec(prop::option::of(0.0f64..100.0), 0..12),
        tau in 1.0f64..60.0,
    ) {
        let config = ControllerConfig { slo_target: tau, ..ControllerConfig::default() };
        let obs = EpochObservation { usage, capacity: 1_000_000, throughputs: throughputs.clone(), pending: vec![] };
        let d = control_epoch(&obs, levels, &config);
        let slow = throughputs.iter().flatten().any(|&x| x < tau);
        prop_assert_eq!(d.boosted, slow);
        if slow {
            prop_assert_eq!(d.frequency_level, LevelIx(levels - 1));
        } else {
            prop_assert_eq!(d.frequency_level, d.context_level);
        }
    }

    #[test]
    fn admission_is_safe_and_ordered(
        capacity in 1_000u64..10_000_000,
        start in 0.0f64..=1.0,
        sizes in prop::collection::vec(0.0f64..=1.0, 0..40),
    ) {
        let (beta, gamma) = (0.95, 0.90);
        let usage = (start * gamma * capacity as f64) as u64;
        let headroom = ((beta - gamma) * capacity as f64).floor();
        let pending: Vec<(AgentIx, u64)> =
            sizes.iter().enumerate().map(|(k, &s)| (AgentIx(k * 3 + 1), (s * headroom) as u64)).collect();
        let out = admission_pass(usage, &pending, beta, gamma, capacity);
        prop_assert!(out.usage_after as f64 <= beta * capacity as f64);
        prop_assert!(!out.deferred);
        let prefix: Vec<AgentIx> = pending.iter().take(out.admitted.len()).map(|&(a, _)| a).collect();
        prop_assert_eq!(&out.admitted, &prefix);
        let charged: u64 = pending[..out.admitted.len()].iter().map(|&(_, c)| c).sum();
        prop_assert_eq!(out.usage_after, usage + charged);
    }

    #[test]
    fn service_time_falls_with_level(
        prefill in 1u64..200_000,
        decode in 1u64..20_000,
        concurrent in 1usize..300,
        thrashing in any::<bool>(),
    ) {
        let config = InstanceConfig::default();
        let table = &config.frequency_table;
        let t = TurnRecord { prefill_tokens: prefill, decode_tokens: decode, tool_time: 0.0 };
        let times: Vec<f64> = (0..table.len())
            .map(|k| service_time(&t, table.level(LevelIx(k)), concurrent, thrashing, &config).unwrap())
            .collect();
        prop_assert!(times.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[derive(Debug, Clone)]
enum Op {
    Admit(usize),
    Grow(usize, u64, u64),
    Complete(usize),
    Remove(usize),
}

fn arb_op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0usize..8).prop_map(Op::Admit),
        (0usize..8, 1u64..40_000, 1u64..4_000).prop_map(|(a, p, d)| Op::Grow(a, p, d)),
        (0usize..8).prop_map(Op::Complete),
        (0usize..8).prop_map(Op::Remove),
    ]
}

proptest! {
    #[test]
    fn usage_matches_independent_ledger(ops in prop::collection::vec(arb_op(), 0..80)) {
        let capacity = 100_000;
        let mut inst = InstanceState::new(InstanceIx(0), capacity, LevelIx(0));
        let mut agents: Vec<AgentRuntimeState> =
            (0..8).map(|k| AgentRuntimeState::new(AgentIx(k), InstanceIx(0))).collect();
        let mut ledger: BTreeMap<usize, u64> = BTreeMap::new();
        let table = FrequencyTable::default();
        for op in ops {
            match op {
                Op::Admit(a) => {
                    if inst.admit(&agents[a]).is_ok() {
                        ledger.insert(a, agents[a].context_tokens);
                    } else {
                        prop_assert!(ledger.contains_key(&a));
                    }
                }
                Op::Grow(a, p, d) => {
                    let t = TurnRecord { prefill_tokens: p, decode_tokens: d, tool_time: 0.0 };
                    agents[a].grow_context(&t, 1.0);
                    if ledger.contains_key(&a) {
                        inst.record_growth(&agents[a]).unwrap();
                        ledger.insert(a, agents[a].context_tokens);
                    }
                }
                Op::Complete(a) => {
                    let released = inst.complete_agent(AgentIx(a));
                    prop_assert_eq!(released.ok(), ledger.remove(&a));
                }
                Op::Remove(a) => {
                    let was = ledger.remove(&a);
                    prop_assert_eq!(inst.remove_agent(AgentIx(a)).is_ok(), was.is_some());
                }
            }
            let total: u64 = ledger.values().sum();
            prop_assert_eq!(inst.context_usage(), total);
            prop_assert_eq!(inst.thrashing(), total > capacity);
            let level = table.level(LevelIx(0));
            let w = inst.power_draw(level);
            prop_assert!(level.idle_power <= w && w <= table.max_active_power());
        }
    }

    #[test]
    fn migration_conserves_tokens(contexts in prop::collection::vec(0u64..50_000, 1..10), pick in any::<prop::sample::Index>()) {
        let mut from = InstanceState::new(InstanceIx(0), 1_000_000, LevelIx(0));
        let mut to = InstanceState::new(InstanceIx(1), 1_000_000, LevelIx(0));
        let mut agents = Vec::new();
        for (k, &c) in contexts.iter().enumerate() {
            let mut a = AgentRuntimeState::new(AgentIx(k), InstanceIx(0));
            a.context_tokens = c;
            from.admit(&a).unwrap();
            agents.push(a);
        }
        let before = from.context_usage() + to.context_usage();
        let k = pick.index(agents.len());
        migrate_context(&mut agents[k], &mut from, &mut to).unwrap();
        // The moved agent waits in the destination's pending queue.
        prop_assert_eq!(from.context_usage() + agents[k].context_tokens, before);
        prop_assert_eq!(to.pending().iter().copied().collect::<Vec<_>>(), vec![AgentIx(k)]);
        prop_assert_eq!(agents[k].instance, InstanceIx(1));
        to.admit(&agents[k]).unwrap();
        prop_assert_eq!(from.context_usage() + to.context_usage(), before);
    }

    #[test]
    fn unfinished_agents_never_affect_metrics(
        done in prop::collection::vec(0.1f64..100.0, 0..20),
        open in prop::collection::vec(0.0f64..100.0, 0..20),
        tau in 1.0f64..60.0,
    ) {
        let metric = |tp: f64, completed: bool| AgentMetrics { completed, throughput: Some(tp), ..AgentMetrics::default() };
        let finished: Vec<_> = done.iter().map(|&x| metric(x, true)).collect();
        let mut all = finished.clone();
        all.extend(open.iter().map(|&x| metric(x, false)));
        prop_assert_eq!(slo_attainment(&all, tau), slo_attainment(&finished, tau));
        prop_assert_eq!(percentile_throughput(&all, 0.05), percentile_throughput(&finished, 0.05));
    }
}

#[derive(Debug, Clone)]
struct Scenario {
    agents: Vec<AgentTrace>,
    config: SimConfig,
}

fn arb_scenario() -> impl Strategy<Value = Scenario> {
    let turn = (1u64..6_000, 1u64..300, 0.0f64..6.0).prop_map(|(p, d, t)| TurnRecord {
        prefill_tokens: p,
        decode_tokens: d,
        tool_time: t,
    });
    let agent = (0.0f64..8.0, prop::collection::vec(turn, 1..18));
    let controller = prop_oneof![
        Just((ControllerKind::Off, true)),
        Just((ControllerKind::Fixed, true)),
        Just((ControllerKind::ContextAware, true)),
        Just((ControllerKind::ContextAware, false)),
    ];
    let policy = prop_oneof![
        Just(RoutingPolicy::ContextAware),
        Just(RoutingPolicy::RoundRobin),
        Just(RoutingPolicy::LeastLoaded),
    ];
    (
        prop::collection::vec(agent, 0..24),
        1usize..4,
        controller,
        policy,
        5_000u64..60_000,
        1usize..5,
        prop_oneof![Just(0.0), 0.1f64..3.0],
    )
        .prop_map(|(agents, instances, (kind, avoid), policy, capacity, batch, delay)| {
            let mut t = 0.0;
            let agents = agents
                .into_iter()
                .enumerate()
                .map(|(k, (gap, turns))| {
                    t += gap;
                    AgentTrace {
                        agent_id: AgentId::from(format!("a{k}").as_str()),
                        arrival_time: t,
                        turns,
                    }
                })
                .collect();
            let mut config = SimConfig {
                instances,
                sim_duration: 150.0,
                ..SimConfig::default()
            };
            config.controller.kind = kind;
            config.controller.thrash_avoidance = avoid;
            config.controller.level_mhz = Some(810);
            config.router.policy = policy;
            config.router.migration_delay = delay;
            config.instance.capacity_tokens = capacity;
            config.instance.max_batch = Some(batch);
            Scenario { agents, config }
        })
}

fn check_result(s: &Scenario, r: &SimulationResult) -> Result<(), TestCaseError> {
    let window = s.config.sim_duration;
    let capacity = s.config.instance.capacity_tokens;

    // Segments tile the window and re-integrate against prefix sums.
    let mut energy = 0.0;
    for segs in &r.segments {
        let mut prefix = vec![0.0];
        let mut cursor = 0.0;
        for g in segs {
            prop_assert_eq!(g.start, cursor);
            prop_assert!(g.end >= g.start);
            prefix.push(prefix.last().unwrap() + g.watts * (g.end - g.start));
            cursor = g.end;
        }
        prop_assert_eq!(cursor, window);
        energy += prefix.last().unwrap();
    }
    let integrated = integrate_power(&r.power_series(), window).unwrap();
    prop_assert!(rel_close(integrated, energy / window, 1e-12));
    prop_assert!(rel_close(r.system.average_power, energy / window, 1e-12));

    for sample in &r.samples {
        prop_assert_eq!(sample.thrashing, sample.usage > capacity);
    }

    // Every arrived agent sits on exactly one instance until it finishes.
    for tick in r.samples.chunk_by(|a, b| a.time == b.time) {
        let t = tick[0].time;
        let resident: usize = tick.iter().map(|x| x.pending + x.ongoing).sum();
        let live = r
            .agents
            .iter()
            .filter(|a| a.arrival_time <= t && a.finish_time.is_none_or(|f| f > t))
            .count();
        prop_assert_eq!(resident, live, "at t={}", t);
    }

    // Causality and work conservation per agent.
    prop_assert!(r.arrived() <= s.agents.len());
    for (k, m) in r.agents.iter().enumerate() {
        let trace = &s.agents[k];
        prop_assert_eq!(&m.agent_id, &trace.agent_id);
        let logs: Vec<_> = r.turns.iter().filter(|t| t.agent.0 == k).collect();
        prop_assert_eq!(logs.len(), m.completed_turns);
        prop_assert_eq!(m.completed, m.completed_turns == trace.turns.len());
        let mut expected_issue = trace.arrival_time;
        let (mut decode, mut llm) = (0u64, 0.0);
        for (j, log) in logs.iter().enumerate() {
            prop_assert_eq!(log.turn, j);
            prop_assert_eq!(log.issued_at, expected_issue);
            prop_assert!(log.started_at >= log.issued_at && log.completed_at >= log.started_at);
            prop_assert!(log.completed_at <= window);
            prop_assert_eq!(log.decode_tokens, trace.turns[j].decode_tokens);
            expected_issue = log.completed_at + trace.turns[j].tool_time;
            decode += log.decode_tokens;
            llm += log.latency();
        }
        prop_assert_eq!(m.total_decode_tokens, decode);
        if let Some(tp) = m.throughput {
            prop_assert!(rel_close(tp, decode as f64 / llm, 1e-9));
        }
        if s.config.router.policy == RoutingPolicy::ContextAware {
            let interval = s.config.router.reassign_interval as usize;
            for w in logs.windows(2) {
                if w[0].instance != w[1].instance {
                    prop_assert_eq!((w[1].turn + 1) % interval, 0);
                }
            }
        }
    }
    let in_flight: usize = r.segments.iter().map(|segs| {
        let g = segs.last().unwrap();
        g.pending + g.queued + g.running
    }).sum();
    let unfinished = r.agents.iter().filter(|a| !a.completed).count();
    prop_assert!(in_flight <= unfinished);

    // Levels move only at epoch boundaries, and only under the full controller.
    let epoch = s.config.controller.epoch_length;
    for segs in &r.segments {
        for w in segs.windows(2) {
            if w[0].level != w[1].level {
                prop_assert_eq!(s.config.controller.kind, ControllerKind::ContextAware);
                let k = w[1].start / epoch;
                prop_assert!((k - k.round()).abs() < 1e-9, "level change at {}", w[1].start);
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn simulation_invariants(s in arb_scenario()) {
        let r = simulate(&s.config, &s.agents).unwrap();
        check_result(&s, &r)?;
        prop_assert_eq!(&r, &simulate(&s.config, &s.agents).unwrap());
    }
}
