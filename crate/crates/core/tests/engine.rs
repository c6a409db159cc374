use ctxsim_core::{
    simulate, AgentId, AgentTrace, ControllerKind, FrequencyTable, LevelIx, SimConfig, TurnRecord, WorkloadSource,
    WorkloadSpec,
};

fn turn(prefill_tokens: u64, decode_tokens: u64, tool_time: f64) -> TurnRecord {
    TurnRecord {
        prefill_tokens,
        decode_tokens,
        tool_time,
    }
}

fn agent(id: &str, arrival_time: f64, turns: Vec<TurnRecord>) -> AgentTrace {
    AgentTrace {
        agent_id: AgentId::from(id),
        arrival_time,
        turns,
    }
}

fn config(kind: ControllerKind, window: f64) -> SimConfig {
    let mut c = SimConfig {
        workload: WorkloadSource::Generate(WorkloadSpec::default()),
        sim_duration: window,
        ..SimConfig::default()
    };
    c.controller.kind = kind;
    c
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn no_agents_draw_idle_power() {
    let r = simulate(&config(ControllerKind::ContextAware, 100.0), &[]).unwrap();
    let idle = FrequencyTable::default().level(LevelIx(0)).idle_power;
    assert_eq!(r.system.average_power, idle);
    assert_eq!(r.system.slo_attainment, None);
    assert_eq!(r.system.p5_throughput, None);
    assert_eq!(r.system.job_throughput, 0.0);
    assert_eq!(r.system.thrash_fraction, 0.0);
    assert!(r.system.thrash_fraction.is_sign_positive());
}

#[test]
fn single_agent_at_top_level() {
    // At the top level 12,000 prefill tokens take 1 s and 120 decode tokens 1 s.
    let table = FrequencyTable::default();
    let top = table.level(table.top());
    let a = agent("a", 3.0, vec![turn(12_000, 120, 4.0), turn(6_000, 240, 0.0)]);
    let r = simulate(&config(ControllerKind::Off, 100.0), &[a]).unwrap();

    assert_eq!(r.turns.len(), 2);
    let (t0, t1) = (&r.turns[0], &r.turns[1]);
    assert_eq!(t0.issued_at, 3.0);
    assert!(close(t0.completed_at, 5.0));
    assert!(close(t1.issued_at, 9.0));
    assert!(close(t1.completed_at, 9.0 + 0.5 + 2.0));

    let m = &r.agents[0];
    assert!(m.completed);
    assert!(close(m.total_llm_time, 4.5));
    assert!(close(m.throughput.unwrap(), 360.0 / 4.5));
    let busy = 4.5;
    let expected = (top.active_power * busy + top.idle_power * (100.0 - busy)) / 100.0;
    assert!(close(r.system.average_power, expected));
    assert_eq!(r.system.slo_attainment, Some(1.0));
}

#[test]
fn queueing_for_admission_counts_as_llm_time() {
    // The full controller admits only at epoch ticks, so an agent arriving
    // at 0.25 s waits until 1 s.
    let a = agent("a", 0.25, vec![turn(1, 1, 0.0)]);
    let r = simulate(&config(ControllerKind::ContextAware, 10.0), &[a]).unwrap();
    let t = &r.turns[0];
    assert_eq!(t.issued_at, 0.25);
    assert_eq!(t.started_at, 1.0);
    assert!(r.agents[0].total_llm_time > 0.75);
}

#[test]
fn boost_rescales_a_running_turn() {
    let table = FrequencyTable::default();
    let (low, top) = (table.level(LevelIx(0)), table.level(table.top()));
    let base = |p: f64, d: f64, l: &ctxsim_core::FrequencyLevel| p / l.prefill_rate + d / l.decode_rate;

    // The first turn waits for admission at t=1, so its throughput is far
    // below the target and the epoch at t=2 boosts to the top level while
    // the second turn is in flight.
    let a = agent("a", 0.5, vec![turn(1, 1, 0.5), turn(1_200, 120, 0.0)]);
    let r = simulate(&config(ControllerKind::ContextAware, 20.0), &[a]).unwrap();

    let first_done = 1.0 + base(1.0, 1.0, low);
    assert!(close(r.turns[0].completed_at, first_done));
    let start = first_done + 0.5;
    assert!(close(r.turns[1].started_at, start));
    let slow = base(1_200.0, 120.0, low);
    let remaining = 1.0 - (2.0 - start) / slow;
    let expected = 2.0 + remaining * base(1_200.0, 120.0, top);
    assert!(expected < 3.0);
    assert!(close(r.turns[1].completed_at, expected), "{} vs {expected}", r.turns[1].completed_at);

    let boosted = r.decisions.iter().find(|d| d.time == 2.0).unwrap();
    assert!(boosted.boosted);
    assert_eq!(boosted.level, table.top().0);
}

#[test]
fn batch_limit_queues_fifo() {
    let mut c = config(ControllerKind::Off, 50.0);
    c.instance.max_batch = Some(1);
    let agents = vec![
        agent("a", 0.0, vec![turn(12_000, 120, 0.0)]),
        agent("b", 0.1, vec![turn(12_000, 120, 0.0)]),
    ];
    let r = simulate(&c, &agents).unwrap();
    let b = r.turns.iter().find(|t| t.agent.0 == 1).unwrap();
    assert!(close(b.started_at, 2.0));
    assert!(close(b.completed_at, 4.0));
    assert!(close(b.latency(), 3.9));
}

#[test]
fn agents_arriving_after_the_window_are_ignored() {
    let agents = vec![agent("a", 1.0, vec![turn(10, 10, 0.0)]), agent("b", 60.0, vec![turn(10, 10, 0.0)])];
    let r = simulate(&config(ControllerKind::Off, 50.0), &agents).unwrap();
    assert_eq!(r.arrived(), 1);
}

#[test]
fn runs_are_deterministic() {
    let mut c = config(ControllerKind::ContextAware, 900.0);
    c.instances = 2;
    c.seed = 11;
    let agents = c.load_agents().unwrap();
    let a = simulate(&c, &agents).unwrap();
    let b = simulate(&c, &agents).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unsorted_agents_are_rejected() {
    let agents = vec![agent("a", 5.0, vec![turn(1, 1, 0.0)]), agent("b", 1.0, vec![turn(1, 1, 0.0)])];
    assert!(simulate(&config(ControllerKind::Off, 10.0), &agents).is_err());
}
