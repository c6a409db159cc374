use ctxsim_core::workload::{parse_trace, write_trace};
use ctxsim_core::{generate_workload, AgentId, AgentTrace, TurnRecord, WorkloadSpec};
use proptest::prelude::*;

#[test]
fn turn_counts_are_heavy_tailed() {
    let spec = WorkloadSpec {
        arrival_rate: 1.0,
        duration: 12_000.0,
        seed: 5,
        ..WorkloadSpec::default()
    };
    let agents = generate_workload(&spec).unwrap();
    assert!(agents.len() >= 10_000);
    let mut counts: Vec<usize> = agents.iter().map(|a| a.turns.len()).collect();
    counts.sort_unstable();
    let rank = |p: f64| counts[((p * counts.len() as f64).ceil() as usize).max(1) - 1];
    let (median, p99) = (rank(0.5), rank(0.99));
    assert!(p99 > 5 * median, "p99 {p99} median {median}");
}

fn arb_agents() -> impl Strategy<Value = Vec<AgentTrace>> {
    let turn = (1u64..1_000_000, 1u64..100_000, 0.0f64..1e4).prop_map(|(p, d, t)| TurnRecord {
        prefill_tokens: p,
        decode_tokens: d,
        tool_time: t,
    });
    let agent = (0.0f64..1e6, prop::collection::vec(turn, 1..12), "[a-z0-9\"\\\\ ]{0,6}");
    prop::collection::vec(agent, 0..20).prop_map(|agents| {
        agents
            .into_iter()
            .enumerate()
            .map(|(k, (arrival_time, turns, tag))| AgentTrace {
                agent_id: AgentId::from(format!("{k}-{tag}").as_str()),
                arrival_time,
                turns,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn trace_round_trips(agents in arb_agents()) {
        let mut buf = Vec::new();
        write_trace(&agents, &mut buf).unwrap();
        let back = parse_trace(buf.as_slice()).unwrap();
        prop_assert_eq!(back, agents);
    }

    #[test]
    fn generation_is_pure_and_valid(seed in any::<u64>(), rate in 0.01f64..2.0) {
        let spec = WorkloadSpec { arrival_rate: rate, duration: 200.0, seed, ..WorkloadSpec::default() };
        let a = generate_workload(&spec).unwrap();
        prop_assert_eq!(&a, &generate_workload(&spec).unwrap());
        for agent in &a {
            prop_assert!(agent.arrival_time >= 0.0 && agent.arrival_time < 200.0);
            prop_assert!(!agent.turns.is_empty());
            for t in &agent.turns {
                prop_assert!(t.prefill_tokens >= 1 && t.decode_tokens >= 1);
                prop_assert!(t.tool_time >= 0.0);
            }
        }
    }
}
