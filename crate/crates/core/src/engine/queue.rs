use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::instance::{AgentIx, InstanceIx};

/// Event payloads. The declaration order is the tie-break priority at equal
/// timestamps: epoch ticks first, then completions, then issues, then
/// arrivals, then sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    EpochTick,
    /// Earliest running request on the instance finishes. Stale when the
    /// version no longer matches the instance's.
    TurnComplete { instance: InstanceIx, version: u64 },
    ToolDone { agent: AgentIx },
    /// A migrated agent's delayed request becomes runnable.
    TurnIssue { agent: AgentIx },
    AgentArrival { agent: AgentIx },
    SampleTick,
}

impl EventKind {
    fn priority(&self) -> u8 {
        match self {
            EventKind::EpochTick => 0,
            EventKind::TurnComplete { .. } => 1,
            EventKind::ToolDone { .. } | EventKind::TurnIssue { .. } => 2,
            EventKind::AgentArrival { .. } => 3,
            EventKind::SampleTick => 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    seq: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so that BinaryHeap pops the earliest event.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.kind.priority().cmp(&self.kind.priority()))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, time: f64, kind: EventKind) {
        debug_assert!(time.is_finite(), "non-finite event time");
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, kind, seq });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }
}
