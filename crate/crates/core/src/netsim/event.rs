use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::transport::{AckRecord, StatusUpdate};

/// Index of a radio node. Loop `i` owns sensor node `2i` and controller
/// node `2i + 1`.
pub type NodeId = usize;

pub fn sensor_node(loop_id: usize) -> NodeId {
    2 * loop_id
}

pub fn controller_node(loop_id: usize) -> NodeId {
    2 * loop_id + 1
}

pub fn loop_of(node: NodeId) -> usize {
    node / 2
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    SampleTick {
        step: u64,
    },
    /// Clear channel assessment after a backoff expires.
    MacAttempt {
        node: NodeId,
    },
    TxStart {
        node: NodeId,
    },
    FrameEnd {
        node: NodeId,
    },
    /// Sender learns whether its frame got through.
    MacResult {
        node: NodeId,
        success: bool,
    },
    Delivery {
        update: StatusUpdate,
    },
    AckDelivery {
        ack: AckRecord,
    },
    TlTimeout {
        loop_id: usize,
        gen_step: u64,
    },
    PollGrant {
        node: NodeId,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::SampleTick { .. } => "sample_tick",
            EventKind::MacAttempt { .. } => "mac_attempt",
            EventKind::TxStart { .. } => "tx_start",
            EventKind::FrameEnd { .. } => "frame_end",
            EventKind::MacResult { .. } => "mac_result",
            EventKind::Delivery { .. } => "delivery",
            EventKind::AckDelivery { .. } => "ack_delivery",
            EventKind::TlTimeout { .. } => "tl_timeout",
            EventKind::PollGrant { .. } => "poll_grant",
        }
    }

    /// Node the event concerns, if any.
    pub fn node(&self) -> Option<NodeId> {
        match self {
            EventKind::SampleTick { .. } => None,
            EventKind::MacAttempt { node }
            | EventKind::TxStart { node }
            | EventKind::FrameEnd { node }
            | EventKind::MacResult { node, .. }
            | EventKind::PollGrant { node } => Some(*node),
            EventKind::Delivery { update } => Some(controller_node(update.loop_id)),
            EventKind::AckDelivery { ack } => Some(sensor_node(ack.loop_id)),
            EventKind::TlTimeout { loop_id, .. } => Some(sensor_node(*loop_id)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub time: u64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (time, seq).
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Global event queue. Ties in time are broken by insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<SimEvent>,
    next_seq: u64,
    now: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: u64, kind: EventKind) {
        assert!(time >= self.now, "event scheduled in the past ({time} < {})", self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent { time, seq, kind });
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        let ev = self.heap.pop()?;
        self.now = ev.time;
        Some(ev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_then_insertion_order() {
        let mut q = EventQueue::new();
        q.schedule(30, EventKind::PollGrant { node: 0 });
        q.schedule(10, EventKind::PollGrant { node: 1 });
        q.schedule(10, EventKind::PollGrant { node: 2 });
        q.schedule(20, EventKind::PollGrant { node: 3 });
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| e.kind.node().unwrap()).collect();
        assert_eq!(order, vec![1, 2, 3, 0]);
        assert_eq!(q.now(), 30);
    }

    #[test]
    #[should_panic]
    fn rejects_past_events() {
        let mut q = EventQueue::new();
        q.schedule(10, EventKind::SampleTick { step: 0 });
        q.pop();
        q.schedule(5, EventKind::SampleTick { step: 1 });
    }

    #[test]
    fn node_layout() {
        assert_eq!(sensor_node(3), 6);
        assert_eq!(controller_node(3), 7);
        assert_eq!(loop_of(7), 3);
        assert_eq!(loop_of(6), 3);
    }
}
