use std::collections::VecDeque;

use crate::transport::{AckRecord, StatusUpdate};

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Data(StatusUpdate),
    Ack(AckRecord),
}

impl Frame {
    pub fn is_data(&self) -> bool {
        matches!(self, Frame::Data(_))
    }
}

/// Per-node MAC state: a drop-tail FIFO and the CSMA counters of the frame at
/// its head.
#[derive(Debug, Clone)]
pub struct MacState {
    pub buffer: VecDeque<Frame>,
    pub capacity: usize,
    pub backoff_exponent: u32,
    pub csma_backoffs_used: u32,
    pub frame_retries_used: u32,
    /// Head-of-line frame is being served.
    pub busy: bool,
    pub max_occupancy: usize,
}

impl MacState {
    pub fn new(capacity: usize, be_min: u32) -> Self {
        Self {
            buffer: VecDeque::with_capacity(capacity),
            capacity,
            backoff_exponent: be_min,
            csma_backoffs_used: 0,
            frame_retries_used: 0,
            busy: false,
            max_occupancy: 0,
        }
    }

    /// Appends a frame unless the buffer is full.
    pub fn push(&mut self, frame: Frame) -> bool {
        if self.buffer.len() >= self.capacity {
            return false;
        }
        self.buffer.push_back(frame);
        self.max_occupancy = self.max_occupancy.max(self.buffer.len());
        true
    }

    pub fn head(&self) -> Option<&Frame> {
        self.buffer.front()
    }

    pub fn reset_head(&mut self, be_min: u32) {
        self.backoff_exponent = be_min;
        self.csma_backoffs_used = 0;
        self.frame_retries_used = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ack(g: u64) -> Frame {
        Frame::Ack(AckRecord { loop_id: 0, gen_step: g, recv_step: g, ack_arrival_time: None })
    }

    #[test]
    fn drop_tail_at_capacity() {
        let mut m = MacState::new(8, 3);
        for g in 0..8 {
            assert!(m.push(ack(g)));
        }
        assert!(!m.push(ack(8)));
        assert_eq!(m.buffer.len(), 8);
        assert_eq!(m.head(), Some(&ack(0)));
        assert_eq!(m.max_occupancy, 8);
    }
}
