use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::event::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub node: NodeId,
    pub start: u64,
    pub end: u64,
    pub collided: bool,
}

/// Single collision domain with ideal carrier sensing: every node hears every
/// other node, and two frames that overlap in time destroy each other.
#[derive(Debug, Clone)]
pub struct Medium {
    active: Vec<Transmission>,
    /// Channel held by a link-layer acknowledgment until this instant.
    reserved_until: u64,
    rng: ChaCha8Rng,
}

impl Medium {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { active: Vec::new(), reserved_until: 0, rng }
    }

    pub fn busy_at(&self, t: u64) -> bool {
        t < self.reserved_until || self.active.iter().any(|tx| tx.start <= t && t < tx.end)
    }

    pub fn active(&self) -> &[Transmission] {
        &self.active
    }

    /// Puts a frame on air. Returns whether it overlaps anything already
    /// transmitting; every overlapped frame is marked collided as well.
    pub fn start(&mut self, node: NodeId, start: u64, end: u64) -> bool {
        let mut collided = false;
        for tx in self.active.iter_mut().filter(|tx| tx.end > start) {
            tx.collided = true;
            collided = true;
        }
        self.active.push(Transmission { node, start, end, collided });
        collided
    }

    pub fn finish(&mut self, node: NodeId) -> Option<Transmission> {
        let idx = self.active.iter().position(|tx| tx.node == node)?;
        Some(self.active.swap_remove(idx))
    }

    pub fn reserve_until(&mut self, t: u64) {
        self.reserved_until = self.reserved_until.max(t);
    }

    /// Independent per-frame loss draw.
    pub fn lost(&mut self, p_loss: f64) -> bool {
        let u: f64 = self.rng.random();
        u < p_loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{sub_stream, Stream};

    #[test]
    fn overlap_marks_both_frames() {
        let mut m = Medium::new(sub_stream(1, Stream::Channel, 0));
        assert!(!m.start(0, 100, 1540));
        assert!(m.busy_at(100));
        assert!(m.busy_at(1539));
        assert!(!m.busy_at(1540));
        assert!(m.start(2, 200, 1640));
        assert!(m.finish(0).unwrap().collided);
        assert!(m.finish(2).unwrap().collided);
        assert!(m.finish(2).is_none());
    }

    #[test]
    fn back_to_back_frames_do_not_collide() {
        let mut m = Medium::new(sub_stream(1, Stream::Channel, 0));
        m.start(0, 0, 1000);
        let first = m.finish(0).unwrap();
        assert!(!m.start(1, 1000, 2000));
        assert!(!first.collided);
    }

    #[test]
    fn reservation_keeps_channel_busy() {
        let mut m = Medium::new(sub_stream(1, Stream::Channel, 0));
        m.reserve_until(500);
        assert!(m.busy_at(499));
        assert!(!m.busy_at(500));
    }
}
