//! Discrete-event model of the shared wireless medium.
//!
//! Every node owns a drop-tail FIFO. Channel access is either unslotted
//! CSMA with binary exponential backoff, or collision-free round-robin
//! polling by a gateway. Data frames and transport ACKs use the same buffers,
//! the same access scheme and the same channel.

pub mod event;
pub mod mac;
pub mod medium;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{sub_stream, Stream};
pub use event::{controller_node, loop_of, sensor_node, EventKind, EventQueue, NodeId, SimEvent};
pub use mac::{Frame, MacState};
pub use medium::{Medium, Transmission};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MacMode {
    #[default]
    Csma,
    Polling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsmaConfig {
    pub be_min: u32,
    pub be_max: u32,
    pub max_backoffs: u32,
    pub max_frame_retries: u32,
    pub backoff_period_us: u64,
    /// Delay between a clear channel assessment and the first bit on air.
    pub turnaround_us: u64,
    /// Time the sender waits for the link-layer acknowledgment after its
    /// frame ends. A successful frame holds the channel for this long.
    pub mac_ack_us: u64,
    /// Count a channel access failure as one failed transmission attempt, so
    /// the frame is retried under `max_frame_retries`, instead of dropping it.
    pub retry_on_access_failure: bool,
}

impl Default for CsmaConfig {
    fn default() -> Self {
        Self {
            be_min: 3,
            be_max: 5,
            max_backoffs: 4,
            max_frame_retries: 3,
            backoff_period_us: 320,
            turnaround_us: 192,
            mac_ack_us: 544,
            retry_on_access_failure: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PollingConfig {
    pub t_poll_us: u64,
}

impl Default for PollingConfig {
    fn default() -> Self {
        Self { t_poll_us: 800 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacConfig {
    pub mode: MacMode,
    pub phy_rate_kbps: u64,
    pub payload_bytes: u64,
    pub overhead_bytes: u64,
    pub ack_frame_bytes: u64,
    pub buffer_capacity: usize,
    pub p_loss: f64,
    /// Per-loop override of `p_loss`, indexed by loop id.
    pub p_loss_per_loop: Option<Vec<f64>>,
    pub csma: CsmaConfig,
    pub polling: PollingConfig,
}

impl Default for MacConfig {
    fn default() -> Self {
        Self {
            mode: MacMode::Csma,
            phy_rate_kbps: 250,
            payload_bytes: 20,
            overhead_bytes: 25,
            ack_frame_bytes: 30,
            buffer_capacity: 8,
            p_loss: 0.02,
            p_loss_per_loop: None,
            csma: CsmaConfig::default(),
            polling: PollingConfig::default(),
        }
    }
}

impl MacConfig {
    /// On-air duration of `bytes` at the PHY rate, in microseconds.
    pub fn airtime_us(&self, bytes: u64) -> u64 {
        (bytes * 8 * 1000).div_ceil(self.phy_rate_kbps)
    }

    pub fn data_airtime_us(&self) -> u64 {
        self.airtime_us(self.payload_bytes + self.overhead_bytes)
    }

    pub fn ack_airtime_us(&self) -> u64 {
        self.airtime_us(self.ack_frame_bytes)
    }

    pub fn frame_airtime_us(&self, frame: &Frame) -> u64 {
        match frame {
            Frame::Data(_) => self.data_airtime_us(),
            Frame::Ack(_) => self.ack_airtime_us(),
        }
    }

    pub fn loss_for_node(&self, node: NodeId) -> f64 {
        self.p_loss_per_loop.as_ref().and_then(|v| v.get(loop_of(node)).copied()).unwrap_or(self.p_loss)
    }

    /// Upper bound on one CSMA attempt, from the start of its first backoff
    /// to the sender learning the outcome. Retries keep the raised backoff
    /// exponent, so every backoff is bounded by the `be_max` window.
    pub fn worst_case_attempt_us(&self, airtime: u64) -> u64 {
        let c = &self.csma;
        let backoffs = u64::from(c.max_backoffs + 1) * ((1u64 << c.be_max) - 1) * c.backoff_period_us;
        backoffs + c.turnaround_us + airtime + c.mac_ack_us
    }
}

/// Frame counters for one frame type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FrameCounters {
    pub enqueued: u64,
    pub buffer_drops: u64,
    pub delivered: u64,
    /// Frames abandoned by the MAC: retry cap or channel access failure.
    pub mac_drops: u64,
    pub channel_access_failures: u64,
    pub collided_attempts: u64,
    pub lost_attempts: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NetCounters {
    pub data: FrameCounters,
    pub ack: FrameCounters,
    pub polls: u64,
}

impl NetCounters {
    fn frame(&mut self, data: bool) -> &mut FrameCounters {
        if data {
            &mut self.data
        } else {
            &mut self.ack
        }
    }
}

/// Shared medium plus every node's MAC.
#[derive(Debug)]
pub struct Network {
    config: MacConfig,
    nodes: Vec<MacState>,
    active: Vec<bool>,
    backoff_rngs: Vec<ChaCha8Rng>,
    medium: Medium,
    counters: NetCounters,
    polling_running: bool,
    draining: bool,
}

impl Network {
    pub fn new(config: MacConfig, n_nodes: usize, seed: u64) -> Self {
        let nodes = (0..n_nodes).map(|_| MacState::new(config.buffer_capacity, config.csma.be_min)).collect();
        let backoff_rngs = (0..n_nodes).map(|n| sub_stream(seed, Stream::Backoff, n as u64)).collect();
        Self {
            medium: Medium::new(sub_stream(seed, Stream::Channel, 0)),
            config,
            nodes,
            active: vec![false; n_nodes],
            backoff_rngs,
            counters: NetCounters::default(),
            polling_running: false,
            draining: false,
        }
    }

    pub fn config(&self) -> &MacConfig {
        &self.config
    }

    pub fn counters(&self) -> &NetCounters {
        &self.counters
    }

    pub fn node(&self, node: NodeId) -> &MacState {
        &self.nodes[node]
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn occupancy(&self, node: NodeId) -> usize {
        self.nodes[node].buffer.len()
    }

    /// Frames still queued anywhere.
    pub fn backlog(&self) -> usize {
        self.nodes.iter().map(|n| n.buffer.len()).sum()
    }

    /// Brings a node online. In polling mode the gateway starts cycling with
    /// the first activation.
    pub fn activate(&mut self, q: &mut EventQueue, node: NodeId, now: u64) {
        self.active[node] = true;
        if self.config.mode == MacMode::Polling && !self.polling_running {
            self.polling_running = true;
            q.schedule(now, EventKind::PollGrant { node });
        }
    }

    /// After this call the gateway stops polling once every buffer is empty,
    /// so the event queue can run dry.
    pub fn drain(&mut self) {
        self.draining = true;
    }

    /// Hands a frame to `node`'s MAC. Returns `false` on drop-tail.
    pub fn enqueue_frame(&mut self, q: &mut EventQueue, node: NodeId, frame: Frame, now: u64) -> bool {
        let data = frame.is_data();
        self.counters.frame(data).enqueued += 1;
        if !self.nodes[node].push(frame) {
            self.counters.frame(data).buffer_drops += 1;
            return false;
        }
        if self.config.mode == MacMode::Csma && !self.nodes[node].busy {
            self.start_head(q, node, now);
        }
        true
    }

    /// Advances the MAC state machine for a network event and returns
    /// nothing; deliveries are scheduled as events of their own.
    pub fn handle(&mut self, q: &mut EventQueue, ev: &SimEvent) {
        let now = ev.time;
        match ev.kind {
            EventKind::MacAttempt { node } => self.csma_attempt(q, node, now),
            EventKind::TxStart { node } => self.tx_start(q, node, now),
            EventKind::FrameEnd { node } => self.frame_end(q, node, now),
            EventKind::MacResult { node, success } => self.mac_result(q, node, success, now),
            EventKind::PollGrant { node } => self.poll_grant(q, node, now),
            _ => {}
        }
    }

    fn start_head(&mut self, q: &mut EventQueue, node: NodeId, now: u64) {
        let be_min = self.config.csma.be_min;
        let n = &mut self.nodes[node];
        n.busy = true;
        n.reset_head(be_min);
        self.schedule_backoff(q, node, now);
    }

    fn schedule_backoff(&mut self, q: &mut EventQueue, node: NodeId, now: u64) {
        let be = self.nodes[node].backoff_exponent;
        let slots = self.backoff_rngs[node].random_range(0..(1u64 << be));
        q.schedule(now + slots * self.config.csma.backoff_period_us, EventKind::MacAttempt { node });
    }

    fn csma_attempt(&mut self, q: &mut EventQueue, node: NodeId, now: u64) {
        if !self.medium.busy_at(now) {
            q.schedule(now + self.config.csma.turnaround_us, EventKind::TxStart { node });
            return;
        }
        let c = &self.config.csma;
        let n = &mut self.nodes[node];
        n.csma_backoffs_used += 1;
        n.backoff_exponent = (n.backoff_exponent + 1).min(c.be_max);
        if n.csma_backoffs_used > c.max_backoffs {
            let data = n.head().is_some_and(Frame::is_data);
            self.counters.frame(data).channel_access_failures += 1;
            if self.config.csma.retry_on_access_failure {
                self.mac_result(q, node, false, now);
            } else {
                self.counters.frame(data).mac_drops += 1;
                self.finish_head(q, node, now);
            }
        } else {
            self.schedule_backoff(q, node, now);
        }
    }

    fn tx_start(&mut self, q: &mut EventQueue, node: NodeId, now: u64) {
        let airtime = self.config.frame_airtime_us(self.nodes[node].head().expect("transmitting without a frame"));
        self.medium.start(node, now, now + airtime);
        q.schedule(now + airtime, EventKind::FrameEnd { node });
    }

    fn frame_end(&mut self, q: &mut EventQueue, node: NodeId, now: u64) {
        let tx = self.medium.finish(node).expect("frame end without transmission");
        let lost = self.medium.lost(self.config.loss_for_node(node));
        let frame = self.nodes[node].head().expect("frame end without a frame").clone();
        let counters = self.counters.frame(frame.is_data());
        if tx.collided {
            counters.collided_attempts += 1;
        } else if lost {
            counters.lost_attempts += 1;
        }
        let success = !tx.collided && !lost;
        if success {
            self.schedule_delivery(q, frame, now);
        }
        match self.config.mode {
            MacMode::Csma => {
                let wait = self.config.csma.mac_ack_us;
                if success {
                    self.medium.reserve_until(now + wait);
                }
                q.schedule(now + wait, EventKind::MacResult { node, success });
            }
            MacMode::Polling => {
                self.nodes[node].busy = false;
                self.settle_attempt(node, success);
                self.schedule_next_poll(q, node, now);
            }
        }
    }

    fn schedule_delivery(&mut self, q: &mut EventQueue, frame: Frame, now: u64) {
        match frame {
            Frame::Data(mut update) => {
                update.recv_time = Some(now);
                self.counters.data.delivered += 1;
                q.schedule(now, EventKind::Delivery { update });
            }
            Frame::Ack(mut ack) => {
                ack.ack_arrival_time = Some(now);
                self.counters.ack.delivered += 1;
                q.schedule(now, EventKind::AckDelivery { ack });
            }
        }
    }

    /// Applies the outcome of one attempt to the head frame. Returns whether
    /// the frame left the buffer.
    fn settle_attempt(&mut self, node: NodeId, success: bool) -> bool {
        let c = &self.config.csma;
        let n = &mut self.nodes[node];
        if success {
            n.buffer.pop_front();
            n.reset_head(c.be_min);
            return true;
        }
        n.frame_retries_used += 1;
        if n.frame_retries_used > c.max_frame_retries {
            let data = n.buffer.pop_front().is_some_and(|f| f.is_data());
            n.reset_head(c.be_min);
            self.counters.frame(data).mac_drops += 1;
            return true;
        }
        n.backoff_exponent = (n.backoff_exponent + 1).min(c.be_max);
        n.csma_backoffs_used = 0;
        false
    }

    fn mac_result(&mut self, q: &mut EventQueue, node: NodeId, success: bool, now: u64) {
        if self.settle_attempt(node, success) {
            self.next_head(q, node, now);
        } else {
            self.schedule_backoff(q, node, now);
        }
    }

    fn finish_head(&mut self, q: &mut EventQueue, node: NodeId, now: u64) {
        let be_min = self.config.csma.be_min;
        self.nodes[node].buffer.pop_front();
        self.nodes[node].reset_head(be_min);
        self.next_head(q, node, now);
    }

    fn next_head(&mut self, q: &mut EventQueue, node: NodeId, now: u64) {
        self.nodes[node].busy = false;
        if !self.nodes[node].buffer.is_empty() {
            self.start_head(q, node, now);
        }
    }

    fn next_active(&self, after: NodeId) -> Option<NodeId> {
        let n = self.nodes.len();
        (1..=n).map(|d| (after + d) % n).find(|&c| self.active[c])
    }

    fn schedule_next_poll(&mut self, q: &mut EventQueue, current: NodeId, now: u64) {
        if self.draining && self.backlog() == 0 {
            self.polling_running = false;
            return;
        }
        if let Some(next) = self.next_active(current) {
            q.schedule(now, EventKind::PollGrant { node: next });
        }
    }

    fn poll_grant(&mut self, q: &mut EventQueue, node: NodeId, now: u64) {
        self.counters.polls += 1;
        let t_poll = self.config.polling.t_poll_us;
        match self.nodes[node].head() {
            None => self.schedule_next_poll(q, node, now + t_poll),
            Some(frame) => {
                let start = now + t_poll;
                let end = start + self.config.frame_airtime_us(frame);
                self.nodes[node].busy = true;
                self.medium.start(node, start, end);
                q.schedule(end, EventKind::FrameEnd { node });
            }
        }
    }
}
