//! Congestion-window rules for the retransmission-free TCP variants.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TahoeConfig {
    pub initial_cwnd: f64,
    pub initial_ssthresh: f64,
}

impl Default for TahoeConfig {
    fn default() -> Self {
        Self { initial_cwnd: 1.0, initial_ssthresh: 64.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VegasConfig {
    pub initial_cwnd: f64,
    /// Lower bound on queued packets, in packets.
    pub alpha: f64,
    /// Upper bound on queued packets, in packets.
    pub beta: f64,
}

impl Default for VegasConfig {
    fn default() -> Self {
        Self { initial_cwnd: 1.0, alpha: 1.0, beta: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowEvent {
    Ack,
    Loss,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub cwnd: f64,
    pub ssthresh: f64,
}

/// Tahoe: slow start below `ssthresh`, additive increase above it, and on
/// loss `ssthresh = max(⌊cwnd/2⌋, 2)` with the window collapsing to one.
pub fn tahoe_window(window: Window, event: WindowEvent) -> Window {
    match event {
        WindowEvent::Ack if window.cwnd < window.ssthresh => Window { cwnd: window.cwnd + 1.0, ..window },
        WindowEvent::Ack => Window { cwnd: window.cwnd + 1.0 / window.cwnd, ..window },
        WindowEvent::Loss => Window { cwnd: 1.0, ssthresh: (window.cwnd / 2.0).floor().max(2.0) },
    }
}

/// Vegas: estimated backlog `cwnd · (rtt − base) / rtt` packets; grow below
/// `alpha`, shrink above `beta`, never below one packet.
pub fn vegas_window(cwnd: f64, rtt: f64, base_rtt: f64, alpha: f64, beta: f64) -> f64 {
    let diff = vegas_diff(cwnd, rtt, base_rtt);
    let next = if diff < alpha {
        cwnd + 1.0
    } else if diff > beta {
        cwnd - 1.0
    } else {
        cwnd
    };
    next.max(1.0)
}

pub fn vegas_diff(cwnd: f64, rtt: f64, base_rtt: f64) -> f64 {
    if rtt <= 0.0 {
        return 0.0;
    }
    cwnd * (rtt - base_rtt) / rtt
}

/// Per-connection Vegas bookkeeping: minimum RTT and the current epoch.
/// An epoch closes with the first ACK for a packet admitted after it opened,
/// i.e. roughly once per round trip.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VegasEpoch {
    pub base_rtt: Option<u64>,
    epoch_start: u64,
    sum: u64,
    count: u64,
}

impl VegasEpoch {
    /// Records an RTT sample. Returns the epoch's mean RTT and the base RTT
    /// when the epoch closes.
    pub fn on_sample(&mut self, rtt: u64, admit_time: u64, now: u64) -> Option<(f64, f64)> {
        let base = self.base_rtt.map_or(rtt, |b| b.min(rtt));
        self.base_rtt = Some(base);
        self.sum += rtt;
        self.count += 1;
        if admit_time < self.epoch_start {
            return None;
        }
        let mean = self.sum as f64 / self.count as f64;
        self.epoch_start = now;
        self.sum = 0;
        self.count = 0;
        Some((mean, base as f64))
    }
}
