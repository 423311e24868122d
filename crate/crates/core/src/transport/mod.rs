//! Transport-layer admission policies.
//!
//! At every sampling step a sensor decides whether the fresh measurement is
//! handed to the network or discarded for good. Discarded measurements are
//! never reconsidered and admitted ones are never retransmitted. ACKs from
//! the controller drive outstanding-packet bookkeeping, congestion windows,
//! RTT statistics, threshold adaptation and the augmented estimate.

mod augment;
pub mod tcp;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::adaptation::{TaConfig, TaState};
use crate::control::{LoopModel, Result, INPUT_HISTORY_CAPACITY};
pub use augment::AugmentedEstimator;
pub use tcp::{tahoe_window, vegas_window, TahoeConfig, VegasConfig, VegasEpoch, Window, WindowEvent};

/// A sampled measurement travelling from sensor to controller.
#[derive(Debug, Clone, PartialEq)]
pub struct StatusUpdate {
    pub loop_id: usize,
    pub gen_step: u64,
    pub x: DVector<f64>,
    pub admit_time: u64,
    pub recv_time: Option<u64>,
}

/// End-to-end acknowledgment of a status update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AckRecord {
    pub loop_id: usize,
    pub gen_step: u64,
    /// First controller step that could use the update.
    pub recv_step: u64,
    pub ack_arrival_time: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "udp")]
    Udp,
    #[serde(rename = "tcp-tahoe")]
    TcpTahoe,
    #[serde(rename = "tcp-vegas")]
    TcpVegas,
    #[serde(rename = "zw")]
    ZeroWait,
    #[serde(rename = "et")]
    EventTriggered,
    #[serde(rename = "zw-et")]
    ZwEt,
    #[serde(rename = "augm-zw-et")]
    AugmZwEt,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Udp,
        PolicyKind::TcpTahoe,
        PolicyKind::TcpVegas,
        PolicyKind::ZeroWait,
        PolicyKind::EventTriggered,
        PolicyKind::ZwEt,
        PolicyKind::AugmZwEt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Udp => "udp",
            PolicyKind::TcpTahoe => "tcp-tahoe",
            PolicyKind::TcpVegas => "tcp-vegas",
            PolicyKind::ZeroWait => "zw",
            PolicyKind::EventTriggered => "et",
            PolicyKind::ZwEt => "zw-et",
            PolicyKind::AugmZwEt => "augm-zw-et",
        }
    }

    pub fn is_tcp(self) -> bool {
        matches!(self, PolicyKind::TcpTahoe | PolicyKind::TcpVegas)
    }

    /// Policies that never keep more than one outstanding packet.
    pub fn is_stop_and_wait(self) -> bool {
        matches!(self, PolicyKind::ZeroWait | PolicyKind::ZwEt | PolicyKind::AugmZwEt)
    }

    pub fn uses_threshold(self) -> bool {
        matches!(self, PolicyKind::EventTriggered | PolicyKind::ZwEt | PolicyKind::AugmZwEt)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        PolicyKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown policy '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Fixed event-trigger threshold; ignored when adaptation is enabled.
    pub lambda: f64,
    /// ACK timeout in microseconds.
    pub rto_us: u64,
    pub tahoe: TahoeConfig,
    pub vegas: VegasConfig,
    /// Threshold adaptation; `None` keeps `lambda` fixed.
    pub adaptation: Option<TaConfig>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Udp,
            lambda: 3.0,
            rto_us: 200_000,
            tahoe: TahoeConfig::default(),
            vegas: VegasConfig::default(),
            adaptation: None,
        }
    }
}

/// Inputs of the piecewise admission rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissionInputs {
    /// `|x[k]|`
    pub state_norm: f64,
    /// `|x[k] − x̄[k]|`
    pub deviation_norm: f64,
    pub lambda: f64,
    pub n_out: usize,
    pub cwnd: f64,
}

/// The per-policy admission decision `δ[k]`.
pub fn admission_rule(kind: PolicyKind, i: AdmissionInputs) -> bool {
    match kind {
        PolicyKind::Udp => true,
        PolicyKind::TcpTahoe | PolicyKind::TcpVegas => (i.n_out as f64) < i.cwnd,
        PolicyKind::ZeroWait => i.n_out == 0,
        PolicyKind::EventTriggered => i.state_norm >= i.lambda,
        PolicyKind::ZwEt => i.state_norm >= i.lambda && i.n_out == 0,
        PolicyKind::AugmZwEt => i.deviation_norm >= i.lambda && i.n_out == 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admit,
    Discard,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PolicyStats {
    pub admitted: u64,
    pub discarded: u64,
    pub timeouts: u64,
    pub late_acks: u64,
    pub stale_acks: u64,
}

/// Outcome of feeding an ACK to the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckOutcome {
    pub rtt_us: u64,
    pub late: bool,
}

/// Transport-layer state of one sensor.
#[derive(Debug, Clone)]
pub struct PolicyState {
    config: PolicyConfig,
    outstanding: BTreeMap<u64, u64>,
    expired: BTreeMap<u64, u64>,
    window: Window,
    vegas: VegasEpoch,
    lambda: f64,
    rtt_list: Vec<u64>,
    last_acked: Option<AckRecord>,
    augmented: Option<AugmentedEstimator>,
    last_augmented: Option<DVector<f64>>,
    ta: Option<TaState>,
    last_admitted: Option<u64>,
    stats: PolicyStats,
}

impl PolicyState {
    /// State for a sensor whose loop starts at `start_step` from `x0`.
    pub fn new(config: PolicyConfig, start_step: u64, x0: &DVector<f64>) -> Self {
        let window = match config.kind {
            PolicyKind::TcpTahoe => {
                Window { cwnd: config.tahoe.initial_cwnd.max(1.0), ssthresh: config.tahoe.initial_ssthresh }
            }
            PolicyKind::TcpVegas => Window { cwnd: config.vegas.initial_cwnd.max(1.0), ssthresh: f64::INFINITY },
            PolicyKind::ZeroWait | PolicyKind::ZwEt | PolicyKind::AugmZwEt => {
                Window { cwnd: 1.0, ssthresh: f64::INFINITY }
            }
            PolicyKind::Udp | PolicyKind::EventTriggered => Window { cwnd: f64::INFINITY, ssthresh: f64::INFINITY },
        };
        let (lambda, ta) = match &config.adaptation {
            Some(ta) if config.kind.uses_threshold() => (ta.initial_lambda, Some(TaState::new(ta.clone()))),
            _ => (config.lambda, None),
        };
        let augmented = (config.kind == PolicyKind::AugmZwEt)
            .then(|| AugmentedEstimator::new(start_step, x0.clone(), INPUT_HISTORY_CAPACITY));
        Self {
            config,
            outstanding: BTreeMap::new(),
            expired: BTreeMap::new(),
            window,
            vegas: VegasEpoch::default(),
            lambda,
            rtt_list: Vec::new(),
            last_acked: None,
            augmented,
            last_augmented: None,
            ta,
            last_admitted: None,
            stats: PolicyStats::default(),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.config.kind
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn n_out(&self) -> usize {
        self.outstanding.len()
    }

    pub fn outstanding(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.outstanding.iter().map(|(g, t)| (*g, *t))
    }

    pub fn cwnd(&self) -> f64 {
        self.window.cwnd
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rtt_list(&self) -> &[u64] {
        &self.rtt_list
    }

    pub fn last_acked(&self) -> Option<&AckRecord> {
        self.last_acked.as_ref()
    }

    pub fn stats(&self) -> PolicyStats {
        self.stats
    }

    pub fn ta(&self) -> Option<&TaState> {
        self.ta.as_ref()
    }

    pub fn augmented(&self) -> Option<&AugmentedEstimator> {
        self.augmented.as_ref()
    }

    /// Augmented estimate computed at the latest sampling step.
    pub fn last_augmented_estimate(&self) -> Option<&DVector<f64>> {
        self.last_augmented.as_ref()
    }

    /// Admission decision for the measurement `x` sampled at step `k`. An
    /// admitted update becomes outstanding from `now` on.
    pub fn decide_admission(&mut self, model: &LoopModel, x: &DVector<f64>, k: u64, now: u64) -> Result<Admission> {
        let deviation_norm = match self.augmented.as_mut() {
            Some(aug) => {
                let x_bar = aug.advance(model, k, x)?;
                let d = (x - &x_bar).norm();
                self.last_augmented = Some(x_bar);
                d
            }
            None => x.norm(),
        };
        let inputs = AdmissionInputs {
            state_norm: x.norm(),
            deviation_norm,
            lambda: self.lambda,
            n_out: self.outstanding.len(),
            cwnd: self.window.cwnd,
        };
        if admission_rule(self.config.kind, inputs) {
            debug_assert!(self.last_admitted.is_none_or(|g| g < k), "update admitted twice");
            self.outstanding.insert(k, now);
            self.last_admitted = Some(k);
            self.stats.admitted += 1;
            Ok(Admission::Admit)
        } else {
            self.stats.discarded += 1;
            Ok(Admission::Discard)
        }
    }

    /// Processes an ACK arriving at `now`. Unknown generation steps are
    /// counted as stale and otherwise ignored. ACKs for updates that already
    /// timed out still contribute an RTT sample and estimator information but
    /// leave the window untouched.
    pub fn on_ack(&mut self, model: &LoopModel, ack: AckRecord, now: u64) -> Result<Option<AckOutcome>> {
        let (admit_time, late) = if let Some(t) = self.outstanding.remove(&ack.gen_step) {
            (t, false)
        } else if let Some(t) = self.expired.remove(&ack.gen_step) {
            self.stats.late_acks += 1;
            (t, true)
        } else {
            self.stats.stale_acks += 1;
            return Ok(None);
        };
        let rtt = now.saturating_sub(admit_time);
        self.rtt_list.push(rtt);

        if !late {
            match self.config.kind {
                PolicyKind::TcpTahoe => self.window = tahoe_window(self.window, WindowEvent::Ack),
                PolicyKind::TcpVegas => {
                    if let Some((mean, base)) = self.vegas.on_sample(rtt, admit_time, now) {
                        let v = &self.config.vegas;
                        self.window.cwnd = vegas_window(self.window.cwnd, mean, base, v.alpha, v.beta);
                    }
                }
                _ => {}
            }
        }

        if self.last_acked.is_none_or(|l| ack.gen_step > l.gen_step) {
            self.last_acked = Some(AckRecord { ack_arrival_time: Some(now), ..ack });
        }
        if let Some(aug) = self.augmented.as_mut() {
            aug.on_ack(model, ack.gen_step, ack.recv_step)?;
        }
        if let Some(ta) = self.ta.as_mut() {
            if let Some(change) = ta.ta_on_ack(rtt as f64, self.lambda) {
                self.lambda = change.value();
            }
        }
        Ok(Some(AckOutcome { rtt_us: rtt, late }))
    }

    /// ACK timeout for the update generated at `gen_step`. A no-op if it was
    /// already acknowledged.
    pub fn on_timeout(&mut self, gen_step: u64, _now: u64) -> bool {
        let Some(admit) = self.outstanding.remove(&gen_step) else {
            return false;
        };
        self.expired.insert(gen_step, admit);
        self.stats.timeouts += 1;
        if self.config.kind == PolicyKind::TcpTahoe {
            self.window = tahoe_window(self.window, WindowEvent::Loss);
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn model() -> LoopModel {
        LoopModel::scalar(1.2, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn policy(kind: PolicyKind, lambda: f64) -> PolicyState {
        PolicyState::new(PolicyConfig { kind, lambda, ..PolicyConfig::default() }, 0, &v(0.0))
    }

    fn ack(gen_step: u64, recv_step: u64) -> AckRecord {
        AckRecord { loop_id: 0, gen_step, recv_step, ack_arrival_time: None }
    }

    #[test]
    fn udp_always_admits() {
        let m = model();
        let mut p = policy(PolicyKind::Udp, 3.0);
        for k in 0..20 {
            assert_eq!(p.decide_admission(&m, &v(k as f64 * 0.1), k, k * 10_000).unwrap(), Admission::Admit);
        }
        assert_eq!(p.n_out(), 20);
    }

    #[test]
    fn zero_wait_blocks_until_ack() {
        let m = model();
        let mut p = policy(PolicyKind::ZeroWait, 3.0);
        assert_eq!(p.decide_admission(&m, &v(0.0), 0, 0).unwrap(), Admission::Admit);
        assert_eq!(p.decide_admission(&m, &v(0.0), 1, 10_000).unwrap(), Admission::Discard);
        let out = p.on_ack(&m, ack(0, 1), 14_000).unwrap().unwrap();
        assert_eq!(out.rtt_us, 14_000);
        assert_eq!(p.n_out(), 0);
        assert_eq!(p.decide_admission(&m, &v(0.0), 2, 20_000).unwrap(), Admission::Admit);
    }

    #[test]
    fn zw_et_threshold_is_inclusive() {
        let m = model();
        let mut p = policy(PolicyKind::ZwEt, 3.0);
        assert_eq!(p.decide_admission(&m, &v(2.99), 0, 0).unwrap(), Admission::Discard);
        assert_eq!(p.decide_admission(&m, &v(-3.0), 1, 10_000).unwrap(), Admission::Admit);
    }

    #[test]
    fn augm_discards_when_controller_already_knows() {
        let rule = admission_rule(
            PolicyKind::AugmZwEt,
            AdmissionInputs { state_norm: 5.0, deviation_norm: 0.5, lambda: 3.0, n_out: 0, cwnd: 1.0 },
        );
        assert!(!rule);
        let zw_et = admission_rule(
            PolicyKind::ZwEt,
            AdmissionInputs { state_norm: 5.0, deviation_norm: 0.5, lambda: 3.0, n_out: 0, cwnd: 1.0 },
        );
        assert!(zw_et);
    }

    #[test]
    fn rtt_sample_from_admit_to_ack() {
        let m = model();
        let mut p = policy(PolicyKind::Udp, 3.0);
        p.decide_admission(&m, &v(0.0), 0, 1000).unwrap();
        assert_eq!(p.on_ack(&m, ack(0, 1), 9000).unwrap().unwrap().rtt_us, 8000);
        assert_eq!(p.rtt_list(), &[8000]);
    }

    #[test]
    fn last_acked_is_freshest_by_generation() {
        let m = model();
        let mut p = policy(PolicyKind::Udp, 3.0);
        for k in 0..61 {
            p.decide_admission(&m, &v(0.0), k, k * 10_000).unwrap();
        }
        p.on_ack(&m, ack(60, 61), 700_000).unwrap();
        p.on_ack(&m, ack(50, 51), 710_000).unwrap();
        assert_eq!(p.last_acked().unwrap().gen_step, 60);
        assert_eq!(p.last_acked().unwrap().ack_arrival_time, Some(700_000));
    }

    #[test]
    fn unknown_ack_is_counted_stale() {
        let m = model();
        let mut p = policy(PolicyKind::Udp, 3.0);
        assert_eq!(p.on_ack(&m, ack(7, 8), 1).unwrap(), None);
        assert_eq!(p.stats().stale_acks, 1);
        assert!(p.last_acked().is_none());
    }

    #[test]
    fn timeout_unblocks_zero_wait() {
        let m = model();
        let mut p = policy(PolicyKind::ZeroWait, 3.0);
        p.decide_admission(&m, &v(0.0), 0, 0).unwrap();
        assert!(p.on_timeout(0, 200_000));
        assert_eq!(p.n_out(), 0);
        // Second timeout for the same update is a no-op.
        assert!(!p.on_timeout(0, 200_000));
        assert_eq!(p.stats().timeouts, 1);
    }

    #[test]
    fn timeout_after_ack_is_noop() {
        let m = model();
        let mut p = policy(PolicyKind::TcpTahoe, 3.0);
        p.decide_admission(&m, &v(0.0), 0, 0).unwrap();
        p.on_ack(&m, ack(0, 1), 5000).unwrap();
        let before = p.window();
        assert!(!p.on_timeout(0, 200_000));
        assert_eq!(p.window(), before);
    }

    #[test]
    fn tahoe_timeout_halves_threshold() {
        let m = model();
        let mut p = policy(PolicyKind::TcpTahoe, 3.0);
        p.window = Window { cwnd: 8.0, ssthresh: 64.0 };
        p.decide_admission(&m, &v(0.0), 0, 0).unwrap();
        p.on_timeout(0, 200_000);
        assert_eq!(p.window(), Window { cwnd: 1.0, ssthresh: 4.0 });
    }

    #[test]
    fn late_ack_records_rtt_but_keeps_window() {
        let m = model();
        let mut p = policy(PolicyKind::TcpTahoe, 3.0);
        p.decide_admission(&m, &v(0.0), 0, 0).unwrap();
        p.on_timeout(0, 200_000);
        let w = p.window();
        let out = p.on_ack(&m, ack(0, 1), 250_000).unwrap().unwrap();
        assert!(out.late);
        assert_eq!(out.rtt_us, 250_000);
        assert_eq!(p.window(), w);
        assert_eq!(p.stats().late_acks, 1);
        assert_eq!(p.last_acked().unwrap().gen_step, 0);
    }

    #[test]
    fn conventional_et_ignores_outstanding() {
        let m = model();
        let mut p = policy(PolicyKind::EventTriggered, 3.0);
        for k in 0..5 {
            assert_eq!(p.decide_admission(&m, &v(4.0), k, k).unwrap(), Admission::Admit);
        }
        assert_eq!(p.n_out(), 5);
    }

    #[test]
    fn augmented_estimate_before_any_ack_is_noiseless_trajectory() {
        let m = model();
        let mut p = policy(PolicyKind::AugmZwEt, 1e9);
        for k in 0..50 {
            p.decide_admission(&m, &v(k as f64), k, k * 10_000).unwrap();
            assert_eq!(p.last_augmented_estimate().unwrap()[0], 0.0);
        }
    }

    #[test]
    fn augmented_estimate_one_step_roll_forward() {
        let m = model();
        let mut aug = AugmentedEstimator::new(0, v(0.0), INPUT_HISTORY_CAPACITY);
        assert_eq!(aug.advance(&m, 0, &v(0.0)).unwrap()[0], 0.0);
        assert_eq!(aug.advance(&m, 1, &v(1.0)).unwrap()[0], 0.0);
        // Controller received x[1] = 1 and used it from step 1 on.
        assert!(aug.on_ack(&m, 1, 1).unwrap());
        let u1 = aug.replica_input(1).unwrap()[0];
        assert!((u1 + m.k[(0, 0)]).abs() < 1e-15);
        assert!((u1 + 0.793528).abs() < 1e-6);
        let x_bar = aug.advance(&m, 2, &v(0.0)).unwrap();
        assert!((x_bar[0] - (1.2 - m.k[(0, 0)])).abs() < 1e-15);
        assert!((x_bar[0] - 0.406).abs() < 1e-3);
    }

    #[test]
    fn augmented_estimate_with_zero_delay_ack_is_exact() {
        let m = model();
        let mut aug = AugmentedEstimator::new(0, v(0.0), INPUT_HISTORY_CAPACITY);
        for k in 0..5 {
            aug.advance(&m, k, &v(0.0)).unwrap();
        }
        aug.on_ack(&m, 5, 5).unwrap();
        assert_eq!(aug.advance(&m, 5, &v(2.5)).unwrap()[0], 2.5);
    }

    #[test]
    fn augmented_stale_ack_is_ignored() {
        let m = model();
        let mut aug = AugmentedEstimator::new(0, v(0.0), INPUT_HISTORY_CAPACITY);
        for k in 0..10 {
            aug.advance(&m, k, &v(k as f64)).unwrap();
        }
        assert!(aug.on_ack(&m, 6, 8).unwrap());
        assert!(!aug.on_ack(&m, 4, 9).unwrap());
        assert_eq!(aug.nu_at(9), 6);
        assert_eq!(aug.nu_at(7), 0);
        // Older update received earlier still refines the past.
        assert!(aug.on_ack(&m, 4, 6).unwrap());
        assert_eq!(aug.nu_at(7), 4);
        assert_eq!(aug.nu_at(8), 6);
    }

    #[test]
    fn replica_history_overflow_is_reported() {
        let m = model();
        let mut aug = AugmentedEstimator::new(0, v(0.0), 16);
        let mut result = Ok(DVector::zeros(1));
        for k in 0..40 {
            result = aug.advance(&m, k, &v(0.0));
            if result.is_err() {
                break;
            }
        }
        assert!(matches!(result, Err(crate::control::ControlError::InsufficientHistory { .. })));
    }
}
