//! Distributed event-trigger threshold adaptation.
//!
//! Each sensor batches the round-trip times of its acknowledged updates. When
//! a batch of `N_b` samples is complete its mean is compared with the rolling
//! mean of the last `w` samples plus a margin `f(stddev)`. A batch slower than
//! that raises the threshold by one, otherwise the threshold shrinks by a
//! factor of 1.1. Sensors never exchange information.

use serde::{Deserialize, Serialize};

/// Unit in which RTT statistics are expressed before the margin is applied.
/// The margin `c · stddev^e` is not scale invariant, so this choice changes
/// the behavior of the adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RttUnit {
    Us,
    #[default]
    Ms,
}

impl RttUnit {
    pub fn from_us(self, us: f64) -> f64 {
        match self {
            RttUnit::Us => us,
            RttUnit::Ms => us / 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaConfig {
    pub initial_lambda: f64,
    pub batch_size: usize,
    pub window: usize,
    pub increment: f64,
    pub decrease_factor: f64,
    pub margin_coeff: f64,
    pub margin_exponent: f64,
    pub unit: RttUnit,
}

impl Default for TaConfig {
    fn default() -> Self {
        Self {
            initial_lambda: 10.0,
            batch_size: 10,
            window: 100,
            increment: 1.0,
            decrease_factor: 1.1,
            margin_coeff: 0.5,
            margin_exponent: 0.75,
            unit: RttUnit::Ms,
        }
    }
}

/// `f(stddev) = 0.5 · stddev^{3/4}`.
pub fn f_margin(stddev: f64) -> f64 {
    margin(stddev, 0.5, 0.75)
}

fn margin(stddev: f64, coeff: f64, exponent: f64) -> f64 {
    coeff * stddev.max(0.0).powf(exponent)
}

/// Which branch a completed batch took.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChange {
    Increased(f64),
    Decreased(f64),
}

impl LambdaChange {
    pub fn value(self) -> f64 {
        match self {
            LambdaChange::Increased(v) | LambdaChange::Decreased(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaState {
    config: TaConfig,
    tmp_rtt_list: Vec<f64>,
    rtt_list: Vec<f64>,
    mean: f64,
    stddev: f64,
}

impl TaState {
    pub fn new(config: TaConfig) -> Self {
        Self { config, tmp_rtt_list: Vec::new(), rtt_list: Vec::new(), mean: 0.0, stddev: 0.0 }
    }

    pub fn config(&self) -> &TaConfig {
        &self.config
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn stddev(&self) -> f64 {
        self.stddev
    }

    pub fn pending(&self) -> &[f64] {
        &self.tmp_rtt_list
    }

    pub fn history(&self) -> &[f64] {
        &self.rtt_list
    }

    /// Feeds one RTT sample (microseconds). Returns the new threshold when a
    /// batch completes and the threshold moved.
    ///
    /// The very first batch only seeds the rolling statistics: with an empty
    /// history there is no reference to compare against.
    pub fn ta_on_ack(&mut self, rtt_us: f64, lambda: f64) -> Option<LambdaChange> {
        self.tmp_rtt_list.push(self.config.unit.from_us(rtt_us));
        if self.tmp_rtt_list.len() < self.config.batch_size.max(1) {
            return None;
        }
        let change = if self.rtt_list.is_empty() {
            None
        } else {
            let batch_mean = mean(&self.tmp_rtt_list);
            let threshold = self.mean + margin(self.stddev, self.config.margin_coeff, self.config.margin_exponent);
            Some(if batch_mean > threshold {
                LambdaChange::Increased(lambda + self.config.increment)
            } else {
                LambdaChange::Decreased(lambda / self.config.decrease_factor)
            })
        };
        self.rtt_list.append(&mut self.tmp_rtt_list);
        let start = self.rtt_list.len().saturating_sub(self.config.window.max(1));
        let recent = &self.rtt_list[start..];
        self.mean = mean(recent);
        self.stddev = population_stddev(recent, self.mean);
        change
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_stddev(xs: &[f64], mean: f64) -> f64 {
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}
