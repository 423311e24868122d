//! Sensor-side replica of the controller's predictor.
//!
//! The sensor knows every state it sampled, and every ACK tells it which
//! update the controller received and at which step. Replaying the
//! controller's predictor over that timeline gives the augmented estimate
//! `x̄[k]` and the replica inputs `ū`. An ACK that arrives late changes the
//! timeline retroactively, so the replica inputs from its reception step
//! onward are recomputed.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::DVector;

use crate::control::{control_input, estimate_state, ControlError, ControllerState, LoopModel, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedEstimator {
    start_step: u64,
    samples_first: u64,
    samples: VecDeque<DVector<f64>>,
    sample_capacity: usize,
    /// reception step -> freshest generation step known to the controller
    /// from that step on. Strictly increasing in both key and value.
    timeline: BTreeMap<u64, u64>,
    replica: ControllerState,
    next_step: u64,
}

impl AugmentedEstimator {
    /// A replica for a loop whose initial state `x0` at `start_step` is known
    /// to both ends.
    pub fn new(start_step: u64, x0: DVector<f64>, capacity: usize) -> Self {
        Self {
            start_step,
            samples_first: start_step,
            samples: VecDeque::with_capacity(capacity + 1),
            sample_capacity: capacity + 1,
            timeline: BTreeMap::new(),
            replica: ControllerState::new(start_step, x0, capacity),
            next_step: start_step,
        }
    }

    /// Generation step of the freshest update the controller is believed to
    /// use at `step`.
    pub fn nu_at(&self, step: u64) -> u64 {
        self.timeline.range(..=step).next_back().map_or(self.start_step, |(_, g)| *g)
    }

    pub fn next_step(&self) -> u64 {
        self.next_step
    }

    /// Replica input `ū[step]`, if computed and retained.
    pub fn replica_input(&self, step: u64) -> Option<&DVector<f64>> {
        self.replica.inputs.get(step)
    }

    fn sample(&self, step: u64) -> Result<&DVector<f64>> {
        let available = self.samples.len() as u64;
        if step < self.samples_first {
            return Err(ControlError::InsufficientHistory { needed: self.next_step - step, available });
        }
        self.samples
            .get((step - self.samples_first) as usize)
            .ok_or(ControlError::InsufficientHistory { needed: self.next_step - step, available })
    }

    fn compute_step(&mut self, model: &LoopModel, step: u64) -> Result<DVector<f64>> {
        let nu = self.nu_at(step);
        if nu != self.replica.nu {
            let x = self.sample(nu)?.clone();
            self.replica.nu = nu;
            self.replica.x_nu = x;
        }
        let x_bar = estimate_state(&self.replica, model, step)?;
        self.replica.inputs.push(control_input(&x_bar, &model.k));
        Ok(x_bar)
    }

    /// Records the sample `x[k]` and returns the augmented estimate `x̄[k]`.
    /// Must be called once per step, in order.
    pub fn advance(&mut self, model: &LoopModel, k: u64, x: &DVector<f64>) -> Result<DVector<f64>> {
        if k != self.next_step {
            return Err(ControlError::Dimension(format!(
                "augmented estimator expected step {}, got {k}",
                self.next_step
            )));
        }
        if self.samples.len() == self.sample_capacity {
            self.samples.pop_front();
            self.samples_first += 1;
        }
        self.samples.push_back(x.clone());
        let x_bar = self.compute_step(model, k)?;
        self.next_step = k + 1;
        Ok(x_bar)
    }

    /// Folds an ACK into the timeline. Returns whether it carried new
    /// information (and therefore triggered a recomputation).
    pub fn on_ack(&mut self, model: &LoopModel, gen_step: u64, recv_step: u64) -> Result<bool> {
        if gen_step <= self.nu_at(recv_step) {
            return Ok(false);
        }
        let dominated: Vec<u64> =
            self.timeline.range(recv_step..).take_while(|(_, g)| **g <= gen_step).map(|(r, _)| *r).collect();
        for r in dominated {
            self.timeline.remove(&r);
        }
        self.timeline.insert(recv_step, gen_step);

        if recv_step < self.next_step {
            // Replay the replica from the first step the ACK affects.
            self.replica.inputs.truncate_from(recv_step);
            for step in recv_step..self.next_step {
                self.compute_step(model, step)?;
            }
        }
        Ok(true)
    }
}
