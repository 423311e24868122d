//! Event-driven co-simulation of N control loops sharing one network.
//!
//! At every sampling tick each active loop, in loop order, computes its
//! estimate and control input from whatever the controller holds, books the
//! stage cost, lets the sensor's transport policy decide on the fresh sample,
//! then advances the plant one step. Network events between ticks deliver
//! updates and ACKs. After the last tick the network is drained so every
//! admitted update is accounted for.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::control::{
    control_input, estimate_state, instantaneous_cost, step_plant, windowed_average, ControlError, ControllerState,
    LoopModel, PlantState, INPUT_HISTORY_CAPACITY,
};
use crate::netsim::{controller_node, sensor_node, EventKind, EventQueue, Frame, NetCounters, Network, SimEvent};
use crate::rng::{sub_stream, Stream};
use crate::transport::{AckRecord, Admission, PolicyState, PolicyStats, StatusUpdate};

use super::scenario::{Scenario, ScenarioError};

/// What one loop looked like at one sampling step.
#[derive(Debug)]
pub struct StepRecord<'a> {
    pub step: u64,
    pub loop_id: usize,
    pub x: &'a DVector<f64>,
    pub x_hat: &'a DVector<f64>,
    pub u: &'a DVector<f64>,
    pub nu: u64,
    pub aoi: u64,
    /// `(ν̄(k), x̄[k])` for the augmented policy.
    pub augmented: Option<(u64, &'a DVector<f64>)>,
    pub admitted: bool,
    pub lambda: f64,
    pub policy: &'a PolicyState,
}

/// Hooks into a running simulation. Both methods default to no-ops.
pub trait Observer {
    fn on_step(&mut self, _record: &StepRecord<'_>) {}
    fn on_event(&mut self, _event: &SimEvent) {}
}

impl Observer for () {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub time: u64,
    pub node: Option<usize>,
    pub kind: &'static str,
}

/// Collects a `(time, node, kind)` line per processed event.
#[derive(Debug, Default)]
pub struct TraceRecorder {
    pub records: Vec<TraceRecord>,
}

impl Observer for TraceRecorder {
    fn on_event(&mut self, ev: &SimEvent) {
        self.records.push(TraceRecord { time: ev.time, node: ev.kind.node(), kind: ev.kind.name() });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub step: u64,
    pub loop_id: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoopResult {
    pub loop_id: usize,
    pub activation_step: u64,
    /// Mean stage cost from `max(burn_in, activation_step)` through the last
    /// step; `None` for failed runs.
    pub lqg: Option<f64>,
    /// Stage cost per step, `steps + 1` entries; zero before activation.
    pub cost: Vec<f64>,
    pub aoi: Vec<u64>,
    pub lambda: Vec<f64>,
    pub rtt_us: Vec<u64>,
    /// Admission-to-reception delay of every delivered update.
    pub delays_us: Vec<u64>,
    pub delivered: u64,
    pub policy: PolicyStats,
    /// Sensor buffer occupancy averaged over active sampling ticks.
    pub mean_occupancy: f64,
}

impl LoopResult {
    pub fn mean_aoi(&self) -> f64 {
        let active = &self.aoi[self.activation_step as usize..];
        active.iter().sum::<u64>() as f64 / active.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub seed: u64,
    pub loops: Vec<LoopResult>,
    pub net: NetCounters,
    pub failure: Option<RunFailure>,
    pub end_time_us: u64,
}

impl RunResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    /// Mean of the per-loop costs, `None` for failed runs.
    pub fn mean_lqg(&self) -> Option<f64> {
        let costs: Option<Vec<f64>> = self.loops.iter().map(|l| l.lqg).collect();
        costs.map(|c| c.iter().sum::<f64>() / c.len() as f64)
    }
}

struct LoopRuntime {
    id: usize,
    model: LoopModel,
    start: u64,
    active: bool,
    plant: PlantState,
    controller: ControllerState,
    policy: PolicyState,
    noise: ChaCha8Rng,
    cost: Vec<f64>,
    aoi: Vec<u64>,
    lambda: Vec<f64>,
    rtt_us: Vec<u64>,
    delays_us: Vec<u64>,
    delivered: u64,
    occupancy_sum: u64,
    occupancy_samples: u64,
}

impl LoopRuntime {
    fn new(scenario: &Scenario, id: usize, model: LoopModel, seed: u64) -> Self {
        let start = scenario.activation_step(id);
        let x0 = scenario.plant_spec(id).initial_state();
        let cap = scenario.steps as usize + 1;
        Self {
            id,
            plant: PlantState::new(start, x0.clone(), model.input_dim()),
            controller: ControllerState::new(start, x0.clone(), INPUT_HISTORY_CAPACITY),
            policy: PolicyState::new(scenario.policy.clone(), start, &x0),
            noise: sub_stream(seed, Stream::PlantNoise, id as u64),
            model,
            start,
            active: false,
            cost: Vec::with_capacity(cap),
            aoi: Vec::with_capacity(cap),
            lambda: Vec::with_capacity(cap),
            rtt_us: Vec::new(),
            delays_us: Vec::new(),
            delivered: 0,
            occupancy_sum: 0,
            occupancy_samples: 0,
        }
    }

    fn idle_step(&mut self) {
        self.cost.push(0.0);
        self.aoi.push(0);
        self.lambda.push(self.policy.lambda());
    }

    fn noise_sample(&mut self) -> DVector<f64> {
        let n = self.model.state_dim();
        let z = DVector::from_fn(n, |_, _| self.noise.sample::<f64, _>(StandardNormal));
        self.model.shape_noise(&z)
    }
}

struct Engine<'o, O: Observer> {
    scenario: Scenario,
    queue: EventQueue,
    net: Network,
    loops: Vec<LoopRuntime>,
    last_tick: Option<u64>,
    failure: Option<RunFailure>,
    observer: &'o mut O,
}

impl<O: Observer> Engine<'_, O> {
    fn fail(&mut self, loop_id: usize, step: u64, err: ControlError) {
        if self.failure.is_none() {
            self.failure = Some(RunFailure { step, loop_id, reason: err.to_string() });
        }
    }

    fn tick(&mut self, k: u64, now: u64) {
        self.last_tick = Some(k);
        for i in 0..self.loops.len() {
            if let Err(e) = self.tick_loop(i, k, now) {
                self.fail(i, k, e);
                return;
            }
        }
        if k < self.scenario.steps {
            self.queue.schedule(now + self.scenario.sampling_period_us, EventKind::SampleTick { step: k + 1 });
        } else {
            self.net.drain();
        }
    }

    fn tick_loop(&mut self, i: usize, k: u64, now: u64) -> Result<(), ControlError> {
        let lp = &mut self.loops[i];
        if k < lp.start {
            lp.idle_step();
            return Ok(());
        }
        if !lp.active {
            lp.active = true;
            self.net.activate(&mut self.queue, sensor_node(lp.id), now);
            self.net.activate(&mut self.queue, controller_node(lp.id), now);
        }

        let aoi = lp.controller.aoi(k);
        let x_hat = estimate_state(&lp.controller, &lp.model, k)?;
        let u = control_input(&x_hat, &lp.model.k);
        lp.controller.inputs.push(u.clone());
        lp.cost.push(instantaneous_cost(&lp.plant.x, &u, &lp.model.q, &lp.model.r));
        lp.aoi.push(aoi);

        let x = lp.plant.x.clone();
        let admitted = lp.policy.decide_admission(&lp.model, &x, k, now)? == Admission::Admit;
        lp.lambda.push(lp.policy.lambda());

        let augmented =
            lp.policy.augmented().zip(lp.policy.last_augmented_estimate()).map(|(aug, xb)| (aug.nu_at(k), xb));
        self.observer.on_step(&StepRecord {
            step: k,
            loop_id: lp.id,
            x: &x,
            x_hat: &x_hat,
            u: &u,
            nu: lp.controller.nu,
            aoi,
            augmented,
            admitted,
            lambda: lp.policy.lambda(),
            policy: &lp.policy,
        });

        if admitted {
            let update = StatusUpdate { loop_id: lp.id, gen_step: k, x: x.clone(), admit_time: now, recv_time: None };
            self.net.enqueue_frame(&mut self.queue, sensor_node(lp.id), Frame::Data(update), now);
            let rto = lp.policy.config().rto_us;
            self.queue.schedule(now + rto, EventKind::TlTimeout { loop_id: lp.id, gen_step: k });
        }

        let w = lp.noise_sample();
        lp.plant = step_plant(&lp.plant, &lp.model, &u, &w)?;

        lp.occupancy_sum += self.net.occupancy(sensor_node(lp.id)) as u64;
        lp.occupancy_samples += 1;
        Ok(())
    }

    fn deliver(&mut self, update: StatusUpdate, now: u64) {
        let recv_step = self.last_tick.map_or(0, |k| k + 1);
        let lp = &mut self.loops[update.loop_id];
        lp.delivered += 1;
        lp.delays_us.push(now - update.admit_time);
        lp.controller.receive(update.gen_step, &update.x);
        let ack = AckRecord { loop_id: lp.id, gen_step: update.gen_step, recv_step, ack_arrival_time: None };
        self.net.enqueue_frame(&mut self.queue, controller_node(lp.id), Frame::Ack(ack), now);
    }

    fn run(&mut self) {
        while let Some(ev) = self.queue.pop() {
            let now = ev.time;
            match &ev.kind {
                EventKind::SampleTick { step } => self.tick(*step, now),
                EventKind::Delivery { update } => self.deliver(update.clone(), now),
                EventKind::AckDelivery { ack } => {
                    let lp = &mut self.loops[ack.loop_id];
                    match lp.policy.on_ack(&lp.model, *ack, now) {
                        Ok(Some(outcome)) => lp.rtt_us.push(outcome.rtt_us),
                        Ok(None) => {}
                        Err(e) => {
                            let step = self.last_tick.unwrap_or(0);
                            self.fail(ack.loop_id, step, e);
                        }
                    }
                }
                EventKind::TlTimeout { loop_id, gen_step } => {
                    self.loops[*loop_id].policy.on_timeout(*gen_step, now);
                }
                _ => self.net.handle(&mut self.queue, &ev),
            }
            self.observer.on_event(&ev);
            if self.failure.is_some() {
                return;
            }
        }
    }
}

/// Runs one scenario with one seed.
pub fn run(scenario: &Scenario, seed: u64) -> Result<RunResult, ScenarioError> {
    run_observed(scenario, seed, &mut ())
}

/// Like [`run`], reporting every step and event to `observer`.
pub fn run_observed<O: Observer>(scenario: &Scenario, seed: u64, observer: &mut O) -> Result<RunResult, ScenarioError> {
    scenario.validate()?;
    let models = scenario.models()?;
    let loops: Vec<LoopRuntime> =
        models.into_iter().enumerate().map(|(i, m)| LoopRuntime::new(scenario, i, m, seed)).collect();
    let mut queue = EventQueue::new();
    queue.schedule(0, EventKind::SampleTick { step: 0 });
    let mut engine = Engine {
        net: Network::new(scenario.mac.clone(), 2 * scenario.loops, seed),
        scenario: scenario.clone(),
        queue,
        loops,
        last_tick: None,
        failure: None,
        observer,
    };
    engine.run();

    let failed = engine.failure.is_some();
    let (burn_in, steps) = (scenario.burn_in as usize, scenario.steps as usize);
    let loops = engine
        .loops
        .into_iter()
        .map(|lp| LoopResult {
            loop_id: lp.id,
            activation_step: lp.start,
            lqg: if failed { None } else { windowed_average(&lp.cost, burn_in.max(lp.start as usize), steps).ok() },
            mean_occupancy: lp.occupancy_sum as f64 / lp.occupancy_samples.max(1) as f64,
            policy: lp.policy.stats(),
            cost: lp.cost,
            aoi: lp.aoi,
            lambda: lp.lambda,
            rtt_us: lp.rtt_us,
            delays_us: lp.delays_us,
            delivered: lp.delivered,
        })
        .collect();
    Ok(RunResult { seed, loops, net: *engine.net.counters(), failure: engine.failure, end_time_us: engine.queue.now() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{MacConfig, MacMode};
    use crate::transport::{PolicyConfig, PolicyKind};

    fn short(loops: usize, kind: PolicyKind, mode: MacMode) -> Scenario {
        let mut s = Scenario::reference(
            loops,
            PolicyConfig { kind, lambda: 3.0, ..PolicyConfig::default() },
            MacConfig { mode, ..MacConfig::default() },
        );
        s.steps = 400;
        s.burn_in = 100;
        s
    }

    #[test]
    fn series_have_one_entry_per_step() {
        let r = run(&short(2, PolicyKind::ZeroWait, MacMode::Csma), 1).unwrap();
        assert!(!r.failed());
        for l in &r.loops {
            assert_eq!(l.cost.len(), 401);
            assert_eq!(l.aoi.len(), 401);
            assert_eq!(l.lambda.len(), 401);
            assert!(l.lqg.unwrap() > 0.0);
        }
    }

    #[test]
    fn same_seed_same_result() {
        for mode in [MacMode::Csma, MacMode::Polling] {
            let s = short(3, PolicyKind::TcpTahoe, mode);
            let a = run(&s, 9).unwrap();
            let b = run(&s, 9).unwrap();
            for (x, y) in a.loops.iter().zip(&b.loops) {
                assert_eq!(x.cost, y.cost);
                assert_eq!(x.rtt_us, y.rtt_us);
            }
            assert_eq!(a.net, b.net);
            let c = run(&s, 10).unwrap();
            assert_ne!(a.loops[0].cost, c.loops[0].cost);
        }
    }

    #[test]
    fn every_admission_is_accounted_for() {
        for kind in PolicyKind::ALL {
            let r = run(&short(3, kind, MacMode::Csma), 4).unwrap();
            let admitted: u64 = r.loops.iter().map(|l| l.policy.admitted).sum();
            let d = r.net.data;
            assert_eq!(admitted, d.enqueued, "{kind}");
            assert_eq!(d.enqueued, d.delivered + d.mac_drops + d.buffer_drops, "{kind}");
            let delivered: u64 = r.loops.iter().map(|l| l.delivered).sum();
            assert_eq!(delivered, d.delivered);
        }
    }

    #[test]
    fn inactive_loop_costs_nothing_until_activation() {
        let mut s = short(2, PolicyKind::ZeroWait, MacMode::Polling);
        s.activation.push(crate::harness::scenario::Activation { loop_id: 1, step: 200 });
        let r = run(&s, 2).unwrap();
        assert!(r.loops[1].cost[..200].iter().all(|&c| c == 0.0));
        assert!(r.loops[1].cost[200..].iter().any(|&c| c > 0.0));
    }

    #[test]
    fn trace_covers_every_event() {
        let s = short(1, PolicyKind::Udp, MacMode::Csma);
        let mut trace = TraceRecorder::default();
        run_observed(&s, 3, &mut trace).unwrap();
        let ticks = trace.records.iter().filter(|r| r.kind == "sample_tick").count();
        assert_eq!(ticks, 401);
        assert!(trace.records.windows(2).all(|w| w[0].time <= w[1].time));
    }
}
