//! Whole-run checks against limits that have a closed or independently
//! simulated answer.

mod common;

use rand_distr::{Distribution, StandardNormal};

use wncs::harness::{run, run_observed, Observer, Scenario, StepRecord};
use wncs::netsim::{MacConfig, MacMode};
use wncs::rng::{sub_stream, Stream};
use wncs::transport::{PolicyConfig, PolicyKind};

#[derive(Default)]
struct Trajectory {
    x: Vec<f64>,
    u: Vec<f64>,
    admitted: u64,
}

impl Observer for Trajectory {
    fn on_step(&mut self, r: &StepRecord<'_>) {
        if r.loop_id == 0 {
            self.x.push(r.x[0]);
            self.u.push(r.u[0]);
            self.admitted += u64::from(r.admitted);
        }
    }
}

fn never_admit(steps: u64, burn_in: u64) -> Scenario {
    let policy = PolicyConfig { kind: PolicyKind::ZwEt, lambda: f64::MAX, ..Default::default() };
    let mut s = Scenario::reference(1, policy, MacConfig::default());
    s.steps = steps;
    s.burn_in = burn_in;
    s
}

#[test]
fn unbounded_threshold_matches_open_loop_oracle() {
    let s = never_admit(800, 200);
    for seed in [0, 5, 17] {
        let mut traj = Trajectory::default();
        let r = run_observed(&s, seed, &mut traj).unwrap();
        assert!(!r.failed());
        assert_eq!(traj.admitted, 0);
        assert_eq!(r.net.data.enqueued, 0);
        // Without any measurement the estimate stays at x0 = 0, so u ≡ 0 and
        // the plant runs open loop on its noise stream.
        assert!(traj.u.iter().all(|&u| u == 0.0));
        let mut noise = sub_stream(seed, Stream::PlantNoise, 0);
        let mut x = 0.0f64;
        let mut costs = Vec::new();
        for k in 0..=s.steps as usize {
            assert!((traj.x[k] - x).abs() <= 1e-12 * x.abs().max(1.0), "seed {seed} step {k}");
            costs.push(x * x);
            let w: f64 = StandardNormal.sample(&mut noise);
            x = common::A * x + w;
        }
        let window = &costs[200..=800];
        let oracle = window.iter().sum::<f64>() / window.len() as f64;
        let lqg = r.loops[0].lqg.unwrap();
        assert!((lqg - oracle).abs() <= 1e-9 * oracle, "seed {seed}: {lqg} vs {oracle}");
    }
}

#[test]
fn unbounded_threshold_fails_once_age_exceeds_history() {
    let r = run(&never_admit(6000, 2000), 3).unwrap();
    let failure = r.failure.as_ref().expect("an open loop outlives the input history");
    assert_eq!(failure.loop_id, 0);
    assert_eq!(failure.step, 1025);
    assert!(r.mean_lqg().is_none());
}

#[test]
fn zero_noise_from_rest_costs_nothing() {
    for kind in PolicyKind::ALL {
        for mode in [MacMode::Csma, MacMode::Polling] {
            let policy = PolicyConfig { kind, lambda: 1.0, ..Default::default() };
            let mut s = Scenario::reference(3, policy, MacConfig { mode, ..Default::default() });
            // Event-triggered loops at rest never send, so the horizon stays
            // inside the input history; past it their age overflows.
            s.steps = 1000;
            s.burn_in = 200;
            s.plant.w = vec![vec![0.0]];
            let r = run(&s, 1).unwrap();
            assert!(!r.failed(), "{kind} {mode:?}");
            for l in &r.loops {
                assert_eq!(l.lqg, Some(0.0), "{kind} {mode:?}");
            }
        }
    }
}

#[test]
fn noiseless_loop_with_fresh_samples_converges() {
    let policy = PolicyConfig { kind: PolicyKind::Udp, ..Default::default() };
    let mut s = Scenario::reference(1, policy, MacConfig { p_loss: 0.0, ..Default::default() });
    s.steps = 300;
    s.burn_in = 0;
    s.plant.w = vec![vec![0.0]];
    s.plant.x0 = vec![5.0];
    let mut traj = Trajectory::default();
    run_observed(&s, 0, &mut traj).unwrap();
    // Fit the worst per-step contraction once the first sample has arrived.
    let rho =
        traj.x[2..].windows(2).filter(|w| w[0].abs() > 1e-250).map(|w| (w[1] / w[0]).abs()).fold(0.0f64, f64::max);
    assert!(rho < 1.0, "rho = {rho}");
    for (k, x) in traj.x.iter().enumerate().skip(2) {
        assert!(x.abs() <= traj.x[2].abs() * rho.powi(k as i32 - 2) * (1.0 + 1e-9));
    }
    assert!(traj.x[300].abs() < 1e-12);
}
