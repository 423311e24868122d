//! Co-simulation of networked control loops over a shared wireless channel.
//!
//! * [`control`]: plant, LQR gain, delay-compensating estimator, LQG cost.
//! * [`transport`]: sensor-side admission policies (UDP, TCP Tahoe/Vegas,
//!   zero-wait, event-triggered and their combinations).
//! * [`adaptation`]: RTT-driven adaptation of the event threshold.
//! * [`netsim`]: discrete-event CSMA and polling MAC.
//! * [`harness`]: scenarios, the simulation engine and batch experiments.

pub mod adaptation;
pub mod control;
pub mod harness;
pub mod netsim;
pub mod rng;
pub mod transport;
