//! Reference computations written independently of the library, in plain
//! scalar arithmetic.

#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const A: f64 = 1.2;
pub const B: f64 = 1.0;
pub const Q: f64 = 1.0;
pub const R: f64 = 1.0;

/// Scalar Riccati fixed point by plain iteration from `P = Q`.
pub fn riccati_oracle(a: f64, b: f64, q: f64, r: f64) -> f64 {
    let mut p = q;
    for _ in 0..100_000 {
        let next = q + a * a * p - (a * p * b) * (a * p * b) / (r + b * b * p);
        if (next - p).abs() < 1e-15 * next.abs().max(1.0) {
            return next;
        }
        p = next;
    }
    p
}

/// LQR gain of the scalar loop, `K = (R + B²P)⁻¹ B P A`.
pub fn gain_oracle(a: f64, b: f64, q: f64, r: f64) -> f64 {
    let p = riccati_oracle(a, b, q, r);
    b * p * a / (r + b * b * p)
}

/// Average stage cost of the scalar loop when the controller always holds
/// the previous sample (age one), estimated over `steps` steps:
/// `x̂[k] = A x[k−1] + B u[k−1]`, `u[k] = −K x̂[k]`.
pub fn one_step_age_cost(steps: usize, seed: u64) -> f64 {
    let k_gain = gain_oracle(A, B, Q, R);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut x_prev, mut u_prev) = (0.0f64, 0.0f64, 0.0f64);
    let mut total = 0.0;
    for _ in 0..steps {
        let x_hat = A * x_prev + B * u_prev;
        let u = -k_gain * x_hat;
        total += Q * x * x + R * u * u;
        let w: f64 = StandardNormal.sample(&mut rng);
        x_prev = x;
        u_prev = u;
        x = A * x + B * u + w;
    }
    total / steps as f64
}

/// `Σ_{q=1}^{Δ} A^{q−1} w[k−q]`, the estimation error after `Δ` steps of
/// open-loop prediction.
pub fn error_oracle(w: &[f64], k: usize, delta: usize) -> f64 {
    (1..=delta).map(|q| A.powi(q as i32 - 1) * w[k - q]).sum()
}
