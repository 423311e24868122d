//! Control core of a single loop: plant dynamics, LQR synthesis, the
//! controller-side predictor driven by delayed measurements, and LQG cost
//! bookkeeping.
//!
//! All matrices are dense `nalgebra` matrices so the state dimension is
//! generic, although the shipped scenarios are scalar.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default capacity of the input history ring, in sampling steps.
pub const INPUT_HISTORY_CAPACITY: usize = 1024;

/// First step included in the steady-state LQG average.
pub const BURN_IN_STEPS: usize = 2000;
/// Last step included in the steady-state LQG average.
pub const AVERAGE_LAST_STEP: usize = 6000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("Riccati iteration diverged after {iterations} iterations (last step {last_change:e})")]
    Diverged { iterations: usize, last_change: f64 },

    #[error("matrix {0} is singular or ill-conditioned")]
    IllConditioned(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("input history covers {available} steps but the estimate needs {needed}")]
    InsufficientHistory { needed: u64, available: u64 },

    #[error("cost series has {len} entries, at least {needed} required")]
    InsufficientRun { len: usize, needed: usize },
}

pub type Result<T> = std::result::Result<T, ControlError>;

/// Matrices, noise covariance and cost weights of one LTI loop together with
/// its Riccati solution and optimal feedback gain.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    noise_factor: DMatrix<f64>,
}

impl LoopModel {
    pub const RICCATI_TOL: f64 = 1e-12;
    pub const RICCATI_MAX_ITER: usize = 1_000_000;

    /// Validates the matrices and synthesizes `P` and `K`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, w: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(ControlError::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let m = b.ncols();
        if b.nrows() != n || m == 0 {
            return Err(ControlError::Dimension(format!("B must be {n}xm, got {}x{}", b.nrows(), m)));
        }
        check_shape("W", &w, n, n)?;
        check_shape("Q", &q, n, n)?;
        check_shape("R", &r, m, m)?;
        check_symmetric("W", &w)?;
        check_symmetric("Q", &q)?;
        check_symmetric("R", &r)?;
        if r.clone().cholesky().is_none() {
            return Err(ControlError::InvalidModel("R must be positive definite".into()));
        }
        let noise_factor =
            psd_factor(&w).ok_or_else(|| ControlError::InvalidModel("W must be positive semidefinite".into()))?;
        psd_factor(&q).ok_or_else(|| ControlError::InvalidModel("Q must be positive semidefinite".into()))?;

        let p = solve_riccati(&a, &b, &q, &r, Self::RICCATI_TOL, Self::RICCATI_MAX_ITER)?;
        let k = lqr_gain(&p, &a, &b, &r)?;
        Ok(Self { a, b, w, q, r, p, k, noise_factor })
    }

    /// Builds a scalar model (`n = m = 1`).
    pub fn scalar(a: f64, b: f64, w: f64, q: f64, r: f64) -> Result<Self> {
        let s = |v| DMatrix::from_element(1, 1, v);
        Self::new(s(a), s(b), s(w), s(q), s(r))
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Maps a standard normal vector `z` onto a sample of `N(0, W)`.
    pub fn shape_noise(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.noise_factor * z
    }
}

fn check_shape(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(ControlError::Dimension(format!("{name} must be {rows}x{cols}, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(ControlError::InvalidModel(format!("{name} must be symmetric")));
    }
    Ok(())
}

/// Lower-triangular `L` with `L Lᵀ = M` for a symmetric PSD matrix. Zero
/// pivots produce zero columns, so singular covariances are accepted.
fn psd_factor(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let tol = 1e-12 * m.amax().max(1.0);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for c in 0..j {
            d -= l[(j, c)] * l[(j, c)];
        }
        if d < -tol {
            return None;
        }
        if d <= tol {
            // Column must vanish for a PSD matrix.
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for c in 0..j {
                    s -= l[(i, c)] * l[(j, c)];
                }
                if s.abs() > tol.sqrt() {
                    return None;
                }
            }
            continue;
        }
        let pivot = d.sqrt();
        l[(j, j)] = pivot;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for c in 0..j {
                s -= l[(i, c)] * l[(j, c)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    Some(l)
}

/// One application of the Riccati map
/// `Q + AᵀPA − AᵀPB (R + BᵀPB)⁻¹ BᵀPA`.
pub fn riccati_map(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let at = a.transpose();
    let bt_p = b.transpose() * p;
    let gram = r + &bt_p * b;
    let gram_inv = gram.try_inverse().ok_or(ControlError::IllConditioned("R + BᵀPB"))?;
    let at_p = &at * p;
    let cross = &bt_p * a;
    let next = q + &at_p * a - (&at_p * b) * gram_inv * cross;
    // Keep the iterate symmetric against round-off drift.
    Ok((&next + next.transpose()) * 0.5)
}

/// Residual `‖P − F(P)‖_F` of the discrete algebraic Riccati fixed point.
pub fn riccati_residual(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<f64> {
    Ok((p - riccati_map(p, a, b, q, r)?).norm())
}

/// Solves the discrete algebraic Riccati equation by fixed-point iteration
/// starting from `P₀ = Q`.
pub fn solve_riccati(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DMatrix<f64>> {
    let mut p = q.clone();
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        let next = riccati_map(&p, a, b, q, r)?;
        change = (&next - &p).norm();
        if !change.is_finite() {
            break;
        }
        p = next;
        if change <= tol {
            return Ok(p);
        }
    }
    Err(ControlError::Diverged { iterations: max_iter, last_change: change })
}

/// Optimal state-feedback gain `K = (R + BᵀPB)⁻¹ BᵀPA`.
pub fn lqr_gain(p: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let bt_p = b.transpose() * p;
    let gram = r + &bt_p * b;
    let gram_inv = gram.try_inverse().ok_or(ControlError::IllConditioned("R + BᵀPB"))?;
    Ok(gram_inv * bt_p * a)
}

/// Plant state at sampling step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub k: u64,
    pub x: DVector<f64>,
    pub u_prev: DVector<f64>,
}

impl PlantState {
    pub fn new(k: u64, x: DVector<f64>, input_dim: usize) -> Self {
        Self { k, x, u_prev: DVector::zeros(input_dim) }
    }
}

/// `x' = A x + B u + w`, advancing the step counter by one.
pub fn step_plant(plant: &PlantState, model: &LoopModel, u: &DVector<f64>, w: &DVector<f64>) -> Result<PlantState> {
    let n = model.state_dim();
    if plant.x.len() != n || w.len() != n || u.len() != model.input_dim() {
        return Err(ControlError::Dimension(format!(
            "step_plant: x has {}, u has {}, w has {} entries for n={n}, m={}",
            plant.x.len(),
            u.len(),
            w.len(),
            model.input_dim()
        )));
    }
    let x = &model.a * &plant.x + &model.b * u + w;
    Ok(PlantState { k: plant.k + 1, x, u_prev: u.clone() })
}

/// Inputs indexed by absolute step, keeping at most `capacity` of the most
/// recent ones.
#[derive(Debug, Clone, PartialEq)]
pub struct InputHistory {
    first_step: u64,
    inputs: VecDeque<DVector<f64>>,
    capacity: usize,
}

impl InputHistory {
    /// An empty history whose next recorded input belongs to `start_step`.
    pub fn new(start_step: u64, capacity: usize) -> Self {
        Self { first_step: start_step, inputs: VecDeque::with_capacity(capacity), capacity }
    }

    /// Step the next pushed input belongs to.
    pub fn next_step(&self) -> u64 {
        self.first_step + self.inputs.len() as u64
    }

    pub fn first_step(&self) -> u64 {
        self.first_step
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, u: DVector<f64>) {
        if self.inputs.len() == self.capacity {
            self.inputs.pop_front();
            self.first_step += 1;
        }
        self.inputs.push_back(u);
    }

    pub fn get(&self, step: u64) -> Option<&DVector<f64>> {
        if step < self.first_step {
            return None;
        }
        self.inputs.get((step - self.first_step) as usize)
    }

    /// Drops every input recorded for `step` and later.
    pub fn truncate_from(&mut self, step: u64) {
        let keep = step.saturating_sub(self.first_step) as usize;
        self.inputs.truncate(keep);
    }
}

/// What a controller knows: the freshest received measurement and the inputs
/// it has applied since.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub nu: u64,
    pub x_nu: DVector<f64>,
    pub inputs: InputHistory,
}

impl ControllerState {
    /// Controller that knows the plant state `x0` at `start_step`.
    pub fn new(start_step: u64, x0: DVector<f64>, capacity: usize) -> Self {
        Self { nu: start_step, x_nu: x0, inputs: InputHistory::new(start_step, capacity) }
    }

    /// Age of information at step `k`.
    pub fn aoi(&self, k: u64) -> u64 {
        k.saturating_sub(self.nu)
    }

    /// Accepts a measurement if it is fresher than the current one.
    pub fn receive(&mut self, gen_step: u64, x: &DVector<f64>) -> bool {
        if gen_step > self.nu {
            self.nu = gen_step;
            self.x_nu = x.clone();
            true
        } else {
            false
        }
    }
}

/// Predicts the plant state at step `k` from the freshest measurement,
/// `x̂ = A^Δ x[ν] + Σ_{q=1..Δ} A^{q−1} B u[k−q]` with `Δ = k − ν`.
pub fn estimate_state(ctrl: &ControllerState, model: &LoopModel, k: u64) -> Result<DVector<f64>> {
    if k < ctrl.nu {
        return Err(ControlError::Dimension(format!(
            "estimate requested for step {k} before the measurement step {}",
            ctrl.nu
        )));
    }
    let delta = k - ctrl.nu;
    if delta == 0 {
        return Ok(ctrl.x_nu.clone());
    }
    let available = ctrl.inputs.next_step().saturating_sub(ctrl.inputs.first_step().max(ctrl.nu));
    if delta > ctrl.inputs.capacity() as u64 || ctrl.nu < ctrl.inputs.first_step() || ctrl.inputs.next_step() < k {
        return Err(ControlError::InsufficientHistory { needed: delta, available });
    }
    // Roll forward from x[ν]; equal to the closed form term by term.
    let mut x = ctrl.x_nu.clone();
    for step in ctrl.nu..k {
        let u = ctrl.inputs.get(step).ok_or(ControlError::InsufficientHistory { needed: delta, available })?;
        x = &model.a * x + &model.b * u;
    }
    Ok(x)
}

/// `u = −K x̂`.
pub fn control_input(x_hat: &DVector<f64>, k: &DMatrix<f64>) -> DVector<f64> {
    -(k * x_hat)
}

/// Adds the instantaneous cost `xᵀQx + uᵀRu` to `acc`.
pub fn lqg_accumulate(x: &DVector<f64>, u: &DVector<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, acc: f64) -> f64 {
    acc + instantaneous_cost(x, u, q, r)
}

pub fn instantaneous_cost(x: &DVector<f64>, u: &DVector<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    x.dot(&(q * x)) + u.dot(&(r * u))
}

/// Mean instantaneous cost over steps 2000..=6000 (divisor 4001).
pub fn lqg_average(per_step_costs: &[f64]) -> Result<f64> {
    windowed_average(per_step_costs, BURN_IN_STEPS, AVERAGE_LAST_STEP)
}

/// Mean of `per_step_costs[first..=last]`.
pub fn windowed_average(per_step_costs: &[f64], first: usize, last: usize) -> Result<f64> {
    let needed = last + 1;
    if per_step_costs.len() < needed || first > last {
        return Err(ControlError::InsufficientRun { len: per_step_costs.len(), needed });
    }
    let window = &per_step_costs[first..=last];
    Ok(window.iter().sum::<f64>() / window.len() as f64)
}
