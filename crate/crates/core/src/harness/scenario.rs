//! Scenario files.
//!
//! A scenario is a versioned TOML document that fully determines a run
//! together with a seed:
//!
//! ```toml
//! version = 1
//! name = "five-loops"
//! loops = 5
//! steps = 6000
//! seeds = [1, 2, 3]
//!
//! [plant]
//! a = [[1.2]]
//! b = [[1.0]]
//!
//! [policy]
//! kind = "zw-et"
//! lambda = 4.0
//!
//! [mac]
//! mode = "csma"
//!
//! [[activation]]
//! loop = 1
//! step = 4000
//! ```
//!
//! Omitted tables fall back to the defaults of the scalar reference loop
//! (`A = 1.2, B = 1, W = 1, Q = R = 1`) and the default radio parameters.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlError, LoopModel};
use crate::netsim::MacConfig;
use crate::transport::PolicyConfig;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("invalid scenario: {0}")]
    Invalid(String),

    #[error("invalid plant for loop {loop_id}: {source}")]
    Model { loop_id: usize, source: ControlError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
}

impl Default for PlantSpec {
    fn default() -> Self {
        Self {
            a: vec![vec![1.2]],
            b: vec![vec![1.0]],
            w: vec![vec![1.0]],
            q: vec![vec![1.0]],
            r: vec![vec![1.0]],
            x0: vec![0.0],
        }
    }
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ScenarioError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(ScenarioError::Invalid(format!("matrix {name} must be a non-empty rectangular array")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl PlantSpec {
    pub fn model(&self) -> Result<LoopModel, ScenarioError> {
        LoopModel::new(
            matrix("a", &self.a)?,
            matrix("b", &self.b)?,
            matrix("w", &self.w)?,
            matrix("q", &self.q)?,
            matrix("r", &self.r)?,
        )
        .map_err(|source| ScenarioError::Model { loop_id: 0, source })
    }

    pub fn initial_state(&self) -> DVector<f64> {
        DVector::from_vec(self.x0.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Activation {
    #[serde(rename = "loop")]
    pub loop_id: usize,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub loops: usize,
    #[serde(default = "default_steps")]
    pub steps: u64,
    /// First step of the cost average; the window ends at `steps`.
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    #[serde(default = "default_period")]
    pub sampling_period_us: u64,
    #[serde(default)]
    pub plant: PlantSpec,
    /// Per-loop plants; when present there must be one per loop.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plants: Vec<PlantSpec>,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub mac: MacConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub activation: Vec<Activation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
}

fn default_steps() -> u64 {
    6000
}

fn default_burn_in() -> u64 {
    2000
}

fn default_period() -> u64 {
    10_000
}

impl Scenario {
    /// The reference setup: `loops` scalar loops, all active from step 0.
    pub fn reference(loops: usize, policy: PolicyConfig, mac: MacConfig) -> Self {
        Self {
            version: SCENARIO_VERSION,
            name: String::new(),
            loops,
            steps: default_steps(),
            burn_in: default_burn_in(),
            sampling_period_us: default_period(),
            plant: PlantSpec::default(),
            plants: Vec::new(),
            policy,
            mac,
            activation: Vec::new(),
            seeds: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn plant_spec(&self, loop_id: usize) -> &PlantSpec {
        self.plants.get(loop_id).unwrap_or(&self.plant)
    }

    pub fn activation_step(&self, loop_id: usize) -> u64 {
        self.activation.iter().find(|a| a.loop_id == loop_id).map_or(0, |a| a.step)
    }

    pub fn models(&self) -> Result<Vec<LoopModel>, ScenarioError> {
        (0..self.loops)
            .map(|i| {
                self.plant_spec(i).model().map_err(|e| match e {
                    ScenarioError::Model { source, .. } => ScenarioError::Model { loop_id: i, source },
                    other => other,
                })
            })
            .collect()
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if self.version != SCENARIO_VERSION {
            return invalid(format!("unsupported version {} (expected {SCENARIO_VERSION})", self.version));
        }
        if self.loops == 0 {
            return invalid("at least one loop is required".into());
        }
        if self.sampling_period_us == 0 {
            return invalid("sampling_period_us must be positive".into());
        }
        if self.burn_in > self.steps {
            return invalid(format!("burn_in {} exceeds steps {}", self.burn_in, self.steps));
        }
        if !self.plants.is_empty() && self.plants.len() != self.loops {
            return invalid(format!("{} plants given for {} loops", self.plants.len(), self.loops));
        }
        for a in &self.activation {
            if a.loop_id >= self.loops {
                return invalid(format!("activation references missing loop {}", a.loop_id));
            }
            if a.step >= self.steps {
                return invalid(format!("activation step {} is not before the run end {}", a.step, self.steps));
            }
        }
        for (i, a) in self.activation.iter().enumerate() {
            if self.activation[..i].iter().any(|b| b.loop_id == a.loop_id) {
                return invalid(format!("loop {} activated twice", a.loop_id));
            }
        }
        if !(self.policy.lambda > 0.0) {
            return invalid("lambda must be positive".into());
        }
        if let Some(ta) = &self.policy.adaptation {
            if !(ta.initial_lambda > 0.0) || !(ta.decrease_factor > 1.0) || ta.batch_size == 0 || ta.window == 0 {
                return invalid(
                    "adaptation needs initial_lambda > 0, decrease_factor > 1, batch_size and window > 0".into(),
                );
            }
        }
        let mac = &self.mac;
        let probs = std::iter::once(mac.p_loss).chain(mac.p_loss_per_loop.iter().flatten().copied());
        for p in probs {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("loss probability {p} outside [0, 1]"));
            }
        }
        if mac.phy_rate_kbps == 0 || mac.buffer_capacity == 0 {
            return invalid("phy_rate_kbps and buffer_capacity must be positive".into());
        }
        if mac.csma.be_min > mac.csma.be_max || mac.csma.be_max > 16 {
            return invalid("need be_min <= be_max <= 16".into());
        }
        for (i, model) in self.models()?.iter().enumerate() {
            let x0 = &self.plant_spec(i).x0;
            if x0.len() != model.state_dim() {
                return invalid(format!("x0 of loop {i} has {} entries for n={}", x0.len(), model.state_dim()));
            }
        }
        Ok(())
    }
}
