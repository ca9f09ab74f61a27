//! One-dimensional Gaussian-to-Gaussian flow: training from samples and
//! comparison against the closed-form field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmatch::{Adam, FlowBatch, GaussianOracleField, MlpField, VelocityField};
use crate::stream::SeededStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyFlowConfig {
    /// `(mean, std)` of the base distribution.
    pub base: (f64, f64),
    /// `(mean, std)` of the target distribution.
    pub target: (f64, f64),
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch_size: usize,
    /// Initial learning rate, decayed linearly to a hundredth of itself.
    pub learning_rate: f64,
}

impl Default for ToyFlowConfig {
    fn default() -> Self {
        Self {
            base: (0.0, 1.0),
            target: (1.0, 1.5),
            hidden: vec![16, 16],
            steps: 2000,
            batch_size: 1024,
            learning_rate: 1e-2,
        }
    }
}

/// Train a fresh field on independent base/target draws, one new batch per
/// step. Returns the field and the per-step losses.
pub fn train_toy_flow(config: &ToyFlowConfig, stream: &SeededStream) -> Result<(MlpField, Vec<f64>)> {
    if config.steps == 0 || config.batch_size == 0 {
        return Err(Error::InvalidArgument("steps and batch_size must be >= 1".into()));
    }
    let mut field = MlpField::new(1, 0, &config.hidden, &stream.derive("init"))?;
    let mut adam = Adam::new(field.param_count());
    let mut losses = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let s = stream.derive_indexed("step", step);
        let mut rng = s.derive("pairs").rng();
        let (m0, s0) = config.base;
        let (m1, s1) = config.target;
        let x0 = (0..config.batch_size).map(|_| vec![m0 + s0 * rng.standard_normal()]).collect();
        let x1 = (0..config.batch_size).map(|_| vec![m1 + s1 * rng.standard_normal()]).collect();
        let batch = FlowBatch::with_uniform_times(x0, x1, vec![vec![]; config.batch_size], &s.derive("t"))?;
        let frac = step as f64 / config.steps as f64;
        let lr = config.learning_rate * (1.0 - 0.99 * frac);
        losses.push(field.train_step(&mut adam, &batch, lr)?);
    }
    Ok((field, losses))
}

/// Root-mean-square difference between `field` and the closed-form field on
/// the grid `ts × xs`.
pub fn oracle_rmse<F: VelocityField + ?Sized>(
    field: &F,
    oracle: &GaussianOracleField,
    ts: &[f64],
    xs: &[f64],
) -> Result<f64> {
    if ts.is_empty() || xs.is_empty() {
        return Err(Error::Empty("oracle_rmse grid"));
    }
    let mut sum = 0.0;
    for &t in ts {
        for &x in xs {
            let d = field.velocity(t, &[], &[x])[0] - oracle.velocity(t, &[], &[x])[0];
            sum += d * d;
        }
    }
    Ok((sum / (ts.len() * xs.len()) as f64).sqrt())
}

/// `t ∈ {0.1, …, 0.9}` and 41 points evenly spaced on `[−2, 2]`.
pub fn standard_grid() -> (Vec<f64>, Vec<f64>) {
    let ts = (1..=9).map(|i| i as f64 / 10.0).collect();
    let xs = (0..=40).map(|i| -2.0 + i as f64 * 0.1).collect();
    (ts, xs)
}
