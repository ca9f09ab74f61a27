//! Flow matching on the linear path `x_t = (1 − t)·x⁰ + t·x¹` with target
//! velocity `x¹ − x⁰`, a small tanh MLP velocity field trained with Adam, an
//! explicit Euler sampler, and the closed-form velocity for Gaussian
//! endpoints.

mod mlp;
mod oracle;
pub mod staged;
pub mod toy;

pub use mlp::{config_hash, Adam, CheckpointHeader, MlpField, ACTIVATION};
pub use oracle::{gaussian_oracle_velocity, GaussianOracleField};

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::stream::SeededStream;

/// `v(t, condition, x_t)`, same dimension as `x_t`.
pub trait VelocityField: Sync {
    fn dim_x(&self) -> usize;
    fn dim_cond(&self) -> usize;
    fn velocity(&self, t: f64, condition: &[f64], x: &[f64]) -> Vec<f64>;
}

/// `(x_t, x¹ − x⁰)` on the linear path.
pub fn interpolate(x0: &[f64], x1: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim("interpolate endpoints", x0.len(), x1.len())?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("t must lie in [0, 1], got {t}")));
    }
    let xt = x0.iter().zip(x1).map(|(a, b)| (1.0 - t) * a + t * b).collect();
    let target = x0.iter().zip(x1).map(|(a, b)| b - a).collect();
    Ok((xt, target))
}

/// Base/target pairs with their conditions and path times.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowBatch {
    pub x0: Vec<Vec<f64>>,
    pub x1: Vec<Vec<f64>>,
    pub condition: Vec<Vec<f64>>,
    pub t: Vec<f64>,
}

impl FlowBatch {
    pub fn new(
        x0: Vec<Vec<f64>>,
        x1: Vec<Vec<f64>>,
        condition: Vec<Vec<f64>>,
        t: Vec<f64>,
    ) -> Result<Self> {
        let n = x0.len();
        if n == 0 {
            return Err(Error::Empty("flow batch"));
        }
        check_dim("flow batch x1 count", n, x1.len())?;
        check_dim("flow batch condition count", n, condition.len())?;
        check_dim("flow batch t count", n, t.len())?;
        let (dx, dc) = (x0[0].len(), condition[0].len());
        for i in 0..n {
            check_dim("flow batch x0", dx, x0[i].len())?;
            check_dim("flow batch x1", dx, x1[i].len())?;
            check_dim("flow batch condition", dc, condition[i].len())?;
            if !(0.0..=1.0).contains(&t[i]) {
                return Err(Error::InvalidArgument(format!("t[{i}] = {} outside [0, 1]", t[i])));
            }
        }
        Ok(Self {
            x0,
            x1,
            condition,
            t,
        })
    }

    /// As [`FlowBatch::new`] with `t ~ U[0, 1]` drawn from `stream`.
    pub fn with_uniform_times(
        x0: Vec<Vec<f64>>,
        x1: Vec<Vec<f64>>,
        condition: Vec<Vec<f64>>,
        stream: &SeededStream,
    ) -> Result<Self> {
        let mut rng = stream.rng();
        let t = (0..x0.len()).map(|_| rng.uniform()).collect();
        Self::new(x0, x1, condition, t)
    }

    pub fn len(&self) -> usize {
        self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }

    pub fn dim_x(&self) -> usize {
        self.x0[0].len()
    }

    pub fn dim_cond(&self) -> usize {
        self.condition[0].len()
    }
}

/// Mean over the batch of `‖v(t, c, x_t) − (x¹ − x⁰)‖²`.
pub fn fm_loss<F: VelocityField + ?Sized>(field: &F, batch: &FlowBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("flow batch"));
    }
    check_dim("field x dimension", field.dim_x(), batch.dim_x())?;
    check_dim("field condition dimension", field.dim_cond(), batch.dim_cond())?;
    let per_pair: Vec<f64> = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let (xt, target) = interpolate(&batch.x0[i], &batch.x1[i], batch.t[i])?;
            let v = field.velocity(batch.t[i], &batch.condition[i], &xt);
            Ok(v.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum())
        })
        .collect::<Result<_>>()?;
    Ok(per_pair.iter().sum::<f64>() / batch.len() as f64)
}

/// Explicit Euler on `dx/dt = v(t, c, x)` from `t = 0` to `t = 1`.
pub fn euler_sample<F: VelocityField + ?Sized>(
    field: &F,
    z0: &[f64],
    condition: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("euler_sample needs steps >= 1".into()));
    }
    check_dim("euler_sample start", field.dim_x(), z0.len())?;
    check_dim("euler_sample condition", field.dim_cond(), condition.len())?;
    let dt = 1.0 / steps as f64;
    let mut x = z0.to_vec();
    for i in 0..steps {
        let v = field.velocity(i as f64 * dt, condition, &x);
        x.iter_mut().zip(&v).for_each(|(xi, vi)| *xi += dt * vi);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("euler state at step {i} of {steps}")));
        }
    }
    Ok(x)
}
