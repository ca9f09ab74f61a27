use super::VelocityField;
use crate::error::{Error, Result};

/// Marginal velocity `E[x¹ − x⁰ | x_t = x]` for independent endpoints
/// `x⁰ ~ N(μ₀, s₀²)` and `x¹ ~ N(μ₁, s₁²)`. A zero target std gives the
/// point-mass field `(μ₁ − x)/(1 − t)`.
pub fn gaussian_oracle_velocity(
    t: f64,
    x: f64,
    base: (f64, f64),
    target: (f64, f64),
) -> Result<f64> {
    let (mu0, s0) = base;
    let (mu1, s1) = target;
    if !(s0 > 0.0 && s1 >= 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "oracle needs base std > 0 and target std >= 0, got {s0} and {s1}"
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("t must lie in [0, 1], got {t}")));
    }
    if t == 1.0 && s1 == 0.0 {
        return Err(Error::InvalidArgument(
            "conditioning on x_1 is degenerate for a point-mass target".into(),
        ));
    }
    let mean = (1.0 - t) * mu0 + t * mu1;
    let var = (1.0 - t).powi(2) * s0 * s0 + t * t * s1 * s1;
    let cov = t * s1 * s1 - (1.0 - t) * s0 * s0;
    Ok(mu1 - mu0 + cov / var * (x - mean))
}

/// [`gaussian_oracle_velocity`] as a one-dimensional unconditional field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianOracleField {
    pub base: (f64, f64),
    pub target: (f64, f64),
}

impl GaussianOracleField {
    pub fn new(base: (f64, f64), target: (f64, f64)) -> Result<Self> {
        gaussian_oracle_velocity(0.0, 0.0, base, target)?;
        Ok(Self { base, target })
    }
}

impl VelocityField for GaussianOracleField {
    fn dim_x(&self) -> usize {
        1
    }

    fn dim_cond(&self) -> usize {
        0
    }

    fn velocity(&self, t: f64, _condition: &[f64], x: &[f64]) -> Vec<f64> {
        let t = if self.target.1 == 0.0 {
            t.clamp(0.0, 1.0 - f64::EPSILON)
        } else {
            t.clamp(0.0, 1.0)
        };
        vec![gaussian_oracle_velocity(t, x[0], self.base, self.target)
            .expect("parameters validated at construction")]
    }
}
