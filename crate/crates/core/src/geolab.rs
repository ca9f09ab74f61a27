//! Monte Carlo feasible-mass experiments.
//!
//! - Uniform sampling of the trajectory box shows the mass of the
//!   ε-neighbourhood of a thin manifold decaying with the horizon.
//! - Latent sampling through [`decode_affine`] keeps that mass at `1 − δ`, so
//!   the latent/uniform ratio grows with the horizon.
//! - On a landscape with a rare high-value region, iterative refinement finds
//!   the region more often than one-shot prior sampling at equal budget.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::inv_beta_reg;

use crate::error::{Error, Result};
use crate::planner::{plan, ActionSource, LatentGenerator, PlannerConfig, ValueModel};
use crate::stream::SeededStream;
use crate::valuation::ValueSample;
use crate::worldgen::{decode_affine_with, is_feasible, AffineManifoldSpec, TrajectorySpace};

/// Samples drawn per substream. Fixed so results do not depend on the number
/// of worker threads.
const CHUNK: usize = 4096;

/// Binomial proportion with a 95% Clopper–Pearson interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    pub ratio: f64,
    pub hits: u64,
    pub samples_used: u64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MassEstimate {
    pub fn from_counts(hits: u64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("mass estimate needs at least one sample".into()));
        }
        if hits > n {
            return Err(Error::InvalidArgument(format!("{hits} hits out of {n} samples")));
        }
        let ratio = hits as f64 / n as f64;
        let (lo, hi) = clopper_pearson(hits, n, 0.05);
        Ok(Self {
            ratio,
            hits,
            samples_used: n,
            ci_low: lo.min(ratio),
            ci_high: hi.max(ratio),
        })
    }

    pub fn ci_width(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// Exact binomial interval at confidence `1 − alpha`.
pub fn clopper_pearson(hits: u64, n: u64, alpha: f64) -> (f64, f64) {
    let (x, n) = (hits as f64, n as f64);
    let lo = if hits == 0 {
        0.0
    } else {
        inv_beta_reg(x, n - x + 1.0, alpha / 2.0)
    };
    let hi = if hits as f64 == n {
        1.0
    } else {
        inv_beta_reg(x + 1.0, n - x, 1.0 - alpha / 2.0)
    };
    (lo, hi)
}

fn chunked_count<F>(n: usize, stream: &SeededStream, hit: F) -> Result<u64>
where
    F: Fn(&mut crate::stream::StreamRng) -> Result<bool> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let counts: Vec<u64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.derive_indexed("chunk", c).rng();
            let len = CHUNK.min(n - c * CHUNK);
            let mut count = 0u64;
            for _ in 0..len {
                if hit(&mut rng)? {
                    count += 1;
                }
            }
            Ok(count)
        })
        .collect::<Result<_>>()?;
    Ok(counts.iter().sum())
}

/// Fraction of uniform draws from the box that land within `epsilon` of the
/// manifold.
pub fn estimate_feasible_mass(
    spec: &AffineManifoldSpec,
    space: &TrajectorySpace,
    n_samples: usize,
    stream: &SeededStream,
) -> Result<MassEstimate> {
    crate::error::check_dim("manifold vs trajectory space", space.ambient_dim(), spec.ambient_dim())?;
    if !space.contains(spec.offset()) {
        return Err(Error::InvalidArgument("manifold offset lies outside the trajectory box".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    let hits = chunked_count(n_samples, stream, |rng| {
        let mut x = Vec::with_capacity(space.ambient_dim());
        space.sample_uniform_into(rng, &mut x);
        is_feasible(&x, spec)
    })?;
    MassEstimate::from_counts(hits, n_samples as u64)
}

/// Fraction of standard-normal latents whose decoded point is feasible.
pub fn estimate_latent_mass(
    spec: &AffineManifoldSpec,
    n_samples: usize,
    stream: &SeededStream,
) -> Result<MassEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    let hits = chunked_count(n_samples, stream, |rng| {
        let z = rng.standard_normal_vec(spec.intrinsic_dim());
        let (x, _) = decode_affine_with(&z, spec, rng)?;
        is_feasible(&x, spec)
    })?;
    MassEstimate::from_counts(hits, n_samples as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntrinsicDim {
    /// Same `d` at every horizon.
    Fixed(usize),
    /// `d = per_step · H`.
    PerStep(usize),
}

/// Horizon-indexed family of centered affine patches in unit boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManifoldFamily {
    pub dim_state: usize,
    pub dim_action: usize,
    pub intrinsic: IntrinsicDim,
    pub epsilon: f64,
    pub delta: f64,
    pub off_scale: f64,
}

impl Default for ManifoldFamily {
    fn default() -> Self {
        Self {
            dim_state: 1,
            dim_action: 1,
            intrinsic: IntrinsicDim::Fixed(1),
            epsilon: 0.05,
            delta: 0.1,
            off_scale: 2.0,
        }
    }
}

impl ManifoldFamily {
    /// Box `[0,1]^D` with a patch whose `d` basis vectors are normalized
    /// indicators of disjoint coordinate groups, centered on the box center.
    pub fn instantiate(&self, horizon: usize) -> Result<(AffineManifoldSpec, TrajectorySpace)> {
        let space = TrajectorySpace::unit_box(horizon, self.dim_state, self.dim_action)?;
        let dim = space.ambient_dim();
        let d = match self.intrinsic {
            IntrinsicDim::Fixed(d) => d,
            IntrinsicDim::PerStep(k) => k * horizon,
        };
        if d == 0 || d >= dim {
            return Err(Error::InvalidArgument(format!(
                "intrinsic dimension {d} must satisfy 1 <= d < D = {dim} at horizon {horizon}"
            )));
        }
        let mut basis = vec![vec![0.0; dim]; d];
        let mut offset = vec![0.5; dim];
        for j in 0..d {
            let (lo, hi) = (j * dim / d, (j + 1) * dim / d);
            let w = 1.0 / ((hi - lo) as f64).sqrt();
            for i in lo..hi {
                basis[j][i] = w;
                offset[i] -= 0.5 * w;
            }
        }
        let spec = AffineManifoldSpec::new(basis, offset, self.epsilon, self.delta, self.off_scale)?;
        Ok((spec, space))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ intercept + slope·x`. Needs two distinct `x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    crate::error::check_dim("linear_fit", xs.len(), ys.len())?;
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("linear fit needs at least two points".into()));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("linear fit needs two distinct x values".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub horizon: usize,
    pub ambient_dim: usize,
    pub uniform: MassEstimate,
    /// `ln(ratio)`; `None` when no uniform sample hit the tube.
    pub log_ratio: Option<f64>,
    pub latent: MassEstimate,
    /// latent ratio / uniform ratio; `None` when the uniform ratio is 0.
    pub reweighting: Option<f64>,
    /// `latent.ci_low / uniform.ci_high`, a conservative lower bound on the
    /// reweighting ratio that stays finite at zero uniform hits.
    pub reweighting_lower: f64,
    /// `latent.ci_high / uniform.ci_low`; infinite at zero uniform hits.
    pub reweighting_upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub points: Vec<DecayPoint>,
    /// Fit of `ln(ratio)` against `H` over points with at least one hit.
    pub fit: Option<LinearFit>,
    pub excluded_horizons: Vec<usize>,
}

impl DecayCurve {
    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn r_squared(&self) -> Option<f64> {
        self.fit.map(|f| f.r_squared)
    }

    pub fn point(&self, horizon: usize) -> Option<&DecayPoint> {
        self.points.iter().find(|p| p.horizon == horizon)
    }
}

/// Uniform and latent feasible mass across a sweep of horizons.
pub fn decay_curve(
    horizons: &[usize],
    family: &ManifoldFamily,
    n_uniform: usize,
    n_latent: usize,
    stream: &SeededStream,
) -> Result<DecayCurve> {
    if horizons.len() < 3 {
        return Err(Error::InvalidArgument("a decay curve needs at least 3 horizons".into()));
    }
    let mut hs = horizons.to_vec();
    hs.sort_unstable();
    hs.dedup();
    let mut points = Vec::with_capacity(hs.len());
    let mut excluded = Vec::new();
    for &h in &hs {
        let (spec, space) = family.instantiate(h)?;
        let s = stream.derive_indexed("H", h);
        let uniform = estimate_feasible_mass(&spec, &space, n_uniform, &s.derive("uniform"))?;
        let latent = estimate_latent_mass(&spec, n_latent, &s.derive("latent"))?;
        let log_ratio = (uniform.hits > 0).then(|| uniform.ratio.ln());
        if log_ratio.is_none() {
            warn!("horizon {h}: no uniform sample hit the tube; excluded from the fit");
            excluded.push(h);
        }
        points.push(DecayPoint {
            horizon: h,
            ambient_dim: space.ambient_dim(),
            uniform,
            log_ratio,
            latent,
            reweighting: (uniform.hits > 0).then(|| latent.ratio / uniform.ratio),
            reweighting_lower: latent.ci_low / uniform.ci_high,
            reweighting_upper: latent.ci_high / uniform.ci_low,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter_map(|p| p.log_ratio.map(|y| (p.horizon as f64, y)))
        .unzip();
    let fit = if xs.len() >= 2 {
        Some(linear_fit(&xs, &ys)?)
    } else {
        warn!("fewer than two horizons with hits; no slope fitted");
        None
    };
    Ok(DecayCurve {
        points,
        fit,
        excluded_horizons: excluded,
    })
}

/// Latent space `R^dim` under a standard-normal prior, with a planted
/// half-space `{z : ⟨z, u⟩ ≥ q}` of prior mass `p` as the ε-optimal set.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedLandscape {
    direction: Vec<f64>,
    threshold: f64,
    mass: f64,
}

impl PlantedLandscape {
    /// `u = (1, …, 1)/√dim`; `q = Φ⁻¹(1 − p)`.
    pub fn new(dim: usize, mass: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("landscape dimension must be >= 1".into()));
        }
        if !(mass > 0.0 && mass <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "planted mass must lie in (0, 1], got {mass}; a zero-mass target is undiscoverable"
            )));
        }
        let threshold = if mass == 1.0 {
            f64::NEG_INFINITY
        } else {
            Normal::standard().inverse_cdf(1.0 - mass)
        };
        Ok(Self {
            direction: vec![1.0 / (dim as f64).sqrt(); dim],
            threshold,
            mass,
        })
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Projection onto the planted direction; the landscape's value.
    pub fn height(&self, z: &[f64]) -> f64 {
        z.iter().zip(&self.direction).map(|(a, b)| a * b).sum()
    }

    pub fn is_hit(&self, z: &[f64]) -> bool {
        self.height(z) >= self.threshold
    }
}

/// Decoded landscape candidate: the latent itself, exposed as a one-row
/// action chunk.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPoint(pub Vec<f64>);

impl ActionSource for LatentPoint {
    fn action_chunk(&self, chunk_len: usize) -> Result<Vec<Vec<f64>>> {
        if chunk_len != 1 {
            return Err(Error::InvalidArgument("a latent point is a single action".into()));
        }
        Ok(vec![self.0.clone()])
    }
}

impl LatentGenerator for PlantedLandscape {
    type Output = LatentPoint;

    fn latent_dim(&self) -> usize {
        self.dim()
    }

    fn generate(&self, z: &[f64]) -> Result<LatentPoint> {
        crate::error::check_dim("landscape latent", self.dim(), z.len())?;
        Ok(LatentPoint(z.to_vec()))
    }
}

/// Values `(h − 1, h + 1)` for height `h`: mean `h`, population std 1, so the
/// SNR is `h / (1 + eps)` and independent of the value latent.
impl ValueModel<LatentPoint> for PlantedLandscape {
    type Features = f64;

    fn latent_dim(&self) -> usize {
        1
    }

    fn features(&self, x: &LatentPoint) -> Result<f64> {
        Ok(self.height(&x.0))
    }

    fn evaluate(&self, h: &f64, _z_val: &[f64]) -> Result<ValueSample> {
        ValueSample::new(vec![h - 1.0, h + 1.0])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchComparison {
    pub mass: f64,
    pub budget: usize,
    pub repetitions: usize,
    pub one_shot: MassEstimate,
    pub iterative: MassEstimate,
    /// `1 − (1 − p)^budget`.
    pub one_shot_analytic: f64,
}

/// Hit frequency of the planted region for `budget` prior draws versus the
/// planner at the same `K·M·N` budget. The planner hits when any latent it
/// evaluated lies in the region, i.e. when its running best height reaches
/// the threshold.
pub fn one_shot_vs_iterative(
    landscape: &PlantedLandscape,
    budget: usize,
    config: &PlannerConfig,
    repetitions: usize,
    stream: &SeededStream,
) -> Result<SearchComparison> {
    config.validate()?;
    if budget != config.budget() {
        return Err(Error::InvalidArgument(format!(
            "budget {budget} must equal K*M*N = {} for an equal-budget comparison",
            config.budget()
        )));
    }
    if repetitions == 0 {
        return Err(Error::InvalidArgument("repetitions must be >= 1".into()));
    }
    let one_shot_hits: u64 = (0..repetitions)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream.derive("one_shot").derive_indexed("rep", r).rng();
            (0..budget).any(|_| landscape.is_hit(&rng.standard_normal_vec(landscape.dim())))
        })
        .filter(|hit| *hit)
        .count() as u64;
    let iterative_hits: u64 = (0..repetitions)
        .into_par_iter()
        .map(|r| -> Result<bool> {
            let s = stream.derive("iterative").derive_indexed("rep", r);
            let result = plan(landscape, landscape, config, &s)?;
            Ok(result.final_state.best.as_ref().is_some_and(|b| {
                landscape.is_hit(&b.z_vid)
            }))
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|hit| *hit)
        .count() as u64;
    Ok(SearchComparison {
        mass: landscape.mass(),
        budget,
        repetitions,
        one_shot: MassEstimate::from_counts(one_shot_hits, repetitions as u64)?,
        iterative: MassEstimate::from_counts(iterative_hits, repetitions as u64)?,
        one_shot_analytic: 1.0 - (1.0 - landscape.mass()).powi(budget as i32),
    })
}
