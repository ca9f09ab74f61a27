//! Iterative latent-distribution refinement.
//!
//! Two diagonal Gaussians are adapted jointly: one over the generator's
//! latent (the "video" latent) and one over the value evaluator's latent.
//! Every iteration samples `M` video latents, decodes each, samples `N` value
//! latents per decoded trajectory, scores every value sample by SNR, and
//! refits both distributions from their elites. After `K` iterations one
//! latent pair is drawn and decoded into an action chunk.

use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{gaussian_blend, gaussian_fit, gaussian_sample, DiagonalGaussian};
use crate::stream::SeededStream;
use crate::valuation::{
    exploration_score, perturb_values, snr, value_components, step_rewards, ValuationConfig,
    ValueSample,
};
use crate::worldgen::{decode_knots, extract_action_chunk, render, Frame, PointMassWorld, Trajectory};

/// Something a decoded latent can turn into executable actions.
pub trait ActionSource {
    fn action_chunk(&self, chunk_len: usize) -> Result<Vec<Vec<f64>>>;
}

impl ActionSource for Trajectory {
    fn action_chunk(&self, chunk_len: usize) -> Result<Vec<Vec<f64>>> {
        extract_action_chunk(self, chunk_len)
    }
}

/// Maps a latent vector to a decoded plan candidate.
pub trait LatentGenerator: Sync {
    type Output: ActionSource + Send + Sync;

    fn latent_dim(&self) -> usize;

    fn generate(&self, z: &[f64]) -> Result<Self::Output>;
}

/// Stochastic value estimates for a decoded candidate.
///
/// `features` is computed once per candidate and shared by its `N` value
/// latents.
pub trait ValueModel<X>: Sync {
    type Features: Send + Sync;

    fn latent_dim(&self) -> usize;

    fn features(&self, x: &X) -> Result<Self::Features>;

    fn evaluate(&self, features: &Self::Features, z_val: &[f64]) -> Result<ValueSample>;
}

/// Control-knot generator over a point-mass world.
#[derive(Clone, Debug)]
pub struct KnotGenerator {
    pub world: PointMassWorld,
}

impl LatentGenerator for KnotGenerator {
    type Output = Trajectory;

    fn latent_dim(&self) -> usize {
        self.world.latent_dim()
    }

    fn generate(&self, z: &[f64]) -> Result<Trajectory> {
        decode_knots(z, &self.world)
    }
}

/// Dense-reward segment returns plus latent-scaled noise.
#[derive(Clone, Debug)]
pub struct AnalyticValue {
    world: PointMassWorld,
    config: ValuationConfig,
    goal_frame: Frame,
}

impl AnalyticValue {
    pub fn new(world: PointMassWorld, config: ValuationConfig) -> Result<Self> {
        let goal_frame = render(&world, &world.goal_state())?;
        Ok(Self {
            world,
            config,
            goal_frame,
        })
    }

    pub fn config(&self) -> &ValuationConfig {
        &self.config
    }
}

impl ValueModel<Trajectory> for AnalyticValue {
    type Features = Vec<f64>;

    fn latent_dim(&self) -> usize {
        self.config.segments
    }

    fn features(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        let r = step_rewards(traj, &self.world, &self.goal_frame, &self.config)?;
        value_components(&r, &self.config)
    }

    fn evaluate(&self, base: &Vec<f64>, z_val: &[f64]) -> Result<ValueSample> {
        perturb_values(base, z_val, self.config.noise_scale)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalDraw {
    /// Fall back to the best latent pair seen if the final draw scores lower.
    Best,
    /// Use the final draw as is.
    Sample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    #[serde(rename = "K")]
    pub iterations: usize,
    #[serde(rename = "M")]
    pub video_samples: usize,
    #[serde(rename = "N")]
    pub value_samples: usize,
    #[serde(rename = "K1")]
    pub video_elites: usize,
    #[serde(rename = "K2")]
    pub value_elites: usize,
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    pub sigma_min: f64,
    pub sigma_decay: f64,
    pub chunk_len: usize,
    pub d_vid: usize,
    pub d_val: usize,
    pub final_draw: FinalDraw,
    /// Carry the refined distributions over to the next plan call.
    pub warm_start: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            video_samples: 16,
            value_samples: 8,
            video_elites: 4,
            value_elites: 16,
            alpha: 0.8,
            beta: 0.8,
            eps: 1e-6,
            sigma_min: 1e-3,
            sigma_decay: 0.95,
            chunk_len: 8,
            d_vid: 8,
            d_val: 8,
            final_draw: FinalDraw::Best,
            warm_start: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |f: &str, m: String| Err(Error::config(format!("planner.{f}"), m));
        if self.video_samples == 0 {
            return err("M", "must be >= 1".into());
        }
        if self.value_samples == 0 {
            return err("N", "must be >= 1".into());
        }
        if self.video_elites == 0 || self.video_elites > self.video_samples {
            return Err(Error::config(
                "planner.K1",
                format!(
                    "K1 = {} must satisfy 1 <= K1 <= M = {}",
                    self.video_elites, self.video_samples
                ),
            ));
        }
        let mn = self.video_samples * self.value_samples;
        if self.value_elites == 0 || self.value_elites > mn {
            return Err(Error::config(
                "planner.K2",
                format!(
                    "K2 = {} must satisfy 1 <= K2 <= M*N = {mn} (M = {}, N = {})",
                    self.value_elites, self.video_samples, self.value_samples
                ),
            ));
        }
        for (f, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return err(f, format!("must lie in [0, 1], got {v}"));
            }
        }
        if !(self.eps >= 0.0) {
            return err("eps", "must be >= 0".into());
        }
        if !(self.sigma_min > 0.0 && self.sigma_min.is_finite()) {
            return err("sigma_min", "must be > 0".into());
        }
        if !(self.sigma_decay > 0.0 && self.sigma_decay <= 1.0) {
            return err("sigma_decay", "must lie in (0, 1]".into());
        }
        if self.chunk_len == 0 {
            return err("chunk_len", "must be >= 1".into());
        }
        if self.d_vid == 0 || self.d_val == 0 {
            return err("d_vid", "latent dimensions must be >= 1".into());
        }
        Ok(())
    }

    /// Total value evaluations spent by the refinement loop, `K·M·N`.
    pub fn budget(&self) -> usize {
        self.iterations * self.video_samples * self.value_samples
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestCandidate {
    pub score: f64,
    pub z_vid: Vec<f64>,
    pub z_val: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerState {
    pub f_vid: DiagonalGaussian,
    pub f_val: DiagonalGaussian,
    pub iteration: usize,
    pub best: Option<BestCandidate>,
}

impl PlannerState {
    pub fn new(f_vid: DiagonalGaussian, f_val: DiagonalGaussian) -> Self {
        Self {
            f_vid,
            f_val,
            iteration: 0,
            best: None,
        }
    }

    /// Standard Gaussians over both latents.
    pub fn standard(config: &PlannerConfig) -> Result<Self> {
        Ok(Self::new(
            DiagonalGaussian::standard(config.d_vid)?,
            DiagonalGaussian::standard(config.d_val)?,
        ))
    }

    pub fn best_score(&self) -> f64 {
        self.best.as_ref().map_or(f64::NEG_INFINITY, |b| b.score)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub mean_elite_phi: f64,
    pub max_phi: f64,
    pub best_phi: f64,
    pub mean_sigma_vid: f64,
    pub mean_sigma_val: f64,
    pub video_elites: Vec<usize>,
    /// Flattened `m·N + n` indices.
    pub value_elites: Vec<usize>,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub refine_ms: f64,
    pub final_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug)]
pub struct PlanResult<X> {
    pub action_chunk: Vec<Vec<f64>>,
    pub chosen: X,
    pub z_vid: Vec<f64>,
    pub z_val: Vec<f64>,
    pub score: f64,
    pub used_best_fallback: bool,
    pub history: Vec<IterationRecord>,
    pub final_state: PlannerState,
    pub timings: PhaseTimings,
}

/// Indices of the `k` largest scores, best first; ties go to the lower index.
/// NaN ranks below every number.
pub fn select_elites(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot select {k} elites from {} scores",
            scores.len()
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (scores[a], scores[b]);
        match (x.is_nan(), y.is_nan()) {
            (true, true) => std::cmp::Ordering::Equal,
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            _ => y.partial_cmp(&x).unwrap(),
        }
    });
    idx.truncate(k);
    Ok(idx)
}

fn check_dims<G, V>(generator: &G, evaluator: &V, config: &PlannerConfig) -> Result<()>
where
    G: LatentGenerator,
    V: ValueModel<G::Output>,
{
    check_dim("generator latent (d_vid)", config.d_vid, generator.latent_dim())?;
    check_dim("value latent (d_val)", config.d_val, evaluator.latent_dim())
}

/// Run `K` refinement iterations from standard Gaussians, then decode.
pub fn plan<G, V>(
    generator: &G,
    evaluator: &V,
    config: &PlannerConfig,
    stream: &SeededStream,
) -> Result<PlanResult<G::Output>>
where
    G: LatentGenerator,
    V: ValueModel<G::Output>,
{
    config.validate()?;
    plan_from(generator, evaluator, config, stream, PlannerState::standard(config)?)
}

/// As [`plan`], starting from caller-supplied distributions (warm start).
/// The running best is reset.
pub fn plan_from<G, V>(
    generator: &G,
    evaluator: &V,
    config: &PlannerConfig,
    stream: &SeededStream,
    initial: PlannerState,
) -> Result<PlanResult<G::Output>>
where
    G: LatentGenerator,
    V: ValueModel<G::Output>,
{
    config.validate()?;
    check_dims(generator, evaluator, config)?;
    check_dim("initial f_vid", config.d_vid, initial.f_vid.dim())?;
    check_dim("initial f_val", config.d_val, initial.f_val.dim())?;
    let started = Instant::now();
    let mut state = PlannerState::new(initial.f_vid, initial.f_val);
    let mut history = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let (next, record) = iterate(&state, generator, evaluator, config, stream)?;
        state = next;
        history.push(record);
    }
    let refine_ms = ms_since(started);
    let final_started = Instant::now();
    let mut result = final_decode(state, generator, evaluator, config, stream)?;
    result.history = history;
    result.timings = PhaseTimings {
        refine_ms,
        final_ms: ms_since(final_started),
        total_ms: ms_since(started),
    };
    Ok(result)
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

struct Exploration {
    z_vid: Vec<f64>,
    z_vals: Vec<Vec<f64>>,
    snrs: Vec<f64>,
    phi: f64,
}

fn explore<G, V>(
    m: usize,
    state: &PlannerState,
    generator: &G,
    evaluator: &V,
    config: &PlannerConfig,
    iter_stream: &SeededStream,
) -> Result<Exploration>
where
    G: LatentGenerator,
    V: ValueModel<G::Output>,
{
    let vid_stream = iter_stream.derive_indexed("vid", m);
    let z_vid = gaussian_sample(&state.f_vid, &vid_stream, 1)?.remove(0);
    let x = generator.generate(&z_vid)?;
    let features = evaluator.features(&x)?;
    let mut z_vals = Vec::with_capacity(config.value_samples);
    let mut snrs = Vec::with_capacity(config.value_samples);
    for n in 0..config.value_samples {
        let z_val = gaussian_sample(&state.f_val, &vid_stream.derive_indexed("val", n), 1)?.remove(0);
        let v = evaluator.evaluate(&features, &z_val)?;
        snrs.push(snr(&v, config.eps));
        z_vals.push(z_val);
    }
    let finite: Vec<f64> = snrs.iter().copied().filter(|s| s.is_finite()).collect();
    let phi = exploration_score(&finite).unwrap_or(f64::NAN);
    Ok(Exploration {
        z_vid,
        z_vals,
        snrs,
        phi,
    })
}

/// One refinement step: sample, decode, score, select elites, refit, decay,
/// smooth, floor.
pub fn iterate<G, V>(
    state: &PlannerState,
    generator: &G,
    evaluator: &V,
    config: &PlannerConfig,
    stream: &SeededStream,
) -> Result<(PlannerState, IterationRecord)>
where
    G: LatentGenerator,
    V: ValueModel<G::Output>,
{
    let started = Instant::now();
    let k = state.iteration + 1;
    let iter_stream = stream.derive_indexed("iter", k);
    let explorations: Vec<Exploration> = (0..config.video_samples)
        .into_par_iter()
        .map(|m| explore(m, state, generator, evaluator, config, &iter_stream))
        .collect::<Result<_>>()?;

    let phis: Vec<f64> = explorations.iter().map(|e| e.phi).collect();
    let finite_videos = phis.iter().filter(|p| p.is_finite()).count();
    if finite_videos == 0 {
        return Err(Error::NonFinite(format!(
            "iteration {k}: every exploration score is non-finite"
        )));
    }
    if finite_videos < phis.len() {
        for (m, p) in phis.iter().enumerate().filter(|(_, p)| !p.is_finite()) {
            warn!("iteration {k}: video sample {m} scored {p}; excluded from elites");
        }
    }
    let masked: Vec<f64> = phis
        .iter()
        .map(|p| if p.is_finite() { *p } else { f64::NAN })
        .collect();
    let video_elites = select_elites(&masked, config.video_elites.min(finite_videos))?;

    let n_val = config.value_samples;
    let flat_snr: Vec<f64> = explorations
        .iter()
        .flat_map(|e| e.snrs.iter().map(|s| if s.is_finite() { *s } else { f64::NAN }))
        .collect();
    let finite_values = flat_snr.iter().filter(|s| !s.is_nan()).count();
    let value_elites = select_elites(&flat_snr, config.value_elites.min(finite_values))?;

    // Refit in sample order so a full elite set reproduces the unselected fit
    // bit for bit.
    let mut vid_order = video_elites.clone();
    vid_order.sort_unstable();
    let mut val_order = value_elites.clone();
    val_order.sort_unstable();
    let elite_vid: Vec<&[f64]> = vid_order
        .iter()
        .map(|&m| explorations[m].z_vid.as_slice())
        .collect();
    let elite_val: Vec<&[f64]> = val_order
        .iter()
        .map(|&i| explorations[i / n_val].z_vals[i % n_val].as_slice())
        .collect();
    let update = |elites: &[&[f64]], prev: &DiagonalGaussian| -> Result<DiagonalGaussian> {
        let fitted = gaussian_fit(elites)?.scale_std(config.sigma_decay);
        gaussian_blend(&fitted, &prev.moments(), config.alpha, config.beta)?.floored(config.sigma_min)
    };
    let f_vid = update(&elite_vid, &state.f_vid)?;
    let f_val = update(&elite_val, &state.f_val)?;

    let top = video_elites[0];
    let mut best = state.best.clone();
    if phis[top] > state.best_score() {
        let e = &explorations[top];
        let n_best = select_elites(
            &e.snrs
                .iter()
                .map(|s| if s.is_finite() { *s } else { f64::NAN })
                .collect::<Vec<_>>(),
            1,
        )?[0];
        best = Some(BestCandidate {
            score: phis[top],
            z_vid: e.z_vid.clone(),
            z_val: e.z_vals[n_best].clone(),
        });
    }
    let mean_elite_phi =
        video_elites.iter().map(|&m| phis[m]).sum::<f64>() / video_elites.len() as f64;
    let next = PlannerState {
        f_vid,
        f_val,
        iteration: k,
        best,
    };
    let record = IterationRecord {
        iter: k,
        mean_elite_phi,
        max_phi: phis[top],
        best_phi: next.best_score(),
        mean_sigma_vid: next.f_vid.mean_std(),
        mean_sigma_val: next.f_val.mean_std(),
        video_elites,
        value_elites,
        wall_ms: ms_since(started),
    };
    Ok((next, record))
}

/// Draw one latent pair from the refined distributions and decode it. Under
/// [`FinalDraw::Best`], a draw scoring below the running best is replaced by
/// the running best's latents.
pub fn final_decode<G, V>(
    state: PlannerState,
    generator: &G,
    evaluator: &V,
    config: &PlannerConfig,
    stream: &SeededStream,
) -> Result<PlanResult<G::Output>>
where
    G: LatentGenerator,
    V: ValueModel<G::Output>,
{
    let started = Instant::now();
    let s = stream.derive("final");
    let z_vid = gaussian_sample(&state.f_vid, &s.derive("vid"), 1)?.remove(0);
    let z_val = gaussian_sample(&state.f_val, &s.derive("val"), 1)?.remove(0);
    let x = generator.generate(&z_vid)?;
    let v = evaluator.evaluate(&evaluator.features(&x)?, &z_val)?;
    let score = snr(&v, config.eps);
    if !score.is_finite() && state.best.is_none() {
        return Err(Error::NonFinite(format!("final draw scored {score}")));
    }

    let fallback = match (&state.best, config.final_draw) {
        (Some(b), FinalDraw::Best) if !(score >= b.score) => Some(b.clone()),
        _ => None,
    };
    let used_best_fallback = fallback.is_some();
    let (chosen, z_vid, z_val, score) = match fallback {
        Some(b) => (generator.generate(&b.z_vid)?, b.z_vid, b.z_val, b.score),
        None => (x, z_vid, z_val, score),
    };
    let action_chunk = chosen.action_chunk(config.chunk_len)?;
    let final_ms = ms_since(started);
    Ok(PlanResult {
        action_chunk,
        chosen,
        z_vid,
        z_val,
        score,
        used_best_fallback,
        history: Vec::new(),
        final_state: state,
        timings: PhaseTimings {
            refine_ms: 0.0,
            final_ms,
            total_ms: final_ms,
        },
    })
}
