//! Dense rewards, discounted returns, value samples and SNR scoring.
//!
//! The reward follows a 16-component weight layout: eight positive slots
//! (two wrist-view MSE, two wrist-view SSIM, one top-view MSE, one top-view
//! SSIM, two state-proximity) and the smoothness penalties. The point-mass
//! world has a single camera and a single state/action stream, so the one
//! rendered view fills every image slot, the proximity reward fills both
//! proximity slots, and each penalty is counted once on the single stream.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::worldgen::{render, Frame, PointMassWorld, Trajectory};

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_RANGE: f64 = 1.0;

/// Number of weight slots each term `c1..c9` occupies in the total.
pub const TERM_MULTIPLICITY: [f64; 9] = [2.0, 2.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0];

pub const TERM_NAMES: [&str; 9] = [
    "c1_wrist_mse",
    "c2_wrist_ssim",
    "c3_top_mse",
    "c4_top_ssim",
    "c5_state_prox",
    "c6_state_vel",
    "c7_state_acc",
    "c8_action_vel",
    "c9_action_acc",
];

/// Per-slot weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub w_img_mse: f64,
    pub w_img_ssim: f64,
    pub w_state_prox: f64,
    pub w_vel: f64,
    pub w_acc: f64,
    pub w_act_vel: f64,
    pub w_act_acc: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_img_mse: 1.0 / 16.0,
            w_img_ssim: 1.0 / 16.0,
            w_state_prox: 1.0 / 16.0,
            w_vel: -1.0 / 16.0,
            w_acc: -1.0 / 16.0,
            w_act_vel: -0.1 / 16.0,
            w_act_acc: -0.1 / 16.0,
        }
    }
}

impl RewardWeights {
    /// Weight applied to each of `c1..c9`, multiplicity included.
    pub fn term_weights(&self) -> [f64; 9] {
        let per_slot = [
            self.w_img_mse,
            self.w_img_ssim,
            self.w_img_mse,
            self.w_img_ssim,
            self.w_state_prox,
            self.w_vel,
            self.w_acc,
            self.w_act_vel,
            self.w_act_acc,
        ];
        let mut w = [0.0; 9];
        for i in 0..9 {
            w[i] = per_slot[i] * TERM_MULTIPLICITY[i];
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardBreakdown {
    /// Raw term values `c1..c9`.
    pub terms: [f64; 9],
    /// `weight_i · c_i`.
    pub weighted: [f64; 9],
    pub total: f64,
}

/// Everything one step of the dense reward looks at.
#[derive(Clone, Copy, Debug)]
pub struct RewardInputs<'a> {
    pub frame: &'a Frame,
    pub goal_frame: &'a Frame,
    pub state: &'a [f64],
    pub goal_state: &'a [f64],
    pub state_prev: &'a [f64],
    pub state_prev2: &'a [f64],
    pub action: &'a [f64],
    pub action_prev: &'a [f64],
    pub action_prev2: &'a [f64],
}

/// Global (single-window) SSIM with `C1 = (0.01·L)²`, `C2 = (0.03·L)²`, `L = 1`.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    check_dim("ssim frame size", a.size(), b.size())?;
    let (pa, pb) = (a.pixels(), b.pixels());
    let n = pa.len() as f64;
    let mu_a = pa.iter().sum::<f64>() / n;
    let mu_b = pb.iter().sum::<f64>() / n;
    let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
    for (x, y) in pa.iter().zip(pb) {
        let (dx, dy) = (x - mu_a, y - mu_b);
        var_a += dx * dx;
        var_b += dy * dy;
        cov += dx * dy;
    }
    var_a /= n;
    var_b /= n;
    cov /= n;
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    Ok(((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)))
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    check_dim("mse frame size", a.size(), b.size())?;
    let n = a.pixels().len() as f64;
    Ok(a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / n)
}

fn l1_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn l1_second_diff(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(c)
        .map(|((x, y), z)| (x - 2.0 * y + z).abs())
        .sum()
}

pub fn dense_reward(inputs: &RewardInputs<'_>, weights: &RewardWeights) -> Result<RewardBreakdown> {
    let ds = inputs.state.len();
    for s in [inputs.goal_state, inputs.state_prev, inputs.state_prev2] {
        check_dim("dense_reward state", ds, s.len())?;
    }
    let da = inputs.action.len();
    for a in [inputs.action_prev, inputs.action_prev2] {
        check_dim("dense_reward action", da, a.len())?;
    }
    let c_mse = (-0.01 * mse(inputs.frame, inputs.goal_frame)?).exp();
    let c_ssim = (ssim(inputs.frame, inputs.goal_frame)? - 1.0).exp();
    let prox = inputs
        .state
        .iter()
        .zip(inputs.goal_state)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let terms = [
        c_mse,
        c_ssim,
        c_mse,
        c_ssim,
        (-prox).exp(),
        l1_diff(inputs.state, inputs.state_prev),
        l1_second_diff(inputs.state, inputs.state_prev, inputs.state_prev2),
        l1_diff(inputs.action, inputs.action_prev),
        l1_second_diff(inputs.action, inputs.action_prev, inputs.action_prev2),
    ];
    let w = weights.term_weights();
    let mut weighted = [0.0; 9];
    for i in 0..9 {
        weighted[i] = w[i] * terms[i];
    }
    let total = weighted.iter().sum();
    Ok(RewardBreakdown {
        terms,
        weighted,
        total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnSpec {
    pub gamma: f64,
    pub horizon: usize,
}

impl ReturnSpec {
    pub fn new(gamma: f64, horizon: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        Ok(Self { gamma, horizon })
    }
}

/// `Σ_i γ^i r_i`, `i` from 0.
pub fn discounted_return(rewards: &[f64], spec: &ReturnSpec) -> Result<f64> {
    check_dim("discounted_return rewards", spec.horizon, rewards.len())?;
    Ok(discount_sum(rewards, spec.gamma))
}

// Horner form; γ = 0 reduces to r_0.
fn discount_sum(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// Vector of per-segment value estimates for one (trajectory, value latent) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueSample {
    values: Vec<f64>,
}

impl ValueSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a value sample needs at least 2 components, got {}",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

/// `mean / (population std + eps)` over the sample's components.
pub fn snr(sample: &ValueSample, eps: f64) -> f64 {
    let v = sample.values();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    mean / (var.sqrt() + eps)
}

/// Best SNR among the value estimates of one video exploration.
pub fn exploration_score(snr_row: &[f64]) -> Result<f64> {
    snr_row
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::Empty("exploration_score row"))
}

/// Reference subtracted from every step reward before forming values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardBaseline {
    /// Raw dense reward.
    None,
    /// Reward of holding still at the trajectory's start state, so a
    /// stationary plan is worth exactly zero.
    Hold,
    /// Reward of resting at the goal, so every step reward is at most zero
    /// and a plan that sits on the goal is worth exactly zero.
    Goal,
}

/// Which per-segment quantity forms the value vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueTarget {
    /// Discounted return-to-go from each segment start.
    ReturnToGo,
    /// Discounted return within each segment.
    SegmentReturn,
    /// Return-to-go with the final step reward continued past the horizon,
    /// `γ^{H − s_j}·r_{H−1}/(1 − γ)` added to each component. Needs `γ < 1`.
    Bootstrapped,
}

/// Settings of the analytic value evaluator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValuationConfig {
    pub gamma: f64,
    /// Number of value components `L_val`.
    pub segments: usize,
    pub noise_scale: f64,
    /// Subtracted from the step reward whenever the agent is inside an obstacle.
    pub collision_penalty: f64,
    pub baseline: RewardBaseline,
    pub target: ValueTarget,
    pub weights: RewardWeights,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            segments: 8,
            noise_scale: 0.05,
            collision_penalty: 1.0,
            baseline: RewardBaseline::Hold,
            target: ValueTarget::Bootstrapped,
            weights: RewardWeights::default(),
        }
    }
}

impl ValuationConfig {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("valuation.gamma", "must lie in (0, 1]"));
        }
        if self.segments < 2 || self.segments > horizon {
            return Err(Error::config(
                "valuation.segments",
                format!("must lie in 2..={horizon} (the world horizon)"),
            ));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::config("valuation.noise_scale", "must be >= 0"));
        }
        if !(self.collision_penalty >= 0.0) {
            return Err(Error::config("valuation.collision_penalty", "must be >= 0"));
        }
        Ok(())
    }
}

/// Dense reward breakdown for every step of `traj`. The history before the
/// first step is the world's start state with zero actions.
pub fn trajectory_rewards(
    traj: &Trajectory,
    world: &PointMassWorld,
    goal_frame: &Frame,
    weights: &RewardWeights,
) -> Result<Vec<RewardBreakdown>> {
    let owned;
    let frames = match &traj.frames {
        Some(f) => f,
        None => {
            owned = traj
                .states
                .iter()
                .map(|s| render(world, s))
                .collect::<Result<Vec<_>>>()?;
            &owned
        }
    };
    let start = world.start.to_vec();
    let zero = vec![0.0; PointMassWorld::DIM_ACTION];
    let goal_state = world.goal_state();
    let state_at = |i: isize| -> &[f64] {
        if i < 0 {
            &start
        } else {
            &traj.states[i as usize]
        }
    };
    let action_at = |i: isize| -> &[f64] {
        if i < 0 {
            &zero
        } else {
            &traj.actions[i as usize]
        }
    };
    (0..traj.horizon())
        .map(|t| {
            let t = t as isize;
            dense_reward(
                &RewardInputs {
                    frame: &frames[t as usize],
                    goal_frame,
                    state: state_at(t),
                    goal_state: &goal_state,
                    state_prev: state_at(t - 1),
                    state_prev2: state_at(t - 2),
                    action: action_at(t),
                    action_prev: action_at(t - 1),
                    action_prev2: action_at(t - 2),
                },
                weights,
            )
        })
        .collect()
}

/// Dense reward of holding still at the world's start state.
pub fn hold_reward(world: &PointMassWorld, goal_frame: &Frame, weights: &RewardWeights) -> Result<f64> {
    rest_reward(world, &world.start, goal_frame, weights)
}

/// Dense reward of resting at `state` with no motion history.
pub fn rest_reward(
    world: &PointMassWorld,
    state: &[f64; 4],
    goal_frame: &Frame,
    weights: &RewardWeights,
) -> Result<f64> {
    let frame = render(world, state)?;
    let zero = [0.0; PointMassWorld::DIM_ACTION];
    Ok(dense_reward(
        &RewardInputs {
            frame: &frame,
            goal_frame,
            state,
            goal_state: &world.goal_state(),
            state_prev: state,
            state_prev2: state,
            action: &zero,
            action_prev: &zero,
            action_prev2: &zero,
        },
        weights,
    )?
    .total)
}

/// Dense reward minus the collision penalty and the configured baseline,
/// per step.
pub fn step_rewards(
    traj: &Trajectory,
    world: &PointMassWorld,
    goal_frame: &Frame,
    config: &ValuationConfig,
) -> Result<Vec<f64>> {
    let dense = trajectory_rewards(traj, world, goal_frame, &config.weights)?;
    let baseline = match config.baseline {
        RewardBaseline::None => 0.0,
        RewardBaseline::Hold => hold_reward(world, goal_frame, &config.weights)?,
        RewardBaseline::Goal => rest_reward(world, &world.goal_state(), goal_frame, &config.weights)?,
    };
    Ok(dense
        .iter()
        .zip(&traj.states)
        .map(|(b, s)| {
            let hit = if world.penetration(s) > 0.0 { 1.0 } else { 0.0 };
            b.total - config.collision_penalty * hit - baseline
        })
        .collect())
}

fn check_segments(h: usize, segments: usize) -> Result<()> {
    if segments == 0 || segments > h {
        return Err(Error::InvalidArgument(format!(
            "segment count {segments} must lie in 1..={h}"
        )));
    }
    Ok(())
}

/// Discounted return-to-go from the start of each of `segments` equal
/// segments: `V_j = Σ_{i ≥ s_j} γ^{i − s_j} r_i` with `s_j = ⌊j·H/L⌋`.
pub fn segment_returns(rewards: &[f64], gamma: f64, segments: usize) -> Result<Vec<f64>> {
    let h = rewards.len();
    check_segments(h, segments)?;
    Ok((0..segments)
        .map(|j| discount_sum(&rewards[j * h / segments..], gamma))
        .collect())
}

/// Discounted return inside each segment `[s_j, s_{j+1})`.
pub fn segment_window_returns(rewards: &[f64], gamma: f64, segments: usize) -> Result<Vec<f64>> {
    let h = rewards.len();
    check_segments(h, segments)?;
    Ok((0..segments)
        .map(|j| discount_sum(&rewards[j * h / segments..(j + 1) * h / segments], gamma))
        .collect())
}

/// Noise-free value vector for a reward sequence under `config`.
pub fn value_components(rewards: &[f64], config: &ValuationConfig) -> Result<Vec<f64>> {
    match config.target {
        ValueTarget::ReturnToGo => segment_returns(rewards, config.gamma, config.segments),
        ValueTarget::SegmentReturn => segment_window_returns(rewards, config.gamma, config.segments),
        ValueTarget::Bootstrapped => bootstrapped_returns(rewards, config.gamma, config.segments),
    }
}

/// [`segment_returns`] plus the discounted infinite tail of the last reward.
pub fn bootstrapped_returns(rewards: &[f64], gamma: f64, segments: usize) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "bootstrapped returns need gamma in (0, 1), got {gamma}"
        )));
    }
    let h = rewards.len();
    let tail = rewards.last().copied().unwrap_or(0.0) / (1.0 - gamma);
    let mut values = segment_returns(rewards, gamma, segments)?;
    for (j, v) in values.iter_mut().enumerate() {
        *v += gamma.powi((h - j * h / segments) as i32) * tail;
    }
    Ok(values)
}

/// Analytic segment returns plus `noise_scale · z_val[..L]`.
pub fn evaluate_value(
    traj: &Trajectory,
    z_val: &[f64],
    world: &PointMassWorld,
    config: &ValuationConfig,
) -> Result<ValueSample> {
    let goal_frame = render(world, &world.goal_state())?;
    let rewards = step_rewards(traj, world, &goal_frame, config)?;
    let base = value_components(&rewards, config)?;
    perturb_values(&base, z_val, config.noise_scale)
}

pub(crate) fn perturb_values(base: &[f64], z_val: &[f64], noise_scale: f64) -> Result<ValueSample> {
    if z_val.len() < base.len() {
        return Err(Error::DimensionMismatch {
            context: "value latent (must cover every value component)",
            expected: base.len(),
            got: z_val.len(),
        });
    }
    ValueSample::new(
        base.iter()
            .zip(z_val)
            .map(|(b, z)| b + noise_scale * z)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::{decode_knots, Frame};
    use proptest::prelude::*;

    fn c1() -> f64 {
        (SSIM_K1 * SSIM_RANGE).powi(2)
    }

    #[test]
    fn ssim_identity_and_extremes() {
        let w = PointMassWorld::default();
        let f = render(&w, &w.start).unwrap();
        assert!((ssim(&f, &f).unwrap() - 1.0).abs() < 1e-12);
        let zeros = Frame::filled(16, 0.0);
        let ones = Frame::filled(16, 1.0);
        let expect = c1() / (1.0 + c1());
        assert!((ssim(&zeros, &ones).unwrap() - expect).abs() < 1e-9);
        assert!((expect - 9.999e-5).abs() < 1e-8);
        assert!(ssim(&zeros, &Frame::filled(8, 0.0)).is_err());
    }

    #[test]
    fn perfect_match_reward_is_half() {
        let w = PointMassWorld::default();
        let g = w.goal_state();
        let f = render(&w, &g).unwrap();
        let zero = [0.0, 0.0];
        let b = dense_reward(
            &RewardInputs {
                frame: &f,
                goal_frame: &f,
                state: &g,
                goal_state: &g,
                state_prev: &g,
                state_prev2: &g,
                action: &zero,
                action_prev: &zero,
                action_prev2: &zero,
            },
            &RewardWeights::default(),
        )
        .unwrap();
        assert_eq!(b.total, 0.5);
        assert_eq!(&b.terms[5..], &[0.0; 4]);
        assert!(b.terms[..5].iter().all(|&c| c == 1.0));
    }

    #[test]
    fn velocity_penalty_row() {
        let f = Frame::filled(4, 0.0);
        let s = [1.0, 2.0];
        let prev = [0.0, 0.0];
        let a = [0.0];
        let b = dense_reward(
            &RewardInputs {
                frame: &f,
                goal_frame: &f,
                state: &s,
                goal_state: &s,
                state_prev: &prev,
                state_prev2: &prev,
                action: &a,
                action_prev: &a,
                action_prev2: &a,
            },
            &RewardWeights::default(),
        )
        .unwrap();
        assert_eq!(b.terms[5], 3.0);
        assert_eq!(b.weighted[5], -3.0 / 16.0);
        // second difference: s - 2·prev + prev2 = s
        assert_eq!(b.terms[6], 3.0);
    }

    #[test]
    fn reward_rejects_mismatched_dims() {
        let f = Frame::filled(4, 0.0);
        let a = [0.0];
        let r = dense_reward(
            &RewardInputs {
                frame: &f,
                goal_frame: &f,
                state: &[0.0, 0.0],
                goal_state: &[0.0],
                state_prev: &[0.0, 0.0],
                state_prev2: &[0.0, 0.0],
                action: &a,
                action_prev: &a,
                action_prev2: &a,
            },
            &RewardWeights::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn discounted_return_cases() {
        let s = ReturnSpec::new(0.5, 3).unwrap();
        assert_eq!(discounted_return(&[1.0, 1.0, 1.0], &s).unwrap(), 1.75);
        assert_eq!(
            discounted_return(&[2.0, 3.0], &ReturnSpec::new(1.0, 2).unwrap()).unwrap(),
            5.0
        );
        let s = ReturnSpec::new(0.37, 5).unwrap();
        assert_eq!(discounted_return(&[1.0, 0.0, 0.0, 0.0, 0.0], &s).unwrap(), 1.0);
        assert!(discounted_return(&[1.0], &s).is_err());
        assert!(ReturnSpec::new(0.0, 3).is_err());
        assert_eq!(discount_sum(&[4.0, 5.0, 6.0], 0.0), 4.0);
    }

    #[test]
    fn snr_cases() {
        assert_eq!(snr(&ValueSample::new(vec![1.0, 3.0]).unwrap(), 0.0), 2.0);
        assert_eq!(snr(&ValueSample::new(vec![-1.0, 1.0]).unwrap(), 0.3), 0.0);
        let c = 2.5;
        let s = snr(&ValueSample::new(vec![c; 3]).unwrap(), 1e-8);
        assert!((s / (c * 1e8) - 1.0).abs() < 1e-12);
        assert!(ValueSample::new(vec![1.0]).is_err());
    }

    #[test]
    fn exploration_score_is_max() {
        assert_eq!(exploration_score(&[0.5, 2.0, 1.0]).unwrap(), 2.0);
        assert_eq!(exploration_score(&[-4.0]).unwrap(), -4.0);
        assert_eq!(exploration_score(&[1.5; 4]).unwrap(), 1.5);
        assert!(exploration_score(&[]).is_err());
    }

    fn sample_traj() -> (PointMassWorld, Trajectory) {
        let w = PointMassWorld::default();
        let z: Vec<f64> = (0..w.latent_dim()).map(|i| 0.3 * (i as f64 - 3.0)).collect();
        let t = decode_knots(&z, &w).unwrap();
        (w, t)
    }

    #[test]
    fn noiseless_value_is_analytic() {
        let (w, t) = sample_traj();
        let cfg = ValuationConfig::default();
        let gf = render(&w, &w.goal_state()).unwrap();
        let r = step_rewards(&t, &w, &gf, &cfg).unwrap();
        let base = value_components(&r, &cfg).unwrap();
        let quiet = ValuationConfig {
            noise_scale: 0.0,
            ..cfg.clone()
        };
        let z = vec![0.7; cfg.segments];
        assert_eq!(evaluate_value(&t, &z, &w, &quiet).unwrap().values(), base.as_slice());
        let zero = vec![0.0; cfg.segments];
        assert_eq!(evaluate_value(&t, &zero, &w, &cfg).unwrap().values(), base.as_slice());
        let shifted = evaluate_value(
            &t,
            &vec![1.0; cfg.segments],
            &w,
            &ValuationConfig {
                noise_scale: 0.1,
                ..cfg.clone()
            },
        )
        .unwrap();
        for (v, b) in shifted.values().iter().zip(&base) {
            assert!((v - b - 0.1).abs() < 1e-12);
        }
        assert!(evaluate_value(&t, &[0.0; 3], &w, &cfg).is_err());
    }

    #[test]
    fn single_segment_is_discounted_return() {
        let (w, t) = sample_traj();
        let cfg = ValuationConfig::default();
        let gf = render(&w, &w.goal_state()).unwrap();
        let r = step_rewards(&t, &w, &gf, &cfg).unwrap();
        let one = segment_returns(&r, cfg.gamma, 1).unwrap();
        let spec = ReturnSpec::new(cfg.gamma, r.len()).unwrap();
        assert_eq!(one[0], discounted_return(&r, &spec).unwrap());
    }

    #[test]
    fn collisions_cost_reward() {
        let w = PointMassWorld::default();
        let gf = render(&w, &w.goal_state()).unwrap();
        let inside = crate::worldgen::Trajectory {
            states: vec![vec![0.5, 0.5, 0.0, 0.0]],
            actions: vec![vec![0.0, 0.0]],
            frames: None,
        };
        let cfg = ValuationConfig {
            baseline: RewardBaseline::None,
            ..Default::default()
        };
        let dense = trajectory_rewards(&inside, &w, &gf, &cfg.weights).unwrap();
        let r = step_rewards(&inside, &w, &gf, &cfg).unwrap();
        assert_eq!(r[0], dense[0].total - cfg.collision_penalty);
    }

    proptest! {
        #[test]
        fn snr_is_scale_invariant(
            v in prop::collection::vec(-10.0f64..10.0, 2..10),
            c in 0.01f64..100.0,
        ) {
            let s = ValueSample::new(v).unwrap();
            let a = snr(&s, 0.0);
            let b = snr(&s.scaled(c), 0.0);
            prop_assume!(a.is_finite());
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn ssim_is_symmetric(
            a in prop::collection::vec(0.0f64..=1.0, 64),
            b in prop::collection::vec(0.0f64..=1.0, 64),
        ) {
            let fa = Frame::from_pixels(8, a).unwrap();
            let fb = Frame::from_pixels(8, b).unwrap();
            let s = ssim(&fa, &fb).unwrap();
            prop_assert!((s - ssim(&fb, &fa).unwrap()).abs() < 1e-15);
            prop_assert!((-1.0..=1.0).contains(&s));
        }

        #[test]
        fn discounted_return_is_linear(
            r1 in prop::collection::vec(-5.0f64..5.0, 6),
            r2 in prop::collection::vec(-5.0f64..5.0, 6),
            g in 0.01f64..=1.0,
            k in -3.0f64..3.0,
        ) {
            let spec = ReturnSpec::new(g, 6).unwrap();
            let mix: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| a + k * b).collect();
            let lhs = discounted_return(&mix, &spec).unwrap();
            let rhs = discounted_return(&r1, &spec).unwrap() + k * discounted_return(&r2, &spec).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn image_terms_are_monotone(m1 in 0.0f64..1.0, m2 in 0.0f64..1.0) {
            prop_assume!(m1 < m2);
            prop_assert!((-0.01 * m1).exp() > (-0.01 * m2).exp());
            prop_assert!((m1 - 1.0).exp() < (m2 - 1.0).exp());
        }
    }
}
