//! Staged training on expert point-mass data: a trajectory field first, then
//! a value field, then an action field. Each stage leaves the earlier fields
//! untouched.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{euler_sample, Adam, FlowBatch, MlpField};
use crate::error::{check_dim, Error, Result};
use crate::planner::ValueModel;
use crate::stream::SeededStream;
use crate::valuation::{step_rewards, value_components, ValuationConfig, ValueSample};
use crate::worldgen::{render, rollout, PointMassWorld, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub hidden: Vec<usize>,
    pub dataset_size: usize,
    pub steps_per_stage: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub euler_steps: usize,
    /// Proportional gain of the expert controller.
    pub expert_kp: f64,
    /// Damping gain of the expert controller.
    pub expert_kd: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            dataset_size: 512,
            steps_per_stage: 600,
            batch_size: 64,
            learning_rate: 1e-3,
            euler_steps: 32,
            expert_kp: 3.0,
            expert_kd: 2.0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.len() != 2 || self.hidden.contains(&0) {
            return Err(Error::config("flow.hidden", "must list two positive widths"));
        }
        for (field, value) in [
            ("flow.dataset_size", self.dataset_size),
            ("flow.steps_per_stage", self.steps_per_stage),
            ("flow.batch_size", self.batch_size),
            ("flow.euler_steps", self.euler_steps),
        ] {
            if value == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("flow.learning_rate", "must be positive"));
        }
        if !(self.expert_kp > 0.0 && self.expert_kd >= 0.0) {
            return Err(Error::config("flow.expert_kp", "gains must be kp > 0, kd >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Video,
    Value,
    Action,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Video, Stage::Value, Stage::Action];
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Video => "video",
            Stage::Value => "value",
            Stage::Action => "action",
        })
    }
}

/// `[px, py, vx, vy, gx, gy]`.
pub fn observation(world: &PointMassWorld) -> Vec<f64> {
    let mut o = world.start.to_vec();
    o.extend_from_slice(&world.goal);
    o
}

/// Positions at the end of each knot interval, flattened.
pub fn knot_positions(traj: &Trajectory, knots: usize) -> Result<Vec<f64>> {
    let h = traj.horizon();
    if knots == 0 || knots > h {
        return Err(Error::InvalidArgument(format!("knot count {knots} must lie in 1..={h}")));
    }
    Ok((1..=knots)
        .flat_map(|k| traj.states[k * h / knots - 1][..2].to_vec())
        .collect())
}

/// PD controller toward the goal, or toward a waypoint beside the first
/// obstacle that blocks the straight line to the goal.
pub fn expert_action(world: &PointMassWorld, state: &[f64], kp: f64, kd: f64) -> Vec<f64> {
    let target = expert_waypoint(world, state);
    vec![
        kp * (target[0] - state[0]) - kd * state[2],
        kp * (target[1] - state[1]) - kd * state[3],
    ]
}

fn expert_waypoint(world: &PointMassWorld, state: &[f64]) -> [f64; 2] {
    let clearance = 3.0 * world.agent_radius;
    let to_goal = [world.goal[0] - state[0], world.goal[1] - state[1]];
    let len = to_goal[0].hypot(to_goal[1]);
    if len < 1e-9 {
        return world.goal;
    }
    let u = [to_goal[0] / len, to_goal[1] / len];
    let mut nearest: Option<(f64, [f64; 2])> = None;
    for c in &world.obstacles {
        let rel = [c.center[0] - state[0], c.center[1] - state[1]];
        let along = rel[0] * u[0] + rel[1] * u[1];
        let across = rel[0] * u[1] - rel[1] * u[0];
        let reach = c.radius + clearance;
        if along <= 0.0 || along >= len || across.abs() >= reach {
            continue;
        }
        // Pass on the side away from the centre; ties go clockwise of `u`.
        let side = if across > 0.0 { -1.0 } else { 1.0 };
        let n = [side * u[1], -side * u[0]];
        let way = [c.center[0] + n[0] * reach, c.center[1] + n[1] * reach];
        if nearest.is_none_or(|(a, _)| along < a) {
            nearest = Some((along, way));
        }
    }
    nearest.map_or(world.goal, |(_, w)| w)
}

/// Closed-loop expert rollout over the world's horizon.
pub fn expert_rollout(world: &PointMassWorld, kp: f64, kd: f64) -> Result<Trajectory> {
    let mut current = world.clone();
    let mut actions = Vec::with_capacity(world.horizon);
    for _ in 0..world.horizon {
        let a = expert_action(&current, &current.start, kp, kd);
        let step = rollout(std::slice::from_ref(&a), &current)?;
        let s = &step.states[0];
        current.start = [s[0], s[1], s[2], s[3]];
        actions.push(step.actions[0].clone());
    }
    rollout(&actions, world)
}

/// One expert demonstration in training form.
#[derive(Clone, Debug, PartialEq)]
pub struct Demonstration {
    pub observation: Vec<f64>,
    pub video: Vec<f64>,
    pub value: Vec<f64>,
    pub action: Vec<f64>,
}

impl Demonstration {
    fn value_condition(&self) -> Vec<f64> {
        [self.observation.as_slice(), &self.video].concat()
    }

    fn action_condition(&self) -> Vec<f64> {
        [self.observation.as_slice(), &self.video, &self.value].concat()
    }
}

fn random_start(world: &PointMassWorld, stream: &SeededStream) -> Result<[f64; 4]> {
    let mut rng = stream.rng();
    let ws = &world.workspace;
    let pad = world.agent_radius;
    for _ in 0..10_000 {
        let p = [
            rng.uniform_in(ws.min[0] + pad, ws.max[0] - pad),
            rng.uniform_in(ws.min[1] + pad, ws.max[1] - pad),
        ];
        let state = [p[0], p[1], 0.0, 0.0];
        if world.penetration(&state) == 0.0 && world.goal_distance(&state) > 2.0 * world.goal_radius {
            return Ok(state);
        }
    }
    Err(Error::InvalidArgument("no free start position found".into()))
}

/// Expert demonstrations from random free starts (stream path `demo=i`).
pub fn expert_dataset(
    world: &PointMassWorld,
    valuation: &ValuationConfig,
    chunk_len: usize,
    config: &FlowConfig,
    stream: &SeededStream,
) -> Result<Vec<Demonstration>> {
    world.validate()?;
    valuation.validate(world.horizon)?;
    if chunk_len == 0 || chunk_len > world.horizon {
        return Err(Error::config("planner.chunk_len", "must lie in 1..=world.horizon"));
    }
    (0..config.dataset_size)
        .map(|i| {
            let w = world.with_start(random_start(world, &stream.derive_indexed("demo", i))?);
            let traj = expert_rollout(&w, config.expert_kp, config.expert_kd)?;
            let goal_frame = render(&w, &w.goal_state())?;
            let rewards = step_rewards(&traj, &w, &goal_frame, valuation)?;
            Ok(Demonstration {
                observation: observation(&w),
                video: knot_positions(&traj, w.knots)?,
                value: value_components(&rewards, valuation)?,
                action: traj.actions[..chunk_len].concat(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub losses: Vec<f64>,
}

/// The three trained fields and their per-step losses.
#[derive(Clone, Debug)]
pub struct TrainedFlows {
    pub video: MlpField,
    pub value: MlpField,
    pub action: MlpField,
    pub reports: Vec<StageReport>,
}

impl TrainedFlows {
    pub fn field(&self, stage: Stage) -> &MlpField {
        match stage {
            Stage::Video => &self.video,
            Stage::Value => &self.value,
            Stage::Action => &self.action,
        }
    }
}

fn stage_parts(stage: Stage, demo: &Demonstration) -> (Vec<f64>, Vec<f64>) {
    match stage {
        Stage::Video => (demo.video.clone(), demo.observation.clone()),
        Stage::Value => (demo.value.clone(), demo.value_condition()),
        Stage::Action => (demo.action.clone(), demo.action_condition()),
    }
}

/// Trains one field on `data`; minibatch `b` draws indices, base noise and
/// times from `stream/step=b`.
pub fn train_stage(
    stage: Stage,
    data: &[Demonstration],
    config: &FlowConfig,
    stream: &SeededStream,
) -> Result<(MlpField, StageReport)> {
    if data.is_empty() {
        return Err(Error::Empty("demonstration set"));
    }
    let (x, c) = stage_parts(stage, &data[0]);
    let mut field = MlpField::new(x.len(), c.len(), &config.hidden, &stream.derive("init"))?;
    let mut adam = Adam::new(field.param_count());
    let mut losses = Vec::with_capacity(config.steps_per_stage);
    for b in 0..config.steps_per_stage {
        let mut rng = stream.derive_indexed("step", b).rng();
        let (mut x0, mut x1, mut cond, mut t) = (vec![], vec![], vec![], vec![]);
        for _ in 0..config.batch_size {
            let i = (rng.uniform() * data.len() as f64) as usize % data.len();
            let (xi, ci) = stage_parts(stage, &data[i]);
            x0.push(rng.standard_normal_vec(xi.len()));
            x1.push(xi);
            cond.push(ci);
            t.push(rng.uniform());
        }
        let batch = FlowBatch::new(x0, x1, cond, t)?;
        losses.push(field.train_step(&mut adam, &batch, config.learning_rate)?);
    }
    Ok((field, StageReport { stage, losses }))
}

/// Video, then value, then action (stream paths `stage=video` etc.).
pub fn train_staged(data: &[Demonstration], config: &FlowConfig, stream: &SeededStream) -> Result<TrainedFlows> {
    config.validate()?;
    let mut fields = Vec::with_capacity(3);
    let mut reports = Vec::with_capacity(3);
    for stage in Stage::ALL {
        let (field, report) = train_stage(stage, data, config, &stream.derive(&format!("stage={stage}")))?;
        log::info!(
            "{stage} stage: loss {:.4} -> {:.4}",
            report.losses.first().copied().unwrap_or(f64::NAN),
            report.losses.last().copied().unwrap_or(f64::NAN)
        );
        fields.push(field);
        reports.push(report);
    }
    let action = fields.pop().expect("three stages");
    let value = fields.pop().expect("three stages");
    let video = fields.pop().expect("three stages");
    Ok(TrainedFlows {
        video,
        value,
        action,
        reports,
    })
}

/// Value evaluator backed by a trained value field: the value latent is the
/// flow's base noise, denoised under the trajectory's observation and knot
/// positions.
#[derive(Clone, Debug)]
pub struct FlowValueModel {
    world: PointMassWorld,
    field: MlpField,
    euler_steps: usize,
}

impl FlowValueModel {
    pub fn new(world: PointMassWorld, field: MlpField, euler_steps: usize) -> Result<Self> {
        use super::VelocityField;
        check_dim(
            "value field condition (observation + knot positions)",
            6 + 2 * world.knots,
            field.dim_cond(),
        )?;
        if field.dim_x() < 2 {
            return Err(Error::InvalidArgument("value field must output at least 2 components".into()));
        }
        if euler_steps == 0 {
            return Err(Error::InvalidArgument("euler_steps must be at least 1".into()));
        }
        Ok(Self {
            world,
            field,
            euler_steps,
        })
    }
}

impl ValueModel<Trajectory> for FlowValueModel {
    type Features = Vec<f64>;

    fn latent_dim(&self) -> usize {
        use super::VelocityField;
        self.field.dim_x()
    }

    fn features(&self, traj: &Trajectory) -> Result<Vec<f64>> {
        let mut f = observation(&self.world);
        f.extend(knot_positions(traj, self.world.knots)?);
        Ok(f)
    }

    fn evaluate(&self, features: &Vec<f64>, z_val: &[f64]) -> Result<ValueSample> {
        ValueSample::new(euler_sample(&self.field, z_val, features, self.euler_steps)?)
    }
}
