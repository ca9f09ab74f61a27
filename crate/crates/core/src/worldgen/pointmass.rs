use serde::{Deserialize, Serialize};

use super::{Frame, Trajectory};
use crate::error::{check_dim, Error, Result};

pub const BACKGROUND: f64 = 0.0;
pub const OBSTACLE: f64 = 0.3;
pub const GOAL: f64 = 0.6;
pub const AGENT: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Workspace {
    pub fn contains(&self, p: &[f64]) -> bool {
        (0..2).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn diagonal(&self) -> f64 {
        (0..2)
            .map(|k| (self.max[k] - self.min[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Circle {
    /// How far `p` lies inside the circle; 0 outside.
    pub fn penetration(&self, p: &[f64]) -> f64 {
        let d = ((p[0] - self.center[0]).powi(2) + (p[1] - self.center[1]).powi(2)).sqrt();
        (self.radius - d).max(0.0)
    }
}

/// Planar double integrator with circular obstacles.
///
/// State is `[px, py, vx, vy]`, action is `[ax, ay]`. Obstacles do not block
/// motion; they are scored by the valuation module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointMassWorld {
    pub dt: f64,
    pub horizon: usize,
    /// `[px, py, vx, vy]`
    pub start: [f64; 4],
    pub goal: [f64; 2],
    pub obstacles: Vec<Circle>,
    pub workspace: Workspace,
    pub knots: usize,
    pub accel_limit: f64,
    pub image_size: usize,
    pub agent_radius: f64,
    pub goal_radius: f64,
}

impl Default for PointMassWorld {
    fn default() -> Self {
        Self {
            dt: 0.1,
            horizon: 16,
            start: [0.15, 0.15, 0.0, 0.0],
            goal: [0.85, 0.85],
            obstacles: vec![Circle {
                center: [0.5, 0.5],
                radius: 0.15,
            }],
            workspace: Workspace {
                min: [0.0, 0.0],
                max: [1.0, 1.0],
            },
            knots: 4,
            accel_limit: 0.5,
            image_size: 32,
            agent_radius: 0.04,
            goal_radius: 0.05,
        }
    }
}

impl PointMassWorld {
    pub const DIM_STATE: usize = 4;
    pub const DIM_ACTION: usize = 2;

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("world.{field}"), msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", format!("must be > 0, got {}", self.dt));
        }
        if self.horizon == 0 {
            return bad("horizon", "must be >= 1".into());
        }
        if self.knots == 0 || self.knots > self.horizon || self.horizon % self.knots != 0 {
            return bad(
                "knots",
                format!(
                    "must divide horizon {} and be in 1..=horizon, got {}",
                    self.horizon, self.knots
                ),
            );
        }
        if !(self.accel_limit > 0.0) {
            return bad("accel_limit", "must be > 0".into());
        }
        if self.image_size == 0 {
            return bad("image_size", "must be >= 1".into());
        }
        if (0..2).any(|k| !(self.workspace.min[k] < self.workspace.max[k])) {
            return bad("workspace", "min must be < max on both axes".into());
        }
        if !self.workspace.contains(&self.start) {
            return bad("start", "must lie inside the workspace".into());
        }
        if !self.workspace.contains(&self.goal) {
            return bad("goal", "must lie inside the workspace".into());
        }
        for (i, c) in self.obstacles.iter().enumerate() {
            if !(c.radius > 0.0) {
                return bad("obstacles", format!("obstacle {i} radius must be > 0"));
            }
            if c.penetration(&self.start) > 0.0 {
                return bad("start", format!("lies inside obstacle {i}"));
            }
            if c.penetration(&self.goal) > 0.0 {
                return bad("goal", format!("lies inside obstacle {i}"));
            }
        }
        Ok(())
    }

    /// Latent dimension of [`decode_knots`]: two acceleration components per knot.
    pub fn latent_dim(&self) -> usize {
        2 * self.knots
    }

    pub fn with_start(&self, start: [f64; 4]) -> Self {
        Self {
            start,
            ..self.clone()
        }
    }

    pub fn goal_distance(&self, state: &[f64]) -> f64 {
        ((state[0] - self.goal[0]).powi(2) + (state[1] - self.goal[1]).powi(2)).sqrt()
    }

    /// Summed penetration depth over all obstacles.
    pub fn penetration(&self, state: &[f64]) -> f64 {
        self.obstacles.iter().map(|c| c.penetration(state)).sum()
    }

    /// The state the task asks for: at the goal, at rest.
    pub fn goal_state(&self) -> [f64; 4] {
        [self.goal[0], self.goal[1], 0.0, 0.0]
    }
}

/// Semi-implicit Euler: `v += a·dt`, `p += v·dt`, then clamp `p` to the
/// workspace and zero `v` on any clamped axis. Actions are clamped
/// componentwise to `±accel_limit`. Every step is rendered.
pub fn rollout(actions: &[Vec<f64>], world: &PointMassWorld) -> Result<Trajectory> {
    let mut state = world.start;
    let mut states = Vec::with_capacity(actions.len());
    let mut applied = Vec::with_capacity(actions.len());
    let mut frames = Vec::with_capacity(actions.len());
    for a in actions {
        check_dim("rollout action", PointMassWorld::DIM_ACTION, a.len())?;
        let a = [
            a[0].clamp(-world.accel_limit, world.accel_limit),
            a[1].clamp(-world.accel_limit, world.accel_limit),
        ];
        for k in 0..2 {
            state[2 + k] += a[k] * world.dt;
            state[k] += state[2 + k] * world.dt;
            let (lo, hi) = (world.workspace.min[k], world.workspace.max[k]);
            if state[k] < lo || state[k] > hi {
                state[k] = state[k].clamp(lo, hi);
                state[2 + k] = 0.0;
            }
        }
        frames.push(render(world, &state)?);
        states.push(state.to_vec());
        applied.push(a.to_vec());
    }
    Ok(Trajectory {
        states,
        actions: applied,
        frames: Some(frames),
    })
}

/// Decode `2·P` latent values into `P` acceleration knots (`accel_limit·tanh`),
/// hold each knot for `H/P` steps, and roll out from `world.start`.
pub fn decode_knots(z: &[f64], world: &PointMassWorld) -> Result<Trajectory> {
    check_dim("decode_knots latent", world.latent_dim(), z.len())?;
    let hold = world.horizon / world.knots;
    let actions: Vec<Vec<f64>> = z
        .chunks_exact(2)
        .flat_map(|k| {
            let a = vec![
                world.accel_limit * k[0].tanh(),
                world.accel_limit * k[1].tanh(),
            ];
            std::iter::repeat_n(a, hold)
        })
        .collect();
    rollout(&actions, world)
}

/// Rasterize obstacles, goal, and agent (in that order, later wins) onto a
/// square grid covering the workspace padded by one agent radius on every
/// side, so the agent disc is never clipped at a wall. A pixel belongs to a
/// disc when its center lies inside it.
pub fn render(world: &PointMassWorld, state: &[f64]) -> Result<Frame> {
    if state.len() < 2 {
        return Err(Error::DimensionMismatch {
            context: "render state",
            expected: PointMassWorld::DIM_STATE,
            got: state.len(),
        });
    }
    if !world.workspace.contains(state) {
        return Err(Error::InvalidArgument(format!(
            "agent position ({}, {}) is outside the workspace",
            state[0], state[1]
        )));
    }
    let n = world.image_size;
    let pad = world.agent_radius.max(0.0);
    let lo = [world.workspace.min[0] - pad, world.workspace.min[1] - pad];
    let hi = [world.workspace.max[0] + pad, world.workspace.max[1] + pad];
    let mut frame = Frame::filled(n, BACKGROUND);
    let disc = |frame: &mut Frame, center: [f64; 2], radius: f64, value: f64| {
        let r2 = radius * radius;
        for row in 0..n {
            let y = lo[1] + (row as f64 + 0.5) / n as f64 * (hi[1] - lo[1]);
            let dy = y - center[1];
            if dy * dy > r2 {
                continue;
            }
            for col in 0..n {
                let x = lo[0] + (col as f64 + 0.5) / n as f64 * (hi[0] - lo[0]);
                let dx = x - center[0];
                if dx * dx + dy * dy <= r2 {
                    frame.set(row, col, value);
                }
            }
        }
    };
    for c in &world.obstacles {
        disc(&mut frame, c.center, c.radius, OBSTACLE);
    }
    disc(&mut frame, world.goal, world.goal_radius, GOAL);
    disc(&mut frame, [state[0], state[1]], world.agent_radius, AGENT);
    Ok(frame)
}
