//! Receding-horizon execution of the planner on the point-mass world.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{plan_from, AnalyticValue, IterationRecord, KnotGenerator, PlannerConfig, PlannerState};
use crate::stream::SeededStream;
use crate::valuation::ValuationConfig;
use crate::worldgen::{rollout, PointMassWorld};

/// Fraction of the workspace diagonal within which the final position counts
/// as reaching the goal.
pub const SUCCESS_RADIUS_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub final_distance: f64,
    pub max_penetration: f64,
    pub steps: usize,
    pub plans: usize,
    pub mean_plan_ms: f64,
    pub final_state: [f64; 4],
    pub traces: Vec<PlanTrace>,
}

/// Summary of one `plan` call inside an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub score: f64,
    pub used_best_fallback: bool,
    pub total_ms: f64,
    pub history: Vec<IterationRecord>,
}

/// Plan, execute the first `stride` actions, re-plan from the reached state,
/// until `steps` actions have been executed.
pub fn run_episode(
    world: &PointMassWorld,
    planner: &PlannerConfig,
    valuation: &ValuationConfig,
    steps: usize,
    stride: usize,
    stream: &SeededStream,
) -> Result<EpisodeOutcome> {
    if stride == 0 || stride > planner.chunk_len {
        return Err(Error::config(
            "stride",
            format!("must lie in 1..=chunk_len ({}), got {stride}", planner.chunk_len),
        ));
    }
    if steps == 0 {
        return Err(Error::config("episode_steps", "must be >= 1"));
    }
    let mut state = world.start;
    let mut executed = 0;
    let mut max_penetration = world.penetration(&state);
    let mut traces: Vec<PlanTrace> = Vec::new();
    let mut warm: Option<PlannerState> = None;
    while executed < steps {
        let here = world.with_start(state);
        let generator = KnotGenerator { world: here.clone() };
        let evaluator = AnalyticValue::new(here.clone(), valuation.clone())?;
        let initial = match warm.take() {
            Some(s) if planner.warm_start => PlannerState::new(s.f_vid, s.f_val),
            _ => PlannerState::standard(planner)?,
        };
        let result = plan_from(
            &generator,
            &evaluator,
            planner,
            &stream.derive_indexed("plan", traces.len()),
            initial,
        )?;
        traces.push(PlanTrace {
            score: result.score,
            used_best_fallback: result.used_best_fallback,
            total_ms: result.timings.total_ms,
            history: result.history.clone(),
        });
        let take = stride.min(steps - executed);
        let executed_traj = rollout(&result.action_chunk[..take], &here)?;
        for s in &executed_traj.states {
            max_penetration = max_penetration.max(world.penetration(s));
        }
        let last = executed_traj.states.last().expect("non-empty chunk");
        state = [last[0], last[1], last[2], last[3]];
        executed += take;
        warm = Some(result.final_state);
    }
    let final_distance = world.goal_distance(&state);
    Ok(EpisodeOutcome {
        success: final_distance < SUCCESS_RADIUS_FRACTION * world.workspace.diagonal()
            && max_penetration == 0.0,
        final_distance,
        max_penetration,
        steps: executed,
        plans: traces.len(),
        mean_plan_ms: traces.iter().map(|t| t.total_ms).sum::<f64>() / traces.len() as f64,
        final_state: state,
        traces,
    })
}
