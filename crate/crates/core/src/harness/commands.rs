use rayon::prelude::*;
use serde_json::json;

use crate::episode::{run_episode, EpisodeOutcome};
use crate::error::{Error, Result};
use crate::flowmatch::config_hash;
use crate::flowmatch::staged::{expert_dataset, expert_rollout, train_staged, Stage};
use crate::geolab::{decay_curve, one_shot_vs_iterative, MassEstimate, PlantedLandscape};
use crate::harness::config::ExperimentConfig;
use crate::harness::output::{Cell, EpisodeRow, Staging, Table};
use crate::stream::SeededStream;
use crate::valuation::trajectory_rewards;
use crate::worldgen::render;

/// Files and summary produced by one command.
pub struct CommandOutput {
    pub episodes: Vec<EpisodeRow>,
    pub success_rate: Option<f64>,
    pub summary: serde_json::Value,
}

impl CommandOutput {
    fn summary(summary: serde_json::Value) -> Self {
        Self {
            episodes: Vec::new(),
            success_rate: None,
            summary,
        }
    }
}

/// Run every episode of `config` with per-episode streams `episode=i`.
pub fn run_episodes(config: &ExperimentConfig) -> Result<Vec<EpisodeOutcome>> {
    let root = SeededStream::new(config.seed);
    (0..config.episodes)
        .into_par_iter()
        .map(|i| {
            run_episode(
                &config.world,
                &config.planner,
                &config.valuation,
                config.episode_steps,
                config.stride(),
                &root.derive_indexed("episode", i),
            )
        })
        .collect()
}

fn episode_rows(outcomes: &[EpisodeOutcome]) -> Vec<EpisodeRow> {
    outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| EpisodeRow {
            episode: i,
            success: o.success,
            final_distance: o.final_distance,
            max_penetration: o.max_penetration,
            plans: o.plans,
        })
        .collect()
}

fn success_rate(outcomes: &[EpisodeOutcome]) -> f64 {
    outcomes.iter().filter(|o| o.success).count() as f64 / outcomes.len() as f64
}

/// `plan`: receding-horizon episodes on the point-mass world.
///
/// `metrics.csv` and `history.csv` are deterministic given the config;
/// wall-clock numbers go to `timing.csv` only.
pub fn plan(config: &ExperimentConfig, staging: &mut Staging) -> Result<CommandOutput> {
    let outcomes = run_episodes(config)?;
    let mut metrics = Table::new(&[
        "episode",
        "success",
        "final_distance",
        "max_penetration",
        "steps",
        "plans",
        "final_px",
        "final_py",
        "final_vx",
        "final_vy",
    ]);
    let mut history = Table::new(&[
        "episode",
        "plan",
        "iter",
        "mean_elite_phi",
        "max_phi",
        "best_phi",
        "mean_sigma_vid",
        "mean_sigma_val",
    ]);
    let mut timing = Table::new(&["episode", "plan", "iter", "wall_ms"]);
    for (i, o) in outcomes.iter().enumerate() {
        let mut row: Vec<Cell> = vec![
            i.into(),
            o.success.into(),
            o.final_distance.into(),
            o.max_penetration.into(),
            o.steps.into(),
            o.plans.into(),
        ];
        row.extend(o.final_state.iter().map(|v| Cell::from(*v)));
        metrics.push(row);
        for (p, trace) in o.traces.iter().enumerate() {
            for r in &trace.history {
                history.push(vec![
                    i.into(),
                    p.into(),
                    r.iter.into(),
                    r.mean_elite_phi.into(),
                    r.max_phi.into(),
                    r.best_phi.into(),
                    r.mean_sigma_vid.into(),
                    r.mean_sigma_val.into(),
                ]);
                timing.push(vec![i.into(), p.into(), r.iter.into(), r.wall_ms.into()]);
            }
            timing.push(vec![i.into(), p.into(), "total".into(), trace.total_ms.into()]);
        }
    }
    staging.write_table("metrics.csv", &metrics)?;
    staging.write_table("history.csv", &history)?;
    staging.write_table("timing.csv", &timing)?;
    let rate = success_rate(&outcomes);
    log::info!("plan: {} episodes, success rate {rate:.3}", outcomes.len());
    Ok(CommandOutput {
        episodes: episode_rows(&outcomes),
        success_rate: Some(rate),
        summary: json!({ "success_rate": rate, "episodes": outcomes.len() }),
    })
}

/// A `KEY=V1,V2,...` sweep over one planner field.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<String>,
}

impl Sweep {
    pub const KEYS: [&'static str; 7] = ["K", "M", "N", "K1", "K2", "alpha", "beta"];

    pub fn parse(text: &str) -> Result<Self> {
        let (key, values) = text
            .split_once('=')
            .ok_or_else(|| Error::config("sweep", format!("expected KEY=V1,V2,..., got `{text}`")))?;
        let key = key.trim().trim_start_matches("planner.").to_string();
        if !Self::KEYS.contains(&key.as_str()) {
            return Err(Error::config(
                "sweep",
                format!("unknown sweep key `{key}`; expected one of {:?}", Self::KEYS),
            ));
        }
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(Error::config("sweep", "needs at least one value"));
        }
        Ok(Self { key, values })
    }

    /// `config` with the planner field set to `value`, validated.
    pub fn apply(&self, config: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut c = config.clone();
        let field = format!("planner.{}", self.key);
        let int = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::config(field.clone(), format!("`{value}` is not a non-negative integer")))
        };
        let real = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::config(field.clone(), format!("`{value}` is not a number")))
        };
        let p = &mut c.planner;
        match self.key.as_str() {
            "K" => p.iterations = int()?,
            "M" => p.video_samples = int()?,
            "N" => p.value_samples = int()?,
            "K1" => p.video_elites = int()?,
            "K2" => p.value_elites = int()?,
            "alpha" => p.alpha = real()?,
            "beta" => p.beta = real()?,
            _ => unreachable!("keys are checked in parse"),
        }
        c.validate()?;
        Ok(c)
    }
}

/// `ablate`: the `plan` episodes for every sweep value. Each cell reuses the
/// same episode streams, so cells differ only in the swept field.
pub fn ablate(config: &ExperimentConfig, sweep: &Sweep, staging: &mut Staging) -> Result<CommandOutput> {
    let cells = sweep
        .values
        .iter()
        .map(|v| sweep.apply(config, v))
        .collect::<Result<Vec<_>>>()?;
    let mut metrics = Table::new(&[
        "key",
        "value",
        "episode",
        "success",
        "final_distance",
        "max_penetration",
        "plans",
    ]);
    let mut aggregate = Table::new(&[
        "key",
        "value",
        "episodes",
        "successes",
        "success_rate",
        "mean_plan_ms",
    ]);
    let mut summary = Vec::new();
    for (value, cell) in sweep.values.iter().zip(&cells) {
        let outcomes = run_episodes(cell)?;
        for (i, o) in outcomes.iter().enumerate() {
            metrics.push(vec![
                sweep.key.as_str().into(),
                value.as_str().into(),
                i.into(),
                o.success.into(),
                o.final_distance.into(),
                o.max_penetration.into(),
                o.plans.into(),
            ]);
        }
        let successes = outcomes.iter().filter(|o| o.success).count();
        let rate = success_rate(&outcomes);
        let ms = outcomes.iter().map(|o| o.mean_plan_ms).sum::<f64>() / outcomes.len() as f64;
        log::info!("ablate {}={value}: success {rate:.3}, {ms:.2} ms/plan", sweep.key);
        aggregate.push(vec![
            sweep.key.as_str().into(),
            value.as_str().into(),
            outcomes.len().into(),
            successes.into(),
            rate.into(),
            ms.into(),
        ]);
        summary.push(json!({ "value": value, "success_rate": rate, "mean_plan_ms": ms }));
    }
    staging.write_table("metrics.csv", &metrics)?;
    staging.write_table("aggregate.csv", &aggregate)?;
    Ok(CommandOutput::summary(json!({ "key": sweep.key, "cells": summary })))
}

const MASS_COLUMNS: [&str; 8] = ["H", "D", "n", "hits", "ratio", "ci_low", "ci_high", "log_ratio"];

fn mass_row(h: usize, d: usize, m: &MassEstimate) -> Vec<Cell> {
    let log_ratio = if m.hits > 0 { m.ratio.ln() } else { f64::NAN };
    vec![
        h.into(),
        d.into(),
        m.samples_used.into(),
        m.hits.into(),
        m.ratio.into(),
        m.ci_low.into(),
        m.ci_high.into(),
        log_ratio.into(),
    ]
}

/// `geometry`: uniform and latent feasible mass against the horizon, and
/// the one-shot versus iterative search comparison.
pub fn geometry(config: &ExperimentConfig, staging: &mut Staging) -> Result<CommandOutput> {
    let g = &config.geolab;
    let root = SeededStream::new(config.seed);
    let curve = decay_curve(&g.horizons, &g.family, g.n_uniform, g.n_latent, &root.derive("decay"))?;
    let mut uniform = Table::new(&MASS_COLUMNS);
    let mut latent = Table::new(&MASS_COLUMNS);
    let mut reweight = Table::new(&["H", "reweighting", "reweighting_lower", "reweighting_upper"]);
    for p in &curve.points {
        uniform.push(mass_row(p.horizon, p.ambient_dim, &p.uniform));
        latent.push(mass_row(p.horizon, p.ambient_dim, &p.latent));
        reweight.push(vec![
            p.horizon.into(),
            p.reweighting.unwrap_or(f64::INFINITY).into(),
            p.reweighting_lower.into(),
            p.reweighting_upper.into(),
        ]);
    }
    let landscape = PlantedLandscape::new(g.landscape_dim, g.landscape_mass)?;
    let cmp = one_shot_vs_iterative(
        &landscape,
        g.search.budget(),
        &g.search,
        g.repetitions,
        &root.derive("search"),
    )?;
    let mut search = Table::new(&[
        "arm",
        "mass",
        "budget",
        "repetitions",
        "hits",
        "ratio",
        "ci_low",
        "ci_high",
        "analytic",
    ]);
    for (arm, m, analytic) in [
        ("one_shot", &cmp.one_shot, cmp.one_shot_analytic),
        ("iterative", &cmp.iterative, f64::NAN),
    ] {
        search.push(vec![
            arm.into(),
            cmp.mass.into(),
            cmp.budget.into(),
            cmp.repetitions.into(),
            m.hits.into(),
            m.ratio.into(),
            m.ci_low.into(),
            m.ci_high.into(),
            analytic.into(),
        ]);
    }
    staging.write_table("metrics.csv", &uniform)?;
    staging.write_table("latent.csv", &latent)?;
    staging.write_table("reweighting.csv", &reweight)?;
    staging.write_table("search.csv", &search)?;
    let summary = json!({
        "slope": curve.slope(),
        "r_squared": curve.r_squared(),
        "excluded_horizons": curve.excluded_horizons,
        "ratio_curve": curve.points.iter().map(|p| json!({"H": p.horizon, "ratio": p.uniform.ratio})).collect::<Vec<_>>(),
        "one_shot_rate": cmp.one_shot.ratio,
        "one_shot_analytic": cmp.one_shot_analytic,
        "iterative_rate": cmp.iterative.ratio,
    });
    staging.write_json("geometry.json", &summary)?;
    Ok(CommandOutput::summary(summary))
}

/// `train-flow`: expert demonstrations, then the video, value and action
/// stages in order. Checkpoints are tagged with the hash of the config.
pub fn train_flow(config: &ExperimentConfig, staging: &mut Staging) -> Result<CommandOutput> {
    let root = SeededStream::new(config.seed);
    let data = expert_dataset(
        &config.world,
        &config.valuation,
        config.planner.chunk_len,
        &config.flow,
        &root.derive("data"),
    )?;
    let flows = train_staged(&data, &config.flow, &root.derive("train"))?;
    let hash = config_hash(&config.to_toml()?);
    let mut losses = Table::new(&["stage", "step", "loss"]);
    let mut summary = serde_json::Map::new();
    for report in &flows.reports {
        for (step, loss) in report.losses.iter().enumerate() {
            losses.push(vec![report.stage.to_string().into(), step.into(), (*loss).into()]);
        }
        summary.insert(
            report.stage.to_string(),
            json!({
                "first_loss": report.losses.first(),
                "last_loss": report.losses.last(),
            }),
        );
    }
    for stage in Stage::ALL {
        let stem = format!("flow_{stage}");
        let bin = staging.path(&format!("{stem}.bin"));
        staging.path(&format!("{stem}.json"));
        flows.field(stage).save(&bin.with_extension(""), &hash)?;
    }
    staging.write_table("metrics.csv", &losses)?;
    summary.insert("config_hash".into(), json!(hash));
    summary.insert("demonstrations".into(), json!(data.len()));
    Ok(CommandOutput::summary(serde_json::Value::Object(summary)))
}

/// `reward-check`: per-step reward terms along the expert rollout.
pub fn reward_check(config: &ExperimentConfig, staging: &mut Staging) -> Result<CommandOutput> {
    let world = &config.world;
    let traj = expert_rollout(world, config.flow.expert_kp, config.flow.expert_kd)?;
    let goal_frame = render(world, &world.goal_state())?;
    let rewards = trajectory_rewards(&traj, world, &goal_frame, &config.valuation.weights)?;
    let mut columns = vec!["step".to_string(), "px".into(), "py".into()];
    columns.extend((1..=9).map(|i| format!("c{i}")));
    columns.extend((1..=9).map(|i| format!("w{i}")));
    columns.push("total".into());
    let mut table = Table {
        columns,
        rows: Vec::new(),
    };
    let mut worst: f64 = 0.0;
    for (t, (r, s)) in rewards.iter().zip(&traj.states).enumerate() {
        let mut row: Vec<Cell> = vec![t.into(), s[0].into(), s[1].into()];
        row.extend(r.terms.iter().map(|v| Cell::from(*v)));
        row.extend(r.weighted.iter().map(|v| Cell::from(*v)));
        row.push(r.total.into());
        table.push(row);
        worst = worst.max((r.total - r.weighted.iter().sum::<f64>()).abs());
    }
    staging.write_table("metrics.csv", &table)?;
    Ok(CommandOutput::summary(json!({
        "steps": rewards.len(),
        "max_total_residual": worst,
        "return": rewards.iter().map(|r| r.total).sum::<f64>(),
    })))
}
