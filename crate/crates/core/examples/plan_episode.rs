//! One receding-horizon episode on the default point-mass world, with the
//! per-iteration refinement history of the first plan.

use wav::episode::run_episode;
use wav::planner::PlannerConfig;
use wav::stream::SeededStream;
use wav::valuation::ValuationConfig;
use wav::worldgen::PointMassWorld;

fn main() -> wav::error::Result<()> {
    let world = PointMassWorld::default();
    let planner = PlannerConfig::default();
    let outcome = run_episode(
        &world,
        &planner,
        &ValuationConfig::default(),
        64,
        planner.chunk_len,
        &SeededStream::new(3),
    )?;

    println!("first plan:");
    println!("  iter  mean elite phi   max phi   best phi   sigma_vid");
    for r in &outcome.traces[0].history {
        println!(
            "  {:>4}  {:>14.3}  {:>8.3}  {:>9.3}  {:>10.4}",
            r.iter, r.mean_elite_phi, r.max_phi, r.best_phi, r.mean_sigma_vid
        );
    }
    let [px, py, vx, vy] = outcome.final_state;
    println!(
        "success {} after {} plans: final ({px:.3}, {py:.3}) velocity ({vx:.3}, {vy:.3}), distance {:.4}, penetration {:.4}",
        outcome.success, outcome.plans, outcome.final_distance, outcome.max_penetration
    );
    println!("mean plan time {:.2} ms", outcome.mean_plan_ms);
    Ok(())
}
