//! Success rate and plan time as the number of refinement iterations grows.
//!
//! `cargo run --release --example ablation_sweep -- 50`

use wav::harness::{run_episodes, ExperimentConfig, Sweep};

fn main() -> wav::error::Result<()> {
    let episodes = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let base = ExperimentConfig {
        episodes,
        ..Default::default()
    };
    let sweep = Sweep::parse("K=0,1,3,5,10")?;
    println!("{:>3}  {:>8}  {:>8}", "K", "success", "ms/plan");
    for value in &sweep.values {
        let config = sweep.apply(&base, value)?;
        let outcomes = run_episodes(&config)?;
        let n = outcomes.len() as f64;
        let rate = outcomes.iter().filter(|o| o.success).count() as f64 / n;
        let ms = outcomes.iter().map(|o| o.mean_plan_ms).sum::<f64>() / n;
        println!("{value:>3}  {rate:>8.3}  {ms:>8.2}");
    }
    Ok(())
}
