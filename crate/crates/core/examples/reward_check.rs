//! Dense reward terms along the expert rollout.

use wav::flowmatch::staged::expert_rollout;
use wav::valuation::{trajectory_rewards, RewardWeights};
use wav::worldgen::{render, PointMassWorld};

fn main() -> wav::error::Result<()> {
    let world = PointMassWorld {
        horizon: 48,
        ..Default::default()
    };
    let traj = expert_rollout(&world, 3.0, 2.0)?;
    let goal_frame = render(&world, &world.goal_state())?;
    let rewards = trajectory_rewards(&traj, &world, &goal_frame, &RewardWeights::default())?;
    println!("step     px     py      image  proximity     motion   total");
    for (t, (r, s)) in rewards.iter().zip(&traj.states).enumerate().step_by(4) {
        println!(
            "{t:>4}  {:.3}  {:.3}  {:>9.4}  {:>9.4}  {:>9.4}  {:>6.4}",
            s[0],
            s[1],
            r.weighted[..4].iter().sum::<f64>(),
            r.weighted[4],
            r.weighted[5..].iter().sum::<f64>(),
            r.total
        );
    }
    let last = rewards.last().unwrap();
    println!("final total {:.4} (0.5 at a perfect match)", last.total);
    Ok(())
}
