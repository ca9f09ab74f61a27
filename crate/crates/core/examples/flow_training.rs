//! Flow matching twice over: a 1-D Gaussian transport checked against its
//! closed-form velocity, then the staged video/value/action fields trained on
//! expert demonstrations.

use wav::flowmatch::staged::{expert_dataset, train_staged, FlowConfig};
use wav::flowmatch::toy::{oracle_rmse, standard_grid, train_toy_flow, ToyFlowConfig};
use wav::flowmatch::{euler_sample, GaussianOracleField};
use wav::stream::SeededStream;
use wav::valuation::ValuationConfig;
use wav::worldgen::PointMassWorld;

fn main() -> wav::error::Result<()> {
    let toy = ToyFlowConfig::default();
    let (field, losses) = train_toy_flow(&toy, &SeededStream::new(0))?;
    let oracle = GaussianOracleField::new(toy.base, toy.target)?;
    let (ts, xs) = standard_grid();
    println!(
        "toy flow: loss {:.4} -> {:.4}, velocity RMSE vs oracle {:.4}",
        losses[0],
        losses[losses.len() - 1],
        oracle_rmse(&field, &oracle, &ts, &xs)?
    );
    let mut rng = SeededStream::new(1).rng();
    let ends: Vec<f64> = (0..5000)
        .map(|_| euler_sample(&field, &[rng.standard_normal()], &[], 50).map(|x| x[0]))
        .collect::<Result<_, _>>()?;
    let mean = ends.iter().sum::<f64>() / ends.len() as f64;
    let sd = (ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / ends.len() as f64).sqrt();
    println!("  samples: mean {mean:.3} sd {sd:.3} (target {} {})", toy.target.0, toy.target.1);

    let world = PointMassWorld::default();
    let config = FlowConfig {
        dataset_size: 128,
        steps_per_stage: 300,
        ..Default::default()
    };
    let stream = SeededStream::new(2);
    let data = expert_dataset(&world, &ValuationConfig::default(), 8, &config, &stream.derive("data"))?;
    let flows = train_staged(&data, &config, &stream.derive("train"))?;
    for report in &flows.reports {
        let head: f64 = report.losses[..20].iter().sum::<f64>() / 20.0;
        let tail: f64 = report.losses[report.losses.len() - 20..].iter().sum::<f64>() / 20.0;
        println!("{:>6} stage: mean loss {head:.4} -> {tail:.4}", report.stage.to_string());
    }
    Ok(())
}
