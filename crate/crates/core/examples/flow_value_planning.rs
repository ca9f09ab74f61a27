//! Planning with a learned value: the value field from staged training
//! replaces the analytic rollout evaluator. The plan from each is printed
//! side by side.

use wav::flowmatch::staged::{expert_dataset, train_staged, FlowConfig, FlowValueModel};
use wav::planner::{plan, AnalyticValue, KnotGenerator, PlannerConfig};
use wav::stream::SeededStream;
use wav::valuation::ValuationConfig;
use wav::worldgen::PointMassWorld;

fn main() -> wav::error::Result<()> {
    let world = PointMassWorld::default();
    let valuation = ValuationConfig::default();
    let planner = PlannerConfig::default();
    let flow = FlowConfig {
        dataset_size: 128,
        steps_per_stage: 300,
        euler_steps: 8,
        ..Default::default()
    };
    let stream = SeededStream::new(5);
    let data = expert_dataset(&world, &valuation, planner.chunk_len, &flow, &stream.derive("data"))?;
    let flows = train_staged(&data, &flow, &stream.derive("train"))?;

    let generator = KnotGenerator { world: world.clone() };
    let learned = FlowValueModel::new(world.clone(), flows.value, flow.euler_steps)?;
    let analytic = AnalyticValue::new(world.clone(), valuation)?;

    let with_learned = plan(&generator, &learned, &planner, &stream.derive("plan"))?;
    let with_analytic = plan(&generator, &analytic, &planner, &stream.derive("plan"))?;
    for (name, result) in [("learned", &with_learned), ("analytic", &with_analytic)] {
        let first = &result.action_chunk[0];
        println!(
            "{name:>8} value: best phi {:.3}, first action ({:.3}, {:.3}), {:.2} ms",
            result.score, first[0], first[1], result.timings.total_ms
        );
    }
    Ok(())
}
