//! How small the feasible set is, and what latent structure buys.
//!
//! Uniform sampling of the trajectory box hits an epsilon-tube around a
//! feasible segment with probability that falls exponentially in the horizon.
//! A generator that samples near the segment keeps a fixed hit rate. A
//! planted rare region shows iterative refinement against blind sampling.

use wav::geolab::{decay_curve, one_shot_vs_iterative, ManifoldFamily, PlantedLandscape};
use wav::harness::GeolabConfig;
use wav::stream::SeededStream;

fn main() -> wav::error::Result<()> {
    let family = ManifoldFamily::default();
    let curve = decay_curve(&[1, 2, 4, 8], &family, 1_000_000, 100_000, &SeededStream::new(0))?;
    println!("{:>2} {:>3}  {:>10}  {:>24}  {:>8}", "H", "D", "uniform", "95% interval", "latent");
    for p in &curve.points {
        println!(
            "{:>2} {:>3}  {:>10.2e}  [{:>9.2e}, {:>9.2e}]  {:>8.4}",
            p.horizon, p.ambient_dim, p.uniform.ratio, p.uniform.ci_low, p.uniform.ci_high, p.latent.ratio
        );
    }
    if let Some(fit) = &curve.fit {
        println!("ln(ratio) per unit horizon {:.3} (R^2 {:.4})", fit.slope, fit.r_squared);
    }
    if !curve.excluded_horizons.is_empty() {
        println!("no uniform hits at H = {:?}", curve.excluded_horizons);
    }

    let search = GeolabConfig::default().search;
    for mass in [0.01, 0.001] {
        let landscape = PlantedLandscape::new(8, mass)?;
        let c = one_shot_vs_iterative(&landscape, search.budget(), &search, 2000, &SeededStream::new(1))?;
        println!(
            "region mass {mass}: one-shot {:.4} (analytic {:.4}), iterative {:.4}",
            c.one_shot.ratio, c.one_shot_analytic, c.iterative.ratio
        );
    }
    Ok(())
}
