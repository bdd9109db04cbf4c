//! Analytical versus Monte Carlo basin of strong convexity for the joint
//! and projected problems.

use sepunmix::experiments::basin::run_basin;
use sepunmix::experiments::{ExperimentConfig, GroupShape};

fn main() -> sepunmix::Result<()> {
    let cfg = ExperimentConfig {
        n_samples: 800,
        shapes: vec![GroupShape { p: 2, q: 1 }],
        samples_per_radius: 20,
        ..ExperimentConfig::default()
    };
    for projected in [false, true] {
        let (runs, _) = run_basin(&cfg, projected)?;
        for r in &runs {
            println!(
                "{} {:?}: analytical {:.3e} <= empirical {:.3e}",
                r.shape.label(),
                r.metric,
                r.noiseless.analytical_radius,
                r.noiseless.empirical_radius
            );
        }
    }
    Ok(())
}
