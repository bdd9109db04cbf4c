//! Empirical convergence radius of projected Levenberg-Marquardt next to
//! the convexity radius, for a light and a heavy tail.

use sepunmix::experiments::convergence::convergence_region;
use sepunmix::experiments::{ExperimentConfig, GroupShape};

fn main() -> sepunmix::Result<()> {
    let cfg = ExperimentConfig {
        n_samples: 800,
        samples_per_radius: 10,
        convergence_trials: 6,
        convergence_radius_points: 6,
        ..ExperimentConfig::default()
    };
    for (i, u) in [0.5, 5.0].into_iter().enumerate() {
        let r = convergence_region(&cfg, GroupShape { p: 2, q: 1 }, u, i as u64)?;
        println!(
            "u = {u}: convexity {:.3e}, convergence {:.3e}, success {:?}",
            r.convexity_radius,
            r.convergence_radius(),
            r.convergence.success_rate
        );
    }
    Ok(())
}
