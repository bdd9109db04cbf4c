//! Recovery error against the stability bounds across noise levels.

use sepunmix::experiments::stability::run_stability;
use sepunmix::experiments::{ExperimentConfig, GroupShape};

fn main() -> sepunmix::Result<()> {
    let cfg = ExperimentConfig {
        n_samples: 800,
        shapes: vec![GroupShape { p: 2, q: 1 }],
        realizations: 5,
        ..ExperimentConfig::default()
    };
    let (runs, _) = run_stability(&cfg)?;
    for run in &runs {
        println!("{}: cond(J) {:.1} cond(J_vp) {:.1}", run.shape.label(), run.cond_j, run.cond_j_vp);
        for l in &run.levels {
            println!(
                "  {:>5.1} dB  joint {:.2e} <= {:.2e}   projected {:.2e} <= {:.2e}",
                l.snr_db, l.mean_rho_joint, l.mean_bound_ls, l.mean_rho_vp, l.mean_bound_vp
            );
        }
    }
    Ok(())
}
