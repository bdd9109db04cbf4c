//! Coherence of generalized Laplace kernels for several tail exponents.

use sepunmix::experiments::coherence::run_tail_decay;
use sepunmix::experiments::ExperimentConfig;

fn main() -> sepunmix::Result<()> {
    let cfg = ExperimentConfig { n_samples: 600, realizations: 5, ..ExperimentConfig::default() };
    let (report, _) = run_tail_decay(&cfg)?;
    for (u, sweep) in report.exponents.iter().zip(&report.sweeps) {
        let last = sweep.cells.iter().filter(|c| c.k == 1).last().unwrap();
        println!("u = {u}: mean sigma_1 {:.3e} at delta {:.1e}", last.mean, last.delta);
    }
    Ok(())
}
