//! Loss traces of every solver and formulation from a shared start.

use sepunmix::experiments::traces::run_traces;
use sepunmix::experiments::{ExperimentConfig, GroupShape};

fn main() -> sepunmix::Result<()> {
    let cfg = ExperimentConfig {
        n_samples: 1000,
        shapes: vec![GroupShape { p: 2, q: 2 }],
        trace_max_iters: 2000,
        ..ExperimentConfig::default()
    };
    let (report, _) = run_traces(&cfg)?;
    for run in &report.runs {
        let last = run.trace.rows.last().unwrap();
        println!("u = {:<4} {:<10} {:?} in {} iterations, loss {:.3e}", run.u, run.label(), run.status, run.iterations, last.loss);
    }
    Ok(())
}
